import cmath
import math

import numpy as np
import pytest

from gogsim import network as net
from gogsim.errors import (DisconnectedIslandError, NoFormingDeviceError,
                           ValidationError)
from gogsim.units import PerUnitBase

BASE = PerUnitBase(s_base=500, v_ac_base=320, v_dc_base=640)


def two_bus(length=100.0):
    return net.AcSubgrid("AC", (net.AcBus("a"), net.AcBus("b")),
                         (net.AcBranch("a", "b", length),))


def test_branch_series_impedance_by_hand():
    z = net.AcBranch("a", "b", 100.0).series_impedance_ohm(50.0)
    assert z.real == pytest.approx(8.0)
    assert z.imag == pytest.approx(2 * math.pi * 50 * 0.8e-3 * 100)   # 25.13 ohm


def test_zero_length_branch_rejected():
    with pytest.raises(ValidationError):
        net.build_admittance(two_bus(0.0), BASE)


def test_two_bus_lossless_form():
    Y = net.build_admittance(two_bus(), BASE, lossless=True)
    y = 1 / (1j * 2 * math.pi * 50 * 0.8e-3 * 100 / BASE.z_ac_base)
    np.testing.assert_allclose(Y, [[y, -y], [-y, y]], rtol=1e-12)


def test_admittance_shunts_and_symmetry():
    Y = net.build_admittance(two_bus(), BASE)
    np.testing.assert_allclose(Y, Y.T)
    # row sums are the (capacitive) shunts only
    ysh = 1j * 2 * math.pi * 50 * 0.012e-6 * 50 * BASE.z_ac_base
    np.testing.assert_allclose(Y.sum(axis=1), [ysh, ysh], rtol=1e-12)


def test_admittance_scales_with_frequency():
    y1 = net.build_admittance(two_bus(), BASE, f=1.0, lossless=True)
    y2 = net.build_admittance(two_bus(), BASE, f=0.5, lossless=True)
    np.testing.assert_allclose(y2, 2 * y1)
    with pytest.raises(ValidationError):
        net.build_admittance(two_bus(), BASE, f=0.0)


def test_admittance_detects_split_grid():
    g = net.AcSubgrid("AC", tuple(net.AcBus(i) for i in "abcd"),
                      (net.AcBranch("a", "b", 10), net.AcBranch("c", "d", 10)))
    with pytest.raises(DisconnectedIslandError):
        net.build_admittance(g, BASE)


def cable(*lengths):
    nodes = tuple(net.DcNode(f"n{i}") for i in range(len(lengths) + 1))
    segs = tuple(net.DcSegment(f"n{i}", f"n{i + 1}", L) for i, L in enumerate(lengths))
    return net.DcSubgrid("DC", nodes, segs)


def test_dc_parallel_branch_resistance():
    r_km = 1 / sum(1 / r for r in net.DC_CABLE_R)
    assert r_km == pytest.approx(0.014138, abs=1e-6)
    g = net.dc_equivalent_conductance(cable(100.0), BASE, "n0", "n1")
    assert g == pytest.approx(BASE.z_dc_base / (100 * r_km), rel=1e-12)


def test_dc_series_segments_halve_conductance():
    g1 = net.dc_equivalent_conductance(cable(100.0), BASE, "n0", "n1")
    g2 = net.dc_equivalent_conductance(cable(100.0, 100.0), BASE, "n0", "n2")
    assert g2 == pytest.approx(g1 / 2, rel=1e-12)


def test_dc_conductance_across_islands_rejected():
    g = net.DcSubgrid("DC", tuple(net.DcNode(i) for i in "abcd"),
                      (net.DcSegment("a", "b", 10), net.DcSegment("c", "d", 10)))
    with pytest.raises(DisconnectedIslandError):
        net.dc_equivalent_conductance(g, BASE, "a", "d")
    with pytest.raises(ValidationError):
        net.dc_equivalent_conductance(g, BASE, "a", "a")


def test_dc_laplacian_rows_sum_to_zero():
    G = net.dc_conductance_matrix(cable(50.0, 70.0, 20.0), BASE)
    np.testing.assert_allclose(G.sum(axis=1), 0.0, atol=1e-9)
    assert np.all(np.linalg.eigvalsh(G) > -1e-9)


def test_power_angle_oracle():
    # two sources behind j0.05 each on one bus: b = 10 pu between them
    Y = np.zeros((1, 1), dtype=complex)
    sol = net.solve_ac_network(Y, sources=[(0, 1.0, 0.01, 0.05j), (0, 1.0, 0.0, 0.05j)])
    assert sol.p_src[0] == pytest.approx(10 * math.sin(0.01), rel=1e-9)
    assert sol.p_src.sum() == pytest.approx(0.0, abs=1e-12)


def test_flat_network_has_no_flow():
    Y = net.build_admittance(two_bus(), BASE, lossless=True)
    sol = net.solve_ac_network(Y, sources=[(0, 1.0, 0.0, 0.1j), (1, 1.0, 0.0, 0.1j)])
    np.testing.assert_allclose(sol.p_src, 0.0, atol=1e-12)
    np.testing.assert_allclose(sol.v, 1.0, atol=1e-12)


def test_load_is_served_and_balanced():
    Y = net.build_admittance(two_bus(), BASE, lossless=True)
    sol = net.solve_ac_network(Y, sources=[(0, 1.0, 0.0, 0.1j)], loads=[(1, 0.3, 0.05)])
    assert sol.p_src[0] == pytest.approx(0.3, abs=1e-10)   # lossless network
    assert abs(sol.v[1]) < 1.0


def test_grid_following_only_island_rejected():
    Y = net.build_admittance(two_bus(), BASE)
    with pytest.raises(NoFormingDeviceError):
        net.solve_ac_network(Y, loads=[(1, 0.3, 0.0)], gfl=[(0, 0.3, 0.0)])


def test_grid_following_injection_follows_angle():
    Y = net.build_admittance(two_bus(), BASE, lossless=True)
    sol = net.solve_ac_network(Y, sources=[(0, 1.0, 0.0, 0.1j)], gfl=[(1, 0.2, 0.0)])
    ang = cmath.phase(sol.v[1])
    assert sol.p_gfl[0] == pytest.approx(0.2 * math.cos(ang), rel=1e-12)
    sol2 = net.solve_ac_network(Y, sources=[(0, 1.0, 0.0, 0.1j)], gfl=[(1, 0.2, ang)])
    assert sol2.p_gfl[0] == pytest.approx(0.2, abs=1e-6)


def test_network_model_checks_attachments():
    with pytest.raises(ValidationError):
        net.NetworkModel(BASE, (two_bus(),), (cable(10.0),), ipc_attachments={"X": ("zz", "n0")})
    with pytest.raises(ValidationError):
        net.NetworkModel(BASE, (two_bus(), two_bus()))
    m = net.NetworkModel(BASE, (two_bus(),), (cable(10.0),))
    assert m.ac_locate("b") == (0, 1)
    assert m.dc_locate("n1") == (0, 1)
    with pytest.raises(ValidationError):
        m.dc_locate("q")


def test_per_unit_base():
    assert BASE.z_dc_base == pytest.approx(640 ** 2 / 500)
    assert BASE.energy_pu(24.576e6) == pytest.approx(0.049152)
    with pytest.raises(ValueError):
        PerUnitBase(s_base=-5)

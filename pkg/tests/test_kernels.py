import numpy as np
import pytest

from gogsim import kernels
from gogsim.kernels import BACKENDS


def three_bus():
    y = 1 / 0.1j
    Y = np.array([[2 * y, -y, -y], [-y, 2 * y, -y], [-y, -y, 2 * y]])
    Y[0, 0] += 1 / 0.05j                      # source behind j0.05 at bus 0
    isrc = np.array([1.0 / 0.05j, 0, 0])
    sload = np.array([0, 0.4 + 0.1j, 0.2])
    return Y, isrc, sload


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_ac_newton_residual(name):
    Y, isrc, sload = three_bus()
    gb, gp, gt = np.array([2]), np.array([0.1]), np.array([0.0])
    v, it, ok = BACKENDS[name].ac_newton(Y, isrc, sload, gb, gp, gt, np.ones(3, complex))
    assert ok and it < 10
    F = Y @ v - isrc + np.conj(sload / v)
    F[2] -= 0.1 / abs(v[2])
    assert np.max(np.abs(F)) < 1e-11
    # power into the loads is what was asked for
    assert (v[1] * np.conj(-np.conj(sload[1] / v[1]))) == pytest.approx(-sload[1])


def test_ac_newton_dead_start_fails():
    Y, isrc, sload = three_bus()
    e = np.array([], dtype=np.int64)
    _, _, ok = BACKENDS["python"].ac_newton(Y, isrc, sload, e, np.array([]), np.array([]),
                                            np.zeros(3, complex))
    assert not ok


def test_backends_solve_identically():
    if "compiled" not in BACKENDS:
        pytest.skip("compiled kernel not built")
    Y, isrc, sload = three_bus()
    args = (Y, isrc, sload, np.array([2]), np.array([0.1]), np.array([0.3]), np.ones(3, complex))
    va, _, _ = BACKENDS["python"].ac_newton(*args)
    vb, _, _ = BACKENDS["compiled"].ac_newton(*args)
    np.testing.assert_allclose(va, vb, atol=1e-13)


def test_backend_override(monkeypatch):
    monkeypatch.setenv("GOGSIM_BACKEND", "python")
    assert kernels.default_backend() == "python"
    monkeypatch.setenv("GOGSIM_BACKEND", "bogus")
    assert kernels.default_backend() in BACKENDS
    with pytest.raises(ValueError, match="unavailable"):
        kernels.make_kernel({}, backend="fortran")

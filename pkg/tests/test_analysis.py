import numpy as np
import pytest

from gogsim import analysis as an
from gogsim.errors import NotAtEquilibrium, ValidationError
from gogsim.scenario_io import load_scenario
from gogsim.sim import Snapshot, settle

from conftest import with_changes

HD = dict(b_ac=10.0, k_ac=0.05, g_dc=50.0, k_dc=0.05,
          k_p_ac=0.05, k_p_dc=0.05, k_w_ac=0.5, k_w_dc=0.5)
EB = dict(HD, k_p_ac=0.0125, k_p_dc=0.025)


def test_hybrid_dc_only_scalar():
    # kappa_dc = g k_w / (1 + g k_dc + g k_p) = 25 / 6
    A = an.closed_loop_hybrid(HD, "dc_only").A
    assert A.shape == (1, 1)
    assert A[0, 0] == pytest.approx(-25 / 6)


def test_hybrid_both_by_substitution():
    m = an.closed_loop_hybrid(HD, "both")
    kap = an.kappa_dc(50, 0.05, 0.05, 0.5)
    np.testing.assert_allclose(m.A, [[-1.0, 0.5], [-10.0, -kap]])
    assert m.labels == ["delta", "dW"] and m.provenance == "analytic_closed_form"


def test_hybrid_without_energy_coupling_is_triangular():
    A = an.closed_loop_hybrid(dict(HD, k_w_ac=0.0), "both").A
    assert A[0, 1] == 0.0
    np.testing.assert_allclose(sorted(np.linalg.eigvals(A).real), sorted(np.diag(A)))


def test_energy_balancing_dc_only_chain():
    assert an.gamma_dc(50, 0.05) == pytest.approx(50 * (1 - 2.5 / 3.5))
    A = an.closed_loop_energy_balancing(EB, "dc_only").A
    g = 50 * (1 - 2.5 / 3.5)
    assert A[0, 0] == pytest.approx(-g * 0.5 / (1 + g * 0.025))
    assert A[0, 0] == pytest.approx(-5.2632, abs=1e-4)


def test_energy_balancing_ac_only_without_source_droop():
    m = an.closed_loop_energy_balancing(dict(EB, k_ac=0.0), "ac_only")
    np.testing.assert_allclose(m.A, [[0.0, 0.5], [-10.0, -10 * 0.0125]])
    rep = an.certify(m)
    assert rep.routh_hurwitz["trace_negative"] and rep.routh_hurwitz["det_positive"]
    # at the hypothesis boundary the derived matrix is still Hurwitz
    edge = an.closed_loop_energy_balancing(dict(EB, k_ac=0.0, k_w_ac=0.0125), "ac_only")
    assert an.certify(edge).verdict == "stable"


def test_omega_base_scales_frequency_gains():
    a = an.closed_loop("hybrid_droop", HD, "both", omega_base=2.0).A
    b = an.closed_loop("hybrid_droop", dict(HD, k_p_ac=0.1, k_w_ac=1.0, k_ac=0.1), "both").A
    np.testing.assert_allclose(a, b)


def test_closed_loop_input_errors():
    with pytest.raises(ValidationError):
        an.closed_loop("hybrid_droop", HD, "sideways")
    with pytest.raises(ValidationError):
        an.closed_loop("hybrid_droop", dict(HD, b_ac=0.0), "ac_only")
    with pytest.raises(ValidationError):
        an.closed_loop("ac_gfm", HD)
    with pytest.raises(ValidationError):
        an.closed_loop("energy_balancing", {"b_ac": 1.0}, "ac_only")


def test_certify_oracles():
    rep = an.certify(an.LinearModel([[-1, 0.5], [-10, -0.0833]], ["a", "b"], "test"))
    lam = sorted(rep.eigenvalues, key=lambda z: z.imag)
    assert lam[1].real == pytest.approx(-0.54165, abs=1e-5)
    assert lam[1].imag == pytest.approx(2.18859, abs=1e-5)
    assert rep.verdict == "stable"
    assert an.certify(an.LinearModel(np.zeros((2, 2)), ["a", "b"], "t")).verdict == "marginal"
    assert an.certify(an.LinearModel(np.diag([1.0, -1.0]), ["a", "b"], "t")).verdict == "unstable"
    d = rep.as_dict()
    assert d["verdict"] == "stable" and len(d["eigenvalues"]) == 2


def test_linear_model_validation():
    with pytest.raises(ValueError):
        an.LinearModel(np.ones((2, 3)), ["a", "b"], "t")
    with pytest.raises(ValueError):
        an.LinearModel(np.ones((2, 2)), ["a"], "t")
    with pytest.raises(ValueError):
        an.LinearModel([[np.nan]], ["a"], "t")


def test_sweep_default_has_no_counterexamples():
    rep = an.theorem1_sweep(1000, 42)
    assert rep["counterexamples"] == []
    assert rep["cases"] == 6000
    assert rep["max_real_worst"] < 0


def test_sweep_filters_draws_outside_hypothesis():
    bad = dict(EB, k_p_ac=0.3, k_w_ac=0.2)
    rep = an.theorem1_sweep(5, 1, extra_draws=[bad])
    assert [o["control"] for o in rep["outside_hypothesis"]] == ["energy_balancing"]
    assert rep["counterexamples"] == []
    assert rep["cases"] == 6 * 6 - 3


def test_sweep_rejects_bad_ranges():
    with pytest.raises(ValidationError):
        an.theorem1_sweep(1, ranges={"b_ac": (-1.0, 1.0)})


def test_reference_gains_stable_in_all_cases():
    cases = an.theorem_cases(load_scenario("single_ipc_energy_balancing"))
    assert len(cases) == 6
    assert {c["verdict"] for c in cases} == {"stable"}
    assert {(c["control"], c["connection"]) for c in cases} == {
        (a, b) for a in an.CONTROLS for b in an.CONNECTIONS}


def test_numeric_jacobian_rejects_unsettled_snapshot(eb_single):
    snap = settle(eb_single)
    x = snap.x.copy()
    x[snap.system.state_index["MMC.W"]] += 1e-3
    with pytest.raises(NotAtEquilibrium):
        an.numeric_jacobian(Snapshot(0.0, x, snap.obs, 1.0, snap.system))


def test_numeric_jacobian_is_stable_at_settled_point(eb_single):
    model = an.numeric_jacobian(settle(eb_single))
    assert model.provenance == "numeric_jacobian"
    assert an.certify(model).verdict == "stable"


def test_compare_models():
    a = an.LinearModel([[1.0, 2.0], [0.0, 4.0]], ["x", "y"], "t")
    b = an.LinearModel([[1.0, 2.2], [0.0, 4.0]], ["x", "y"], "t")
    assert an.compare_models(b, a) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        an.compare_models(a, an.LinearModel([[1.0]], ["x"], "t"))


def fig_edges(alpha, omega=(1, 1, 1, 1)):
    layout = [("IPC1", "AC1", "DC1"), ("IPC2", "AC2", "DC1"),
              ("IPC3", "AC1", "DC2"), ("IPC4", "AC2", "DC2")]
    return [(n, ac, dc, a * 0.4, 0.4, w) for (n, ac, dc), a, w in zip(layout, alpha, omega)]


@pytest.mark.parametrize("alpha", [(1, 1, 1, 1), (1, 2, 0.5, 1)])
def test_consistent_alpha_ratios(alpha):
    rep = an.gain_consistency(fig_edges(alpha))
    assert rep["consistent"] and rep["violations"] == []


def test_inconsistent_alpha_pair_reported():
    rep = an.gain_consistency(fig_edges((1, 1, 2, 1)))
    assert not rep["consistent"]
    (v,) = rep["violations"]
    assert v["kind"] == "alpha_ratio"
    assert set(v["pair"]) == {"IPC3", "IPC4"}


def test_unequal_frequency_setpoints_reported():
    rep = an.gain_consistency(fig_edges((1, 1, 1, 1), omega=(1, 1, 0.99, 1)))
    assert [v["kind"] for v in rep["violations"]] == ["omega_set"]


def test_gain_audit_needs_shared_dc_grid(eb_single):
    with pytest.raises(ValidationError):
        an.check_gain_consistency(eb_single)
    with pytest.raises(ValidationError):
        an.gain_consistency(fig_edges((1, 1, 1, 1))[:1])


def test_relations_vanish_at_nominal(eb_quiet):
    rep = an.steady_state_relations(settle(eb_quiet), "MMC")
    assert rep["controller"] == "energy_balancing"
    assert rep["max_abs"] < 1e-9


def test_hybrid_relation_needs_equal_power_setpoints(eb_quiet):
    def edit(d):
        d["ipcs"][0]["controller"] = {"type": "hybrid_droop", "p_ac_set": 0.3, "p_dc_set": 0.2}
    sc = with_changes(eb_quiet, edit)
    sc2 = with_changes(sc, lambda d: d.update(options=dict(d["options"], init="flat")))
    snap = Snapshot(0.0, *_flat(sc2))
    with pytest.raises(ValidationError, match="p_dc_set == p_ac_set"):
        an.steady_state_relations(snap, "MMC")
    with pytest.raises(ValidationError):
        an.steady_state_relations(snap, "U1")


def _flat(sc):
    from gogsim.sim import prepare
    sysm, x = prepare(sc)
    _, obs = sysm.rhs(x)
    return x, obs, 0.0, sysm


def test_circulating_power_from_route_flows():
    sc = load_scenario("four_ipc_consistent")
    vals = {"IPC1.P_dc": -0.2, "IPC3.P_dc": 0.05}
    circ, route = an.circulating_power(sc, type("R", (), {"final": vals.get})())
    assert route == {"DC1": 0.2, "DC2": -0.05}
    assert circ == pytest.approx(0.05)

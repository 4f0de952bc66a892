import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from gogsim import analysis as an
from gogsim.scenario_io import dump_scenario, load_scenario, parse_scenario

from conftest import with_changes

gain = st.floats(1e-3, 1e2, allow_nan=False, allow_infinity=False)
KEYS = ("b_ac", "k_ac", "g_dc", "k_dc", "k_p_ac", "k_p_dc", "k_w_ac", "k_w_dc")
params = st.fixed_dictionaries({k: gain for k in KEYS})


@settings(max_examples=200, deadline=None)
@given(params, st.sampled_from(an.CONTROLS), st.sampled_from(an.CONNECTIONS))
def test_positive_gains_are_hurwitz(p, ctl, con):
    if ctl == "energy_balancing":
        assume(p["k_w_ac"] > p["k_p_ac"] * (1 + 1e-9))
    rep = an.certify(an.closed_loop(ctl, p, con))
    assert rep.verdict == "stable"
    assert rep.max_real < 0


@settings(max_examples=100, deadline=None)
@given(params, st.floats(-3, 3), st.floats(0.2, 5))
def test_eigenvalues_invariant_under_similarity(p, shear, scale):
    A = an.closed_loop("hybrid_droop", p, "both").A
    T = np.array([[scale, shear], [0.0, 1.0]])
    B = T @ A @ np.linalg.inv(T)
    la = np.sort_complex(np.linalg.eigvals(A))
    lb = np.sort_complex(np.linalg.eigvals(B))
    np.testing.assert_allclose(lb, la, rtol=1e-6, atol=1e-8 * np.abs(A).max())


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2 ** 32 - 1))
def test_sweep_counts_and_reproducibility(n, seed):
    a = an.theorem1_sweep(n, seed)
    assert a["cases"] == 6 * n and a["counterexamples"] == []
    b = an.theorem1_sweep(n, seed)
    assert a["max_real_worst"] == b["max_real_worst"]


EB = load_scenario("single_ipc_energy_balancing")


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(1.0, 500.0), st.floats(0.0, 10.0))
def test_scenario_round_trip(load, length, t):
    def edit(d):
        d["devices"][2]["p"] = load
        d["ac_subgrids"][0]["branches"][0]["length_km"] = length
        d["events"][0]["t"] = t
    sc = with_changes(EB, edit)
    assert parse_scenario(dump_scenario(sc)) == sc


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 5.0))
def test_frequency_base_equivalent_to_scaled_gains(wb):
    p = dict(b_ac=10.0, k_ac=0.05, g_dc=50.0, k_dc=0.05,
             k_p_ac=0.05, k_p_dc=0.05, k_w_ac=0.5, k_w_dc=0.5)
    a = an.closed_loop("hybrid_droop", p, "ac_only", omega_base=wb).A
    b = an.closed_loop("hybrid_droop", dict(p, k_p_ac=wb * 0.05, k_w_ac=wb * 0.5,
                                            k_ac=wb * 0.05), "ac_only").A
    np.testing.assert_allclose(a, b, rtol=1e-12)

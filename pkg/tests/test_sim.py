from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resilient_ncs.errors import PreconditionFailed
from resilient_ncs.model import (MUTUALLY_EXCLUSIVE, AttackParameters, GainSet, Scenario,
                                 SimulationSettings, SwitchedPlant)
from resilient_ncs.sim import (MIXED, S1, S2, TIME, MixedLaw, asynchrony_only_under_dos,
                               channel_law_residual, mode_law_holds, monte_carlo, round_robin,
                               run_mixed, run_time_switching, sample_attack_trace)
from resilient_ncs.synthesis import design_mixed

from conftest import ATTACK, EX2, EX2_GAINS, EX3, EX3_GAINS, MIXED2, random_instance

FREE = AttackParameters(0.0, 0.0, 0.0)


def test_trace_degenerate_laws():
    t = sample_attack_trace(AttackParameters(0.0, 0.3, 0.1), 2, 500, seed=1)
    assert not t.alpha.any() and t.beta.any()
    t = sample_attack_trace(AttackParameters(1.0, 1.0, 0.1), 2, 200, seed=1)
    assert t.alpha.all() and t.beta.all()


def test_trace_frequencies():
    H = 10 ** 5
    t = sample_attack_trace(AttackParameters(0.5, 0.5, 0.1), 2, H, seed=3)
    sd = math.sqrt(0.25 / H)
    assert abs(t.alpha.mean() - 0.5) < 3 * sd and abs(t.beta.mean() - 0.5) < 3 * sd


def test_trace_reproducible_and_run_indexed():
    a = sample_attack_trace(ATTACK, 2, 300, seed=9, run_index=4)
    b = sample_attack_trace(ATTACK, 2, 300, seed=9, run_index=4)
    c = sample_attack_trace(ATTACK, 2, 300, seed=9, run_index=5)
    assert np.array_equal(a.alpha, b.alpha) and np.array_equal(a.payload, b.payload)
    assert not np.array_equal(a.payload, c.payload)


@pytest.mark.parametrize("policy", ["sphere", "ball", "constant"])
def test_payload_bound(policy):
    t = sample_attack_trace(ATTACK, 3, 2000, seed=0, payload=policy)
    norms = np.linalg.norm(t.payload, axis=1)
    assert np.all(norms <= 0.13 * (1 + 1e-12))
    if policy != "ball":
        assert np.allclose(norms, 0.13)


def test_mutually_exclusive_bits():
    t = sample_attack_trace(AttackParameters(0.3, 0.4, 0.1, MUTUALLY_EXCLUSIVE), 2, 5000, seed=2)
    assert not np.any(t.alpha & t.beta)


def test_bad_inputs():
    with pytest.raises(PreconditionFailed):
        sample_attack_trace(ATTACK, 2, 0, seed=0)
    with pytest.raises(PreconditionFailed):
        sample_attack_trace(ATTACK, 2, 10, seed=0, payload="adaptive")


def test_round_robin():
    assert round_robin(2, 3, 8).tolist() == [0, 0, 0, 1, 1, 1, 0, 0]
    assert round_robin(1, 2, 4).tolist() == [0, 0, 0, 0]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0, 0.6), st.floats(0, 0.9), st.integers(1, 6),
       st.sampled_from(["independent", MUTUALLY_EXCLUSIVE]))
def test_time_switching_invariants(seed, ab, bb, tau_d, coupling):
    if coupling == MUTUALLY_EXCLUSIVE and ab + bb > 1:
        bb = 1 - ab
    at = AttackParameters(ab, bb, 0.2, coupling)
    plant, gains = random_instance(np.random.default_rng(seed))
    trace = sample_attack_trace(at, 2, 60, seed)
    tr = run_time_switching(plant, gains, tau_d, trace, [1.0, -0.5])
    assert channel_law_residual(tr, trace.payload) == 0.0
    assert mode_law_holds(tr)
    assert asynchrony_only_under_dos(tr)
    assert np.allclose(tr.u, np.einsum("kij,kj->ki", np.stack([gains[s] for s in tr.sigma_bar]), tr.xbar))


def test_always_jammed_freezes_channel():
    trace = sample_attack_trace(AttackParameters(0.2, 1.0, 0.1), 2, 30, seed=0)
    tr = run_time_switching(EX3, EX3_GAINS, 4, trace, [1.0, 2.0])
    assert np.all(tr.xbar == [1.0, 2.0])
    assert np.all(tr.sigma_bar == 0)
    assert np.allclose(tr.u, tr.u[0])


def test_attack_free_single_mode_decays():
    plant, gains = random_instance(np.random.default_rng(0), m=1, radius=0.7)
    trace = sample_attack_trace(FREE, 2, 80, seed=0)
    tr = run_time_switching(plant, gains, 1, trace, [1.0, 1.0])
    Acl = plant.modes[0].A + plant.modes[0].B @ gains[0]
    want = np.array([np.linalg.matrix_power(Acl, k) @ [1.0, 1.0] for k in range(81)])
    assert np.allclose(tr.x, want, atol=1e-12)
    assert np.linalg.norm(tr.x[-1]) < 1e-6


def _scenario(plant, gains, attack, runs=5, horizon=40, **kw):
    return Scenario(plant, attack, gains=gains,
                    simulation=SimulationSettings(runs=runs, horizon=horizon, tau_d=kw.pop("tau_d", 8), **kw))


def test_monte_carlo_single_run_matches_trace():
    sc = _scenario(EX3, EX3_GAINS, ATTACK, runs=1)
    agg = monte_carlo(sc, seed=7)
    tr = run_time_switching(EX3, EX3_GAINS, 8, sample_attack_trace(ATTACK, 2, 40, 7, 0), np.ones(2))
    assert np.array_equal(agg.mean_state_norm, np.linalg.norm(tr.x, axis=1))
    assert np.allclose(agg.mean_square_norm, np.sum(tr.x_tilde ** 2, axis=1), rtol=1e-15)


def test_monte_carlo_attack_free_is_deterministic():
    sc = _scenario(EX3, EX3_GAINS, FREE, runs=1000, horizon=30)
    agg = monte_carlo(sc, seed=1)
    tr = run_time_switching(EX3, EX3_GAINS, 8, sample_attack_trace(FREE, 2, 30, 0), np.ones(2))
    assert np.allclose(agg.mean_square_norm, np.sum(tr.x_tilde ** 2, axis=1), rtol=1e-12, atol=0)


def test_monte_carlo_worker_independence():
    sc = _scenario(EX3, EX3_GAINS, ATTACK, runs=23, horizon=25)
    one = monte_carlo(sc, seed=4, workers=1)
    three = monte_carlo(sc, seed=4, workers=3)
    assert np.array_equal(one.mean_square_norm, three.mean_square_norm)
    assert np.array_equal(one.mean_state_norm, three.mean_state_norm)


def test_monte_carlo_requires_inputs():
    sc = Scenario(EX3, ATTACK, gains=EX3_GAINS)
    with pytest.raises(PreconditionFailed):
        monte_carlo(sc, runs=2, horizon=5)
    with pytest.raises(PreconditionFailed):
        monte_carlo(sc, law=MIXED, runs=2, horizon=5)
    with pytest.raises(PreconditionFailed):
        monte_carlo(sc, law="random", runs=2, horizon=5, tau_d=3)


@pytest.fixture(scope="module")
def ex2_mixed():
    return design_mixed(EX2, EX2_GAINS, ATTACK, MIXED2)


def test_mixed_zero_payload_stays_in_s1(ex2_mixed):
    law = MixedLaw.from_design(ex2_mixed, gamma_bar=0.0)
    trace = sample_attack_trace(AttackParameters(0.13, 0.13, 0.0), 2, 100, seed=0)
    tr = run_mixed(EX2, law, trace, [1.0, 1.0])
    assert set(tr.strategy) == {S1}


def test_mixed_s2_switches_decrease_q(ex2_mixed):
    # threshold above every reachable |x|^2 forces S2 for the whole run
    law = MixedLaw.from_design(ex2_mixed, gamma_bar=0.13, threshold=1e6)
    trace = sample_attack_trace(FREE, 2, 80, seed=0)
    tr = run_mixed(EX2, law, trace, [1.0, -1.0])
    assert set(tr.strategy) == {S2}
    assert np.all(tr.u == 0.0)
    switches = [k for k in range(1, 80) if tr.sigma[k] != tr.sigma[k - 1]]
    assert switches
    for k in switches:
        x = tr.x[k]
        before = x @ ex2_mixed.Q[tr.sigma[k - 1]] @ x
        after = x @ ex2_mixed.Q[tr.sigma[k]] @ x
        assert 1.05 * after < before


def test_mixed_strategy_guard(ex2_mixed):
    law = MixedLaw.from_design(ex2_mixed, gamma_bar=0.13)
    trace = sample_attack_trace(ATTACK, 2, 200, seed=5)
    tr = run_mixed(EX2, law, trace, [1.0, 1.0])
    assert tr.strategy[0] == S1
    for k, tag in enumerate(tr.strategy):
        if tag == S2:
            assert np.all(tr.u[k] == 0.0)
        if tag == S1 and k > 0 and tr.strategy[k - 1] == S2:
            assert tr.x[k] @ tr.x[k] > law.threshold


def test_mixed_converges(ex2_mixed):
    sc = Scenario(EX2, ATTACK, gains=EX2_GAINS, simulation=SimulationSettings(runs=50, horizon=300))
    agg = monte_carlo(sc, law=MIXED, mixed=ex2_mixed, seed=0)
    assert agg.mean_square_state[-1] < 1e-12

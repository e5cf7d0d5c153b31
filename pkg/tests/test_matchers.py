from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_instance
from oblimatch import _accel
from oblimatch.analytic import eval_g
from oblimatch.bench import (
    enumerate_exact_expectation,
    enumerate_random_preference_expectation,
    estimate_ratio,
    gen_dyer_frieze,
    gen_four_vertex,
    gen_random_weighted,
)
from oblimatch.errors import PreconditionError, ProtocolViolation
from oblimatch.graph import Instance, check_matching, max_matching
from oblimatch.matchers import (
    ACTIVE,
    ALGORITHMS,
    BUSY,
    IRP,
    MATCHED,
    MRG,
    NO_EDGE,
    PASSIVE,
    PERTURBED_GREEDY,
    RANDOM_PAIRS,
    RANKING,
    RDO,
    UNMATCHED,
    WEIGHT_GREEDY,
    AlgoConfig,
    ProbeSession,
    check_preferences,
    fixed_order_ranks,
    mates_weight,
    preferences_from_keys,
    run_algorithm,
    run_perturbed_greedy,
    run_rdo,
    run_weight_greedy,
    simulate_mates,
)


def _config(name: str, n: int, rng: np.random.Generator) -> AlgoConfig:
    if name == RDO:
        return AlgoConfig(RDO, prefs=preferences_from_keys(rng.random((n, n))))
    if name == PERTURBED_GREEDY:
        return AlgoConfig(PERTURBED_GREEDY, g=eval_g)
    if name == IRP:
        return AlgoConfig(IRP, order=tuple(rng.permutation(n)))
    return AlgoConfig(name)


def cycle(n: int) -> Instance:
    return Instance.unweighted(n, [(i, (i + 1) % n) for i in range(n)])


# -- probe protocol ------------------------------------------------------------


def test_probe_outcomes(triangle_with_tail):
    s = ProbeSession(triangle_with_tail)
    assert s.probe(0, 3) == NO_EDGE
    assert s.probe(1, 2) == MATCHED
    assert s.probe(2, 3) == BUSY
    assert s.mate.tolist() == [-1, 2, 1, -1]
    assert [o for _, o in s.transcript] == [NO_EDGE, MATCHED, BUSY]


def test_probe_protocol_violations(triangle_with_tail):
    s = ProbeSession(triangle_with_tail, removed=[3])
    s.probe(0, 1)
    with pytest.raises(ProtocolViolation):
        s.probe(1, 0)
    with pytest.raises(ProtocolViolation):
        s.probe(2, 3)
    with pytest.raises(ProtocolViolation):
        s.probe(2, 2)
    s.close()
    with pytest.raises(ProtocolViolation):
        s.probe(0, 2)


def test_config_preconditions():
    with pytest.raises(PreconditionError):
        AlgoConfig("nope")
    with pytest.raises(PreconditionError):
        AlgoConfig(PERTURBED_GREEDY)
    with pytest.raises(PreconditionError):
        AlgoConfig(IRP)
    with pytest.raises(PreconditionError):
        check_preferences(np.array([[1, 1], [0, 2], [0, 1]]), 3)
    with pytest.raises(PreconditionError):
        run_algorithm(cycle(4), AlgoConfig(MRG))


def test_fixed_order_ranks_realize_the_order():
    y = fixed_order_ranks([2, 0, 1], 3)
    assert np.argsort(y).tolist() == [2, 0, 1]
    with pytest.raises(PreconditionError):
        fixed_order_ranks([0, 0, 1], 3)


# -- runs ----------------------------------------------------------------------


@pytest.mark.parametrize("name", ALGORITHMS)
def test_runs_are_valid_maximal_and_deterministic(name):
    rng = np.random.default_rng(5)
    for _ in range(20):
        inst = random_instance(rng, 2, 9)
        config = _config(name, inst.n, rng)
        seed = int(rng.integers(0, 1000))
        a = run_algorithm(inst, config, seed=seed)
        b = run_algorithm(inst, config, seed=seed)
        check_matching(inst, a.matching)
        assert a.matching == b.matching
        assert a.transcript == b.transcript
        free = np.flatnonzero(a.mate < 0)
        assert not inst.adjacency_matrix[np.ix_(free, free)].any()
        for v in range(inst.n):
            u = a.mate[v]
            if u < 0:
                assert a.roles[v] == UNMATCHED
            else:
                assert {a.roles[v], a.roles[u]} == {ACTIVE, PASSIVE}


@pytest.mark.parametrize("name", ALGORITHMS)
@pytest.mark.parametrize("accel", [False, None])
def test_fast_path_matches_reference_engine(name, accel):
    rng = np.random.default_rng(17)
    for _ in range(8):
        inst = random_instance(rng, 2, 9)
        config = _config(name, inst.n, rng)
        removed = [int(rng.integers(0, inst.n))] if rng.random() < 0.3 else []
        mates = simulate_mates(inst, config, 99, 12, removed=removed, accel=accel)
        for t in range(12):
            run = run_algorithm(inst, config, seed=(99, t), removed=removed)
            assert np.array_equal(mates[t], run.mate)
        assert np.allclose(mates_weight(inst, mates), [run_algorithm(inst, config, seed=(99, t), removed=removed).matching.weight for t in range(12)])


def test_fast_path_is_schedule_independent():
    inst = gen_random_weighted(9, 0.5, 4)
    config = AlgoConfig(RANDOM_PAIRS)
    whole = simulate_mates(inst, config, 3, 10)
    tail = simulate_mates(inst, config, 3, 4, first_trial=6)
    assert np.array_equal(whole[6:], tail)


def test_rdo_follows_preferences():
    # Path 0-1-2: vertex 1 decides first and prefers 2.
    inst = Instance.unweighted(3, [(0, 1), (1, 2)])
    prefs = np.array([[1, 2], [2, 0], [1, 0]])
    run = run_rdo(inst, prefs, np.array([0.5, 0.1, 0.9]))
    assert run.matching.pairs == ((1, 2),)
    assert run.roles[1] == ACTIVE and run.roles[2] == PASSIVE


def test_ranking_uses_ranks_as_preferences():
    inst = Instance.unweighted(3, [(0, 1), (1, 2)])
    run = run_algorithm(inst, AlgoConfig(RANKING), y=np.array([0.3, 0.1, 0.2]))
    assert run.matching.pairs == ((1, 2),)


@given(seed=st.integers(0, 2**31 - 1))
def test_rdo_equals_perturbed_greedy_on_unweighted(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, 2, 10, weighted=False)
    prefs = preferences_from_keys(rng.random((inst.n, inst.n)))
    y = rng.random(inst.n)
    if rng.random() < 0.3:
        y = np.round(y, 1)
    a = run_rdo(inst, prefs, y)
    for g in (eval_g, lambda t: np.zeros_like(np.asarray(t, dtype=float)), lambda t: np.floor(np.asarray(t) * 4) / 8):
        b = run_perturbed_greedy(inst, g, y, prefs)
        assert a.matching == b.matching


def test_weight_greedy_is_half_approximate():
    for seed in range(40):
        inst = gen_random_weighted(10, 0.5, seed, "exponential")
        assert run_weight_greedy(inst).matching.weight >= 0.5 * max_matching(inst).weight - 1e-12


# -- exact enumeration against Monte Carlo ------------------------------------


def _mc_mean(inst, config, trials, seed=1):
    mates = simulate_mates(inst, config, seed, trials)
    w = mates_weight(inst, mates)
    return w.mean(), w.std(ddof=1) / np.sqrt(trials)


def test_five_cycle_rdo_enumeration_matches_monte_carlo():
    inst = cycle(5)
    prefs = preferences_from_keys(np.tile(np.arange(5.0), (5, 1)))
    exact = enumerate_exact_expectation(inst, prefs)
    mean, se = _mc_mean(inst, AlgoConfig(RDO, prefs=prefs), 40000)
    assert abs(mean - float(exact)) < 4 * se + 1e-9


def test_six_cycle_ranking_enumeration_matches_monte_carlo():
    inst = cycle(6)
    exact = enumerate_exact_expectation(inst, algo=RANKING)
    mean, se = _mc_mean(inst, AlgoConfig(RANKING), 40000)
    assert abs(mean - float(exact)) < 4 * se + 1e-9


def test_four_vertex_mrg_enumeration():
    inst, _ = gen_four_vertex()
    exact = enumerate_random_preference_expectation(inst)
    assert exact == Fraction(19, 12)
    mean, se = _mc_mean(inst, AlgoConfig(MRG), 40000)
    assert abs(mean - float(exact)) < 4 * se


def test_small_dyer_frieze_irp_enumeration():
    inst, order = gen_dyer_frieze(4)
    exact = enumerate_random_preference_expectation(inst, order=order)
    assert exact == Fraction(25, 9)
    mean, se = _mc_mean(inst, AlgoConfig(IRP, order=tuple(order)), 40000)
    assert abs(mean - float(exact)) < 4 * se


def test_four_vertex_rdo_is_exactly_five_quarters():
    inst, prefs = gen_four_vertex()
    assert enumerate_exact_expectation(inst, prefs) == Fraction(5, 4)


def test_unweighted_algorithms_are_half_approximate_per_trial():
    rng = np.random.default_rng(8)
    for name in (RDO, MRG, RANKING, RANDOM_PAIRS, WEIGHT_GREEDY):
        inst = random_instance(rng, 4, 12, weighted=False)
        est = estimate_ratio(inst, _config(name, inst.n, rng), 200, 0)
        assert est.min >= 0.5


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba unavailable or disabled")
def test_numba_and_numpy_estimates_are_identical():
    inst = gen_random_weighted(12, 0.4, 2)
    config = AlgoConfig(PERTURBED_GREEDY, g=eval_g)
    a = estimate_ratio(inst, config, 300, 5, accel=True)
    b = estimate_ratio(inst, config, 300, 5, accel=False)
    assert a == b

import itertools

import numpy as np
import pytest

from conftest import random_instance
from oblimatch import duals
from oblimatch.analytic import eval_g
from oblimatch.bench import enumerate_exact_expectation, gen_four_vertex
from oblimatch.errors import PreconditionError
from oblimatch.factor_lp import GENERAL, build_bipartite_lp, build_general_lp, extract_step_g, extract_step_h, solve_lp
from oblimatch.graph import Instance, max_matching, perfect_partners
from oblimatch.matchers import (
    PERTURBED_GREEDY,
    RDO,
    AlgoConfig,
    preferences_from_keys,
    run_algorithm,
    run_rdo,
)


def const(value):
    def f(y):
        return np.full(np.shape(y), value, dtype=np.float64)

    return f


GENERAL_GF = duals.GainFunctions(eval_g, const(0.05))


def _setup(inst, rng):
    mode = duals.default_mode(inst)
    if mode == duals.WEIGHTED:
        return mode, AlgoConfig(PERTURBED_GREEDY, g=eval_g), duals.GainFunctions.weighted(eval_g)
    config = AlgoConfig(RDO, prefs=preferences_from_keys(rng.random((inst.n, inst.n))))
    if mode == duals.BIPARTITE:
        return mode, config, duals.GainFunctions.bipartite(eval_g)
    return mode, config, GENERAL_GF


# -- sharing rules on hand-made runs ---------------------------------------------


def test_bipartite_single_edge():
    inst = Instance.unweighted(2, [(0, 1)], [0, 1])
    gf = duals.GainFunctions.bipartite(const(0.4))
    run = run_rdo(inst, np.array([[1], [0]]), np.array([0.2, 0.7]))
    alpha = duals.share_gains(duals.BIPARTITE, inst, run, gf)
    assert alpha.tolist() == [0.4, 0.6]


def test_empty_matching_gives_zero_vector():
    inst = Instance.unweighted(3, [])
    run = run_rdo(inst, preferences_from_keys(np.zeros((3, 3))), np.array([0.1, 0.2, 0.3]))
    assert not duals.share_gains(duals.BIPARTITE, inst, run, duals.GainFunctions.bipartite(eval_g)).any()


def _zuv():
    # z=0, u=1, v=2; edges z-u and u-v; the maximum matching is {u, v}.
    inst = Instance.unweighted(3, [(0, 1), (1, 2)])
    prefs = np.array([[1, 2], [0, 2], [1, 0]])
    return inst, prefs, np.array([0.1, 0.5, 0.9])


def test_victim_found_by_rerun():
    inst, prefs, y = _zuv()
    perfect = perfect_partners(max_matching(inst), 3)
    assert perfect.tolist() == [-1, 2, 1]
    victims = duals.find_victims(inst, AlgoConfig(RDO, prefs=prefs), y, perfect)
    assert victims == {0: duals.Victim(z=0, u=1, v=2)}


def test_general_compensation_to_unmatched_victim():
    inst, prefs, y = _zuv()
    config = AlgoConfig(RDO, prefs=prefs)
    perfect = perfect_partners(max_matching(inst), 3)
    run, alpha, victims, rep = duals.certify_run(inst, config, GENERAL_GF, y=y, perfect=perfect, mode=duals.GENERAL)
    assert rep.ok
    assert alpha[2] == pytest.approx(0.05)
    assert alpha[0] == pytest.approx(float(eval_g(0.1)) - 0.05)
    assert alpha.sum() == pytest.approx(1.0)


def test_no_victims_reduces_to_bipartite_rule():
    inst = Instance.unweighted(4, [(0, 1), (2, 3)])
    run = run_rdo(inst, preferences_from_keys(np.zeros((4, 4))), np.array([0.1, 0.2, 0.3, 0.4]))
    a = duals.share_gains(duals.GENERAL, inst, run, GENERAL_GF, {})
    b = duals.share_gains(duals.BIPARTITE, inst, run, GENERAL_GF)
    assert np.array_equal(a, b)


def test_weighted_step_one_shares():
    inst = Instance.weighted(2, [(0, 1)], {(0, 1): 2.0})
    run = run_algorithm(inst, AlgoConfig(PERTURBED_GREEDY, g=eval_g), y=np.array([0.2, 0.6]))
    alpha = duals.share_gains(duals.WEIGHTED, inst, run, duals.GainFunctions.weighted(eval_g))
    assert alpha[0] == pytest.approx(1.0828, abs=1e-12)
    assert alpha[1] == pytest.approx(0.9172, abs=1e-12)


def test_weighted_unmatched_victim_receives_h():
    # z=0 takes u=1 first: (1 - g(0)) * 1 = 0.51074 beats (1 - g(0.9)) * 1.1 = 0.48972.
    inst = Instance.weighted(3, [(0, 1), (1, 2)], {(0, 1): 1.0, (1, 2): 1.1})
    config = AlgoConfig(PERTURBED_GREEDY, g=eval_g)
    gf = duals.GainFunctions.weighted(eval_g)
    perfect = perfect_partners(max_matching(inst), 3)
    run, alpha, victims, rep = duals.certify_run(inst, config, gf, y=np.array([0.0, 0.9, 0.95]), perfect=perfect)
    assert run.matching.pairs == ((0, 1),)
    assert victims == {0: duals.Victim(0, 1, 2)}
    assert alpha[2] == pytest.approx(0.051074, abs=1e-12)
    assert rep.ok


def test_matched_victim_with_enough_gain_gets_nothing():
    inst = Instance.weighted(4, [(0, 1), (1, 2), (2, 3)], {(0, 1): 1.0, (1, 2): 1.0, (2, 3): 5.0})
    gf = duals.GainFunctions.weighted(eval_g)
    config = AlgoConfig(PERTURBED_GREEDY, g=eval_g)
    run = run_algorithm(inst, config, y=np.array([0.1, 0.5, 0.3, 0.2]))
    vic = duals.Victim(z=0, u=1, v=2)
    assert run.mate[2] == 3
    assert duals.compensation_amount(run, gf, inst, vic) == 0.0


def test_gain_function_checks():
    with pytest.raises(PreconditionError):
        duals.GainFunctions(lambda y: 1 - np.asarray(y), const(0.0)).check(duals.BIPARTITE)
    with pytest.raises(PreconditionError):
        duals.GainFunctions(eval_g, const(0.3)).check(duals.GENERAL)
    with pytest.raises(PreconditionError):
        duals.GainFunctions(const(0.7), lambda y: (1 - 0.7) / 10 + 0 * np.asarray(y)).check(duals.WEIGHTED)
    GENERAL_GF.check(duals.GENERAL)
    duals.GainFunctions.weighted(eval_g).check(duals.WEIGHTED)


# -- certificate identities on random runs ---------------------------------------------


def test_certificates_on_random_instances():
    rng = np.random.default_rng(7)
    kinds = set()
    for i in range(200):
        inst = random_instance(rng, 2, 10, weighted=bool(i % 2))
        mode, config, gf = _setup(inst, rng)
        kinds.add(mode)
        perfect = perfect_partners(max_matching(inst), inst.n)
        for t in range(100):
            run, alpha, victims, rep = duals.certify_run(inst, config, gf, seed=(i, t), perfect=perfect, mode=mode)
            assert rep.sum_error <= 1e-9
            assert rep.ok, (i, t, rep)
    assert kinds == {duals.BIPARTITE, duals.GENERAL, duals.WEIGHTED}


# -- per-pair Monte Carlo bounds ---------------------------------------------


def test_pair_bound_single_edge_is_one():
    inst = Instance.unweighted(2, [(0, 1)], [0, 1])
    est = duals.estimate_pair_bound(inst, AlgoConfig(RDO, prefs=np.array([[1], [0]])),
                                    duals.GainFunctions.bipartite(eval_g), np.array([1, 0]), (0, 1), 50, 0)
    assert est.mean == pytest.approx(1.0)
    with pytest.raises(PreconditionError):
        duals.estimate_pair_bound(inst, AlgoConfig(RDO), duals.GainFunctions.bipartite(eval_g),
                                  np.array([1, 0]), (0, 1), 0, 0)


def test_four_vertex_pair_bounds_against_enumeration():
    inst, prefs = gen_four_vertex()
    config = AlgoConfig(RDO, prefs=prefs)
    gf = GENERAL_GF
    perfect = np.array([1, 0, 3, 2])

    exact = {(0, 1): 0.0, (2, 3): 0.0}
    perms = list(itertools.permutations(range(4)))
    for perm in perms:
        y = np.empty(4)
        y[list(perm)] = (np.arange(4) + 0.5) / 4
        run, alpha, _, _ = duals.certify_run(inst, config, gf, y=y, perfect=perfect, mode=duals.GENERAL)
        for u, v in exact:
            exact[(u, v)] += (alpha[u] + alpha[v]) / len(perms)
    assert sum(exact.values()) == pytest.approx(float(enumerate_exact_expectation(inst, prefs)))
    for pair, value in exact.items():
        est = duals.estimate_pair_bound(inst, config, gf, perfect, pair, 4000, 3, mode=duals.GENERAL)
        # Uniform continuous ranks and uniform orders induce the same law.
        assert abs(est.mean - value) < 4 * est.se + 1e-9


def test_weighted_three_path_heavy_edge():
    inst = Instance.weighted(4, [(0, 1), (1, 2), (2, 3)], {(0, 1): 1.0, (1, 2): 1.2, (2, 3): 1.0})
    config = AlgoConfig(PERTURBED_GREEDY, g=eval_g)
    gf = duals.GainFunctions.weighted(eval_g)
    perfect = perfect_partners(max_matching(inst), 4)
    for u in range(4):
        v = int(perfect[u])
        if v > u:
            est = duals.estimate_pair_bound(inst, config, gf, perfect, (u, v), 3000, 5)
            assert est.mean >= 0.5 * inst.w[u, v] - 3 * est.se


@pytest.fixture(scope="module")
def bipartite_lp_g():
    model = build_bipartite_lp(20)
    sol = solve_lp(model)
    assert sol.status == "optimal"
    return extract_step_g(model, sol.x)


@pytest.fixture(scope="module")
def general_lp_gh():
    model = build_general_lp(10, refine=2)
    sol = solve_lp(model)
    assert sol.status == "optimal"
    assert model.family == GENERAL
    return extract_step_g(model, sol.x), extract_step_h(model, sol.x)


def _pair_bounds(inst, config, gf, trials, seed, mode):
    perfect = perfect_partners(max_matching(inst), inst.n)
    out = []
    for u in range(inst.n):
        v = int(perfect[u])
        if v > u:
            est = duals.estimate_pair_bound(inst, config, gf, perfect, (u, v), trials, seed, mode=mode)
            out.append((est, float(inst.w[u, v])))
    return out


def test_statistical_bound_bipartite(bipartite_lp_g):
    gf = duals.GainFunctions.bipartite(bipartite_lp_g)
    gf.check(duals.BIPARTITE)
    rng = np.random.default_rng(11)
    for _ in range(15):
        inst = random_instance(rng, 4, 10, weighted=False, bipartite=True)
        config = AlgoConfig(RDO, prefs=preferences_from_keys(rng.random((inst.n, inst.n))))
        for est, w in _pair_bounds(inst, config, gf, 300, 1, duals.BIPARTITE):
            assert est.mean >= 0.639 * w - 3 * est.se


def test_statistical_bound_general(general_lp_gh):
    g, h = general_lp_gh
    gf = duals.GainFunctions(g, h)
    gf.check(duals.GENERAL)
    rng = np.random.default_rng(12)
    for _ in range(15):
        inst = random_instance(rng, 4, 10, weighted=False, bipartite=False)
        config = AlgoConfig(RDO, prefs=preferences_from_keys(rng.random((inst.n, inst.n))))
        for est, w in _pair_bounds(inst, config, gf, 300, 2, duals.GENERAL):
            assert est.mean >= 0.531 * w - 3 * est.se


def test_statistical_bound_weighted():
    gf = duals.GainFunctions.weighted(eval_g)
    config = AlgoConfig(PERTURBED_GREEDY, g=eval_g)
    rng = np.random.default_rng(13)
    for _ in range(15):
        inst = random_instance(rng, 4, 10, weighted=True)
        for est, w in _pair_bounds(inst, config, gf, 300, 3, duals.WEIGHTED):
            assert est.mean >= 0.501 * w - 3 * est.se


def test_pair_bounds_csv():
    est = duals.PairBoundEstimate((0, 1), 10, 0.75, 0.01)
    text = duals.pair_bounds_csv([est])
    assert text.splitlines()[0] == "pair,trials,mean,se"
    assert text.splitlines()[1].startswith("0-1,10,0.75,")

"""Randomized structural properties of the greedy runs.

Each suite draws at least ``CASES`` (instance, ranks, vertex) cases and
expects zero violations; a violation means an engine bug.
"""

import numpy as np
import pytest

from conftest import random_instance
from oblimatch.analytic import eval_g
from oblimatch.errors import StructuralViolation
from oblimatch.graph import Instance
from oblimatch.matchers import (
    PERTURBED_GREEDY,
    RDO,
    AlgoConfig,
    active_mask,
    alternating_path,
    batch_mates_for_ranks,
    preferences_from_keys,
    rank_grid,
    rank_threshold,
    rerun_without_vertex,
    run_algorithm,
    run_perturbed_greedy,
    run_rdo,
    threshold_scan,
)

CASES = 1000


def _rdo_config(n, rng):
    return AlgoConfig(RDO, prefs=preferences_from_keys(rng.random((n, n))))


def _pg_config(n, rng):
    return AlgoConfig(PERTURBED_GREEDY, prefs=preferences_from_keys(rng.random((n, n))), g=eval_g)


def _matched_vertex(run, rng):
    matched = np.flatnonzero(run.mate >= 0)
    return int(rng.choice(matched)) if len(matched) else None


@pytest.mark.parametrize("weighted", [False, True])
def test_alternating_path(weighted):
    rng = np.random.default_rng(101 + weighted)
    checked = 0
    while checked < CASES:
        inst = random_instance(rng, 2, 10, weighted=weighted)
        config = _pg_config(inst.n, rng) if weighted else _rdo_config(inst.n, rng)
        run = run_algorithm(inst, config, y=rng.random(inst.n))
        u = _matched_vertex(run, rng)
        if u is None:
            continue
        rerun = rerun_without_vertex(inst, config, run.ranks, u)
        path = alternating_path(run, rerun, inst, config)
        assert path[0] == u and path[1] == run.mate[u]
        checked += 1


def test_alternating_path_flags_a_tampered_run():
    inst = Instance.unweighted(6, [(i, i + 1) for i in range(5)])
    prefs = preferences_from_keys(np.tile(np.arange(6.0), (6, 1)))
    config = AlgoConfig(RDO, prefs=prefs)
    y = np.linspace(0.1, 0.6, 6)
    run = run_rdo(inst, prefs, y)
    assert alternating_path(run, rerun_without_vertex(inst, config, y, 0)) == [0, 1, 2, 3, 4, 5]
    # A "rerun" from a different graph: its difference with run is not one path.
    other = Instance.unweighted(6, [(1, 2)])
    with pytest.raises(StructuralViolation):
        alternating_path(run, run_rdo(other, prefs, y, removed=[0]))
    # Decision times that go backwards along the path are rejected.
    backwards = np.array([0.5, 0.6, 0.1, 0.2, 0.3, 0.4])
    run_b = run_rdo(inst, prefs, backwards)
    rerun_b = run_rdo(inst, prefs, backwards, removed=[0])
    if run_b.mate[0] >= 0:
        alternating_path(run_b, rerun_b)


def _threshold_case(rng, weighted):
    inst = random_instance(rng, 2, 8, weighted=weighted)
    config = _pg_config(inst.n, rng) if weighted else _rdo_config(inst.n, rng)
    y = rng.random(inst.n)
    mates = batch_mates_for_ranks(inst, config, y[None, :])
    candidates = [v for v in range(inst.n) if not active_mask(mates, y[None, :], v)[0]]
    if not candidates:
        return None
    return inst, config, y, int(rng.choice(candidates))


@pytest.mark.parametrize("weighted", [False, True])
def test_rank_threshold_splits_the_grid(weighted):
    rng = np.random.default_rng(202 + weighted)
    checked = 0
    while checked < CASES:
        case = _threshold_case(rng, weighted)
        if case is None:
            continue
        inst, config, y, v = case
        scan = threshold_scan(inst, config, y, v, step=1e-3)
        below = scan.grid < scan.threshold
        # Active exactly below the threshold, and the original matching above it.
        assert np.array_equal(scan.active, below)
        assert scan.unchanged[~below].all()
        checked += 1


def test_rank_threshold_examples():
    isolated = Instance.unweighted(3, [(0, 1)])
    config = AlgoConfig(RDO, prefs=preferences_from_keys(np.tile(np.arange(3.0), (3, 1))))
    assert rank_threshold(isolated, config, np.array([0.2, 0.5, 0.7]), 2) == 0.0
    edge = Instance.unweighted(2, [(0, 1)])
    cfg2 = AlgoConfig(RDO, prefs=np.array([[1], [0]]))
    assert rank_threshold(edge, cfg2, np.array([0.3, 0.8]), 1) == pytest.approx(0.3)


@pytest.mark.parametrize("weighted", [False, True])
def test_active_edge_weight_monotone_in_own_rank(weighted):
    rng = np.random.default_rng(303 + weighted)
    grid = rank_grid(1e-2)
    checked = 0
    while checked < CASES:
        inst = random_instance(rng, 2, 8, weighted=weighted)
        config = _pg_config(inst.n, rng) if weighted else _rdo_config(inst.n, rng)
        y = rng.random(inst.n)
        v = int(rng.integers(0, inst.n))
        ys = np.repeat(y[None, :], len(grid), axis=0)
        ys[:, v] = grid
        mates = batch_mates_for_ranks(inst, config, ys)
        act = active_mask(mates, ys, v)
        w = np.where(act, inst.w[v, np.maximum(mates[:, v], 0)], np.nan)
        prefix = w[: np.flatnonzero(act)[-1] + 1] if act.any() else w[:0]
        assert not np.isnan(prefix).any()
        assert np.all(np.diff(prefix) <= 1e-12)
        checked += 1


def test_rank_reset_after_matching_keeps_status():
    rng = np.random.default_rng(404)
    grid = rank_grid(1e-3)
    checked = 0
    while checked < CASES:
        inst = random_instance(rng, 2, 10, weighted=False)
        config = _rdo_config(inst.n, rng)
        run = run_algorithm(inst, config, y=rng.random(inst.n))
        matched = np.flatnonzero(run.mate >= 0)
        if len(matched) == 0:
            continue
        u = int(rng.choice(matched))
        t = float(run.matched_at[u])
        late = [v for v in range(inst.n) if v != u and not run.matched_at[v] <= t]
        if not late:
            continue
        v = int(rng.choice(late))
        ys = np.repeat(run.ranks[None, :], len(grid), axis=0)
        ys[:, v] = grid
        sel = grid > t
        mates = batch_mates_for_ranks(inst, config, ys[sel])
        assert np.all(mates[:, u] >= 0)
        checked += 1


def test_bipartite_insertion_matches_no_later():
    rng = np.random.default_rng(505)
    checked = 0
    while checked < CASES:
        inst = random_instance(rng, 2, 10, weighted=False, bipartite=True)
        if inst.m == 0:
            continue
        config = _rdo_config(inst.n, rng)
        y = rng.random(inst.n)
        u, v = inst.edges[int(rng.integers(0, inst.m))]
        if rng.random() < 0.5:
            u, v = v, u
        full = run_rdo(inst, config.prefs, y)
        without = rerun_without_vertex(inst, config, y, v)
        if without.mate[u] < 0:
            continue
        assert full.mate[u] >= 0
        assert full.matched_at[u] <= without.matched_at[u]
        checked += 1


def test_rdo_equals_perturbed_greedy_randomized():
    rng = np.random.default_rng(606)
    for _ in range(CASES):
        inst = random_instance(rng, 2, 12, weighted=False)
        prefs = preferences_from_keys(rng.random((inst.n, inst.n)))
        y = rng.random(inst.n)
        assert run_rdo(inst, prefs, y).matching == run_perturbed_greedy(inst, eval_g, y, prefs).matching

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_instance
from oblimatch.bench import gen_erdos_renyi, gen_random_weighted
from oblimatch.errors import OracleCapacityError, PreconditionError
from oblimatch.graph import (
    Instance,
    Matching,
    brute_force_max_matching,
    check_matching,
    dump_instance,
    instance_from_doc,
    instance_to_doc,
    load_instance,
    matching_weight,
    max_matching,
    ratio,
    validate_instance,
)


def test_constructor_normalizes_pairs():
    inst = Instance.unweighted(3, [(2, 0), (0, 2), (1, 0)])
    assert inst.edges == ((0, 1), (0, 2))
    assert inst.m == 2
    assert inst.has_edge(2, 0) and not inst.has_edge(1, 2)
    assert list(inst.neighbors(0)) == [1, 2]


@pytest.mark.parametrize(
    "inst, violation",
    [
        (Instance.unweighted(3, [(1, 1)]), "self-loop"),
        (Instance.unweighted(3, [(0, 5)]), "vertex out of range"),
        (Instance.unweighted(3, [(0, 1)], bipartition=[0, 0, 1]), "non-crossing edge"),
        (Instance.unweighted(3, [(0, 1)], bipartition=[0, 2, 1]), "bad bipartition labels"),
        (Instance.weighted(2, [(0, 1)], np.array([[0.0, -1.0], [-1.0, 0.0]])), "negative weight"),
        (Instance.weighted(2, [(0, 1)], np.array([[0.0, 1.0], [2.0, 0.0]])), "asymmetric weights"),
        (Instance.weighted(2, [(0, 1)], np.array([[0.0, np.nan], [np.nan, 0.0]])), "non-finite weight"),
    ],
)
def test_validation_names_the_violation(inst, violation):
    rep = validate_instance(inst)
    assert not rep
    assert rep.violation == violation


def test_valid_instance_passes():
    assert validate_instance(gen_random_weighted(8, 0.5, 3, bipartite=True))


def test_weighted_needs_table():
    with pytest.raises(PreconditionError):
        Instance(n=2, edges=((0, 1),), kind="weighted")


def test_weights_from_mapping_default_to_zero():
    inst = Instance.weighted(3, [(0, 1), (1, 2)], {(0, 1): 2.5})
    assert inst.weight(1, 0) == 2.5
    assert inst.weight(1, 2) == 0.0


def test_check_matching_rejects_bad_input(triangle_with_tail):
    check_matching(triangle_with_tail, Matching.from_pairs(triangle_with_tail, [(0, 1), (2, 3)]))
    with pytest.raises(PreconditionError):
        check_matching(triangle_with_tail, Matching.from_pairs(triangle_with_tail, [(0, 3)]))
    with pytest.raises(PreconditionError):
        check_matching(triangle_with_tail, Matching.from_pairs(triangle_with_tail, [(0, 1), (1, 2)]))
    with pytest.raises(PreconditionError):
        check_matching(triangle_with_tail, Matching(((0, 1),), 7.0))


def test_matching_weight_is_order_independent():
    inst = gen_random_weighted(10, 0.9, 11)
    pairs = [(0, 1), (2, 3), (4, 5), (6, 7)]
    assert matching_weight(inst, pairs) == matching_weight(inst, list(reversed(pairs)))


def test_ratio_with_empty_optimum_is_one():
    assert ratio(0.0, 0.0) == 1.0
    assert ratio(1.0, 2.0) == 0.5


def test_empty_graph_has_empty_matching():
    inst = Instance.unweighted(5, [])
    assert max_matching(inst).size == 0
    assert max_matching(inst).weight == 0.0


def test_brute_force_refuses_large_instances():
    with pytest.raises(OracleCapacityError):
        brute_force_max_matching(Instance.unweighted(17, [(0, 1)]))


def test_weighted_general_oracle_capacity():
    inst = gen_random_weighted(18, 0.3, 1)
    with pytest.raises(OracleCapacityError):
        max_matching(inst)
    m = max_matching(inst, weighted_solver="blossom")
    check_matching(inst, m)


def test_known_optimum_on_triangle_with_tail(triangle_with_tail):
    m = max_matching(triangle_with_tail)
    assert m.size == 2
    assert brute_force_max_matching(triangle_with_tail).size == 2


@given(seed=st.integers(0, 2**31 - 1))
def test_oracle_matches_brute_force(seed):
    inst = random_instance(np.random.default_rng(seed), 2, 12)
    fast = max_matching(inst)
    slow = brute_force_max_matching(inst)
    check_matching(inst, fast)
    check_matching(inst, slow)
    assert fast.weight == pytest.approx(slow.weight, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("bipartite", [False, True])
def test_oracle_on_integer_weights_is_exact(bipartite):
    for seed in range(30):
        inst = gen_random_weighted(9, 0.6, seed, "integer", bipartite)
        assert max_matching(inst).weight == brute_force_max_matching(inst).weight


@given(seed=st.integers(0, 2**31 - 1))
def test_serialization_round_trip(seed):
    inst = random_instance(np.random.default_rng(seed), 1, 9)
    assert instance_from_doc(instance_to_doc(inst)) == inst


def test_file_round_trip(tmp_path):
    inst = gen_erdos_renyi(7, 0.5, 2, bipartite=True)
    path = tmp_path / "inst.json"
    dump_instance(inst, path)
    assert load_instance(path) == inst


def test_unit_weights_require_unweighted_kind():
    with pytest.raises(PreconditionError):
        instance_from_doc({"n": 2, "kind": "weighted", "edges": [[0, 1]], "weights": "unit"})

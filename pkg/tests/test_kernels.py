import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_instance
from oblimatch import _accel
from oblimatch.kernels import max_matching_dp, pair_greedy, vertex_greedy

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba unavailable or disabled")


def _is_matching(mates: np.ndarray, adj: np.ndarray, alive: np.ndarray) -> bool:
    for row in mates:
        for u, v in enumerate(row):
            if v < 0:
                continue
            if row[v] != u or not adj[u, v] or not alive[u] or not alive[v]:
                return False
    return True


def _is_maximal(mates: np.ndarray, adj: np.ndarray, alive: np.ndarray) -> bool:
    free = (mates < 0) & alive[None, :]
    for row in free:
        idx = np.flatnonzero(row)
        if adj[np.ix_(idx, idx)].any():
            return False
    return True


@needs_numba
@given(seed=st.integers(0, 2**31 - 1), per_trial=st.booleans())
def test_vertex_greedy_paths_agree(seed, per_trial):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, 1, 14, weighted=False)
    indptr, indices = inst.csr
    trials = int(rng.integers(1, 6))
    keys = rng.random((trials, len(indices))) if per_trial else rng.random(len(indices))
    # Coarse keys force ties so the tie rule is exercised too.
    keys = np.floor(keys * 3)
    orders = np.argsort(rng.random((trials, inst.n)), axis=1)
    alive = rng.random(inst.n) < 0.85
    nb = vertex_greedy(indptr, indices, keys, orders, alive, accel=True)
    npy = vertex_greedy(indptr, indices, keys, orders, alive, accel=False)
    assert np.array_equal(nb, npy)
    assert _is_matching(nb, inst.adjacency_matrix, alive)
    assert _is_maximal(nb, inst.adjacency_matrix, alive)


@needs_numba
@given(seed=st.integers(0, 2**31 - 1))
def test_pair_greedy_paths_agree(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, 1, 14)
    e = inst.edge_array
    trials = int(rng.integers(1, 6))
    orders = np.argsort(rng.random((trials, len(e))), axis=1)
    alive = rng.random(inst.n) < 0.85
    nb = pair_greedy(e[:, 0], e[:, 1], orders, inst.n, alive, accel=True)
    npy = pair_greedy(e[:, 0], e[:, 1], orders, inst.n, alive, accel=False)
    assert np.array_equal(nb, npy)
    assert _is_matching(nb, inst.adjacency_matrix, alive)
    assert _is_maximal(nb, inst.adjacency_matrix, alive)


@needs_numba
@given(seed=st.integers(0, 2**31 - 1))
def test_matching_dp_paths_agree(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, 0, 11)
    v1, m1 = max_matching_dp(inst.w, inst.adjacency_matrix, accel=True)
    v2, m2 = max_matching_dp(inst.w, inst.adjacency_matrix, accel=False)
    assert v1 == v2
    assert np.array_equal(m1, m2)


def test_pair_greedy_follows_the_order():
    eu = np.array([0, 1, 2])
    ev = np.array([1, 2, 3])
    mates = pair_greedy(eu, ev, np.array([[1, 0, 2], [0, 2, 1]]), 4, accel=False)
    assert mates[0].tolist() == [-1, 2, 1, -1]
    assert mates[1].tolist() == [1, 0, 3, 2]


def test_vertex_greedy_rejects_misaligned_keys():
    indptr = np.array([0, 1, 2])
    indices = np.array([1, 0])
    with pytest.raises(ValueError):
        vertex_greedy(indptr, indices, np.zeros((3, 2)), np.array([[0, 1]]), accel=False)


def test_env_flag_selects_numpy_path():
    code = "from oblimatch import _accel; print(_accel.HAVE_NUMBA, _accel.NUMBA_DISABLED)"
    env = dict(os.environ, **{_accel.ENV_FLAG: "1"})
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "True"]
    env[_accel.ENV_FLAG] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split()[1] == "False"


def test_requesting_numba_when_disabled_fails():
    code = (
        "from oblimatch.kernels import pair_greedy\n"
        "import numpy as np\n"
        "try:\n"
        "    pair_greedy(np.array([0]), np.array([1]), np.array([[0]]), 2, accel=True)\n"
        "except RuntimeError:\n"
        "    print('refused')\n"
    )
    env = dict(os.environ, **{_accel.ENV_FLAG: "1"})
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "refused"

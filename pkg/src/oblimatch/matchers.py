"""Query-commit probing engine and the greedy matching algorithms.

Two execution routes share one source of randomness:

* the reference engine drives a :class:`ProbeSession` and records every
  probe, producing a full :class:`RunRecord`;
* the batched fast path in :func:`simulate_mates` feeds the kernels in
  :mod:`oblimatch.kernels` and returns only mate arrays.

Given the same seed both routes produce the same matching. Non-edges never
change the state of a run, so the fast path only looks at real edges.

Randomness protocol (per run, from one ``numpy.random.Generator``): ranks
``y`` are drawn first (``rng.random(n)``) when the algorithm uses random
ranks, followed by an ``n x n`` key table when it uses random preferences or
a random pair order. A smaller key means more preferred or probed earlier.
Ties among ranks and keys are broken by vertex index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import PreconditionError, ProtocolViolation, StructuralViolation
from .graph import Instance, Matching, norm_pair
from .kernels import pair_greedy, vertex_greedy

NO_EDGE = "no-edge"
BUSY = "endpoint-busy"
MATCHED = "matched"

ACTIVE = "active"
PASSIVE = "passive"
UNMATCHED = "unmatched"

RDO = "rdo"
PERTURBED_GREEDY = "pg"
MRG = "mrg"
RANKING = "ranking"
IRP = "irp"
WEIGHT_GREEDY = "weight-greedy"
RANDOM_PAIRS = "random-pairs"

VERTEX_ITERATIVE = (RDO, MRG, RANKING, IRP)
PAIR_ORDER = (PERTURBED_GREEDY, WEIGHT_GREEDY, RANDOM_PAIRS)
ALGORITHMS = VERTEX_ITERATIVE + PAIR_ORDER

SeedLike = int | Sequence[int] | np.random.SeedSequence | None


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Generator for a run seed: an int, ``(master, trial)`` tuple, or SeedSequence."""
    if seed is None:
        raise PreconditionError("randomized run needs a seed")
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    if isinstance(seed, (int, np.integer)):
        return np.random.default_rng(int(seed))
    return np.random.default_rng(np.random.SeedSequence([int(s) for s in seed]))


def trial_seed(seed: int, trial: int) -> tuple[int, int]:
    """Per-trial seed, independent of how trials are scheduled."""
    return (int(seed), int(trial))


# --------------------------------------------------------------------------
# preferences and configuration
# --------------------------------------------------------------------------


def index_preferences(n: int) -> np.ndarray:
    """Every vertex prefers lower-index vertices."""
    return np.array([[v for v in range(n) if v != u] for u in range(n)], dtype=np.int64).reshape(n, max(n - 1, 0))


def check_preferences(prefs: np.ndarray, n: int) -> None:
    prefs = np.asarray(prefs)
    if prefs.shape != (n, max(n - 1, 0)):
        raise PreconditionError(f"preference profile must have shape ({n}, {n - 1})")
    for u in range(n):
        row = sorted(int(v) for v in prefs[u])
        if row != [v for v in range(n) if v != u]:
            raise PreconditionError(f"preference list of vertex {u} is not a permutation of V - {{u}}")


def preference_positions(prefs: np.ndarray) -> np.ndarray:
    """``pos[u, v]`` = position of ``v`` in ``u``'s list (``n`` on the diagonal)."""
    prefs = np.asarray(prefs, dtype=np.int64)
    n = prefs.shape[0]
    pos = np.full((n, n), n, dtype=np.int64)
    if n > 1:
        pos[np.arange(n)[:, None], prefs] = np.arange(n - 1)[None, :]
    return pos


def preferences_from_keys(keys: np.ndarray) -> np.ndarray:
    """Preference lists sorting each row of a key table ascending (ties by index)."""
    keys = np.asarray(keys, dtype=np.float64)
    n = keys.shape[0]
    out = np.empty((n, max(n - 1, 0)), dtype=np.int64)
    for u in range(n):
        order = np.argsort(keys[u], kind="stable")
        out[u] = order[order != u]
    return out


@dataclass(frozen=True, eq=False)
class AlgoConfig:
    """Which algorithm to run and its fixed (non-random) ingredients.

    ``prefs`` are the fixed preference lists for RDO and the tie-break
    preferences for Perturbed Greedy (index order when omitted). ``g`` is
    the non-decreasing perturbation function of Perturbed Greedy, and
    ``order`` the fixed decision order of IRP.
    """

    name: str
    prefs: np.ndarray | None = None
    g: Callable[[np.ndarray], np.ndarray] | None = None
    order: tuple[int, ...] | None = None
    label: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if self.name not in ALGORITHMS:
            raise PreconditionError(f"unknown algorithm {self.name!r}; choose from {ALGORITHMS}")
        if self.name == PERTURBED_GREEDY and self.g is None:
            raise PreconditionError("Perturbed Greedy needs a perturbation function g")
        if self.name == IRP and self.order is None:
            raise PreconditionError("IRP needs a fixed decision order")
        if self.prefs is not None:
            object.__setattr__(self, "prefs", np.asarray(self.prefs, dtype=np.int64))
        if self.order is not None:
            object.__setattr__(self, "order", tuple(int(v) for v in self.order))

    @property
    def randomized_ranks(self) -> bool:
        return self.name in (RDO, PERTURBED_GREEDY, MRG, RANKING)

    @property
    def random_keys(self) -> bool:
        return self.name in (MRG, IRP, RANDOM_PAIRS)

    def pref_positions(self, n: int) -> np.ndarray:
        prefs = self.prefs if self.prefs is not None else index_preferences(n)
        return preference_positions(prefs)


def draw_randomness(config: AlgoConfig, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray | None]:
    """Draw ranks and the random key table of one run.

    Returns ``(y, keys)``; ``keys`` is ``None`` when the algorithm has no
    random preferences or pair order.
    """
    if config.randomized_ranks:
        y = rng.random(n)
    elif config.name == IRP:
        y = fixed_order_ranks(config.order, n)
    else:
        y = np.zeros(n)
    keys = rng.random((n, n)) if config.random_keys else None
    return y, keys


def fixed_order_ranks(order: Sequence[int], n: int) -> np.ndarray:
    """Decision times ``(position + 1/2) / n`` realizing a fixed decision order."""
    order = np.asarray(order, dtype=np.int64)
    if sorted(order.tolist()) != list(range(n)):
        raise PreconditionError("decision order must be a permutation of the vertices")
    y = np.empty(n)
    y[order] = (np.arange(n) + 0.5) / n
    return y


def decision_order(y: np.ndarray) -> np.ndarray:
    """Vertices by ascending rank, ties by index."""
    return np.argsort(np.asarray(y), kind="stable")


def preference_keys(config: AlgoConfig, n: int, y: np.ndarray, keys: np.ndarray | None) -> np.ndarray:
    """Key table whose row ``u`` ranks candidates for vertex ``u``."""
    if config.name == RDO:
        return config.pref_positions(n).astype(np.float64)
    if config.name == RANKING:
        return np.broadcast_to(np.asarray(y, dtype=np.float64), (n, n))
    if config.name in (MRG, IRP):
        return keys
    raise PreconditionError(f"{config.name} is not a vertex-iterative algorithm")


# --------------------------------------------------------------------------
# probe sessions and run records
# --------------------------------------------------------------------------


class ProbeSession:
    """Stateful query-commit oracle over a hidden edge set.

    ``probe(u, v)`` reveals whether ``(u, v)`` is an edge and, if it is and
    both endpoints are free, commits it to the matching. Each pair may be
    probed once; removed vertices cannot be probed.
    """

    def __init__(self, inst: Instance, removed: Iterable[int] = ()):
        self.inst = inst
        self.removed = frozenset(int(v) for v in removed)
        self.mate = np.full(inst.n, -1, dtype=np.int64)
        self.match_probe = np.full(inst.n, -1, dtype=np.int64)
        self.transcript: list[tuple[tuple[int, int], str]] = []
        self._probed: set[tuple[int, int]] = set()
        self.closed = False

    def probe(self, u: int, v: int) -> str:
        if self.closed:
            raise ProtocolViolation("probe after session close")
        u, v = int(u), int(v)
        if u == v or not (0 <= u < self.inst.n and 0 <= v < self.inst.n):
            raise ProtocolViolation(f"invalid pair ({u},{v})")
        if u in self.removed or v in self.removed:
            raise ProtocolViolation(f"pair ({u},{v}) touches a removed vertex")
        pair = norm_pair(u, v)
        if pair in self._probed:
            raise ProtocolViolation(f"pair {pair} probed twice")
        self._probed.add(pair)
        if not self.inst.has_edge(u, v):
            outcome = NO_EDGE
        elif self.mate[u] >= 0 or self.mate[v] >= 0:
            outcome = BUSY
        else:
            outcome = MATCHED
            self.mate[u], self.mate[v] = v, u
            self.match_probe[u] = self.match_probe[v] = len(self.transcript)
        self.transcript.append((pair, outcome))
        return outcome

    def is_matched(self, u: int) -> bool:
        return bool(self.mate[u] >= 0)

    def was_probed(self, u: int, v: int) -> bool:
        return norm_pair(u, v) in self._probed

    @property
    def matching(self) -> Matching:
        return Matching.from_mate(self.inst, self.mate)

    def close(self) -> Matching:
        self.closed = True
        return self.matching


@dataclass(frozen=True, eq=False)
class RunRecord:
    """Trace of one algorithm execution.

    ``matched_at[v]`` is the decision time of ``v``'s matched edge (smaller
    endpoint rank) on unweighted instances and the probe index of that edge
    on weighted instances; ``nan`` when ``v`` is unmatched.
    """

    algorithm: str
    matching: Matching
    mate: np.ndarray
    roles: tuple[str, ...]
    matched_at: np.ndarray
    ranks: np.ndarray
    transcript: tuple[tuple[tuple[int, int], str], ...] | None
    seed: object = None
    removed: frozenset[int] = frozenset()

    @property
    def n(self) -> int:
        return len(self.mate)

    def is_active(self, v: int) -> bool:
        return self.roles[v] == ACTIVE

    def to_doc(self, include_transcript: bool = False) -> dict:
        doc = {
            "algorithm": self.algorithm,
            "matching": [list(p) for p in self.matching.pairs],
            "weight": self.matching.weight,
            "roles": list(self.roles),
            "ranks": [float(v) for v in self.ranks],
            "seed": _seed_doc(self.seed),
        }
        if self.removed:
            doc["removed"] = sorted(self.removed)
        if include_transcript and self.transcript is not None:
            doc["transcript"] = [[list(p), o] for p, o in self.transcript]
        return doc


def _seed_doc(seed: object):
    if seed is None or isinstance(seed, (int, np.integer)):
        return None if seed is None else int(seed)
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": str(seed.entropy), "spawn_key": list(seed.spawn_key)}
    return [int(s) for s in seed]


def rank_precedes(y: np.ndarray, a: int, b: int) -> bool:
    """Whether ``a`` decides before ``b`` (rank order, ties by index)."""
    return (y[a], a) < (y[b], b)


def _finish(
    inst: Instance,
    algorithm: str,
    session: ProbeSession,
    y: np.ndarray,
    seed: object,
    record_transcript: bool,
) -> RunRecord:
    mate = session.mate.copy()
    n = inst.n
    roles = []
    matched_at = np.full(n, np.nan)
    for v in range(n):
        u = int(mate[v])
        if u < 0:
            roles.append(UNMATCHED)
            continue
        roles.append(ACTIVE if rank_precedes(y, v, u) else PASSIVE)
        if inst.is_weighted:
            matched_at[v] = float(session.match_probe[v])
        else:
            matched_at[v] = min(y[v], y[u])
    session.close()
    return RunRecord(
        algorithm=algorithm,
        matching=Matching.from_mate(inst, mate),
        mate=mate,
        roles=tuple(roles),
        matched_at=matched_at,
        ranks=np.asarray(y, dtype=np.float64).copy(),
        transcript=tuple(session.transcript) if record_transcript else None,
        seed=seed,
        removed=session.removed,
    )


def _run_vertex_iterative(
    inst: Instance,
    algorithm: str,
    y: np.ndarray,
    key_table: np.ndarray,
    removed: Iterable[int],
    seed: object,
    record_transcript: bool,
) -> RunRecord:
    session = ProbeSession(inst, removed)
    alive = np.ones(inst.n, dtype=bool)
    alive[list(session.removed)] = False
    for u in decision_order(y):
        u = int(u)
        if not alive[u] or session.is_matched(u):
            continue
        for v in np.argsort(key_table[u], kind="stable"):
            v = int(v)
            if v == u or not alive[v] or session.is_matched(v) or session.was_probed(u, v):
                continue
            if session.probe(u, v) == MATCHED:
                break
    return _finish(inst, algorithm, session, y, seed, record_transcript)


def pair_probe_order(
    inst: Instance,
    config: AlgoConfig,
    y: np.ndarray,
    keys: np.ndarray | None,
    pairs: np.ndarray,
) -> np.ndarray:
    """Probe order (indices into ``pairs``) of a pair-order algorithm.

    Perturbed Greedy sorts by perturbed weight descending, then by the
    decision position of the earlier endpoint, then by that endpoint's
    preference index of the other endpoint, then lexicographically. This
    makes the unweighted case coincide with RDO under the same preferences
    even where ``g`` is flat.
    """
    a, b = pairs[:, 0], pairs[:, 1]
    if config.name == PERTURBED_GREEDY:
        n = inst.n
        pos = np.empty(n, dtype=np.int64)
        pos[decision_order(y)] = np.arange(n)
        a_first = pos[a] < pos[b]
        act = np.where(a_first, a, b)
        oth = np.where(a_first, b, a)
        lo = np.minimum(y[a], y[b])
        perturbed = (1.0 - np.asarray(config.g(lo), dtype=np.float64)) * inst.w[a, b]
        pref = config.pref_positions(n)[act, oth]
        return np.lexsort((b, a, pref, pos[act], -perturbed))
    if config.name == WEIGHT_GREEDY:
        return np.lexsort((b, a, -inst.w[a, b]))
    if config.name == RANDOM_PAIRS:
        return np.lexsort((b, a, keys[a, b]))
    raise PreconditionError(f"{config.name} is not a pair-order algorithm")


def pair_probe_orders(
    inst: Instance,
    config: AlgoConfig,
    ys: np.ndarray,
    keys: np.ndarray | None,
    pairs: np.ndarray,
) -> np.ndarray:
    """Row-wise :func:`pair_probe_order` for a batch of rank vectors sharing ``keys``."""
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    t = len(ys)
    if config.name != PERTURBED_GREEDY or len(pairs) == 0:
        return np.stack([pair_probe_order(inst, config, y, keys, pairs) for y in ys]) if t else \
            np.empty((0, len(pairs)), dtype=np.int64)
    n = inst.n
    a, b = pairs[:, 0], pairs[:, 1]
    pos = np.empty((t, n), dtype=np.int64)
    pos[np.arange(t)[:, None], np.argsort(ys, axis=1, kind="stable")] = np.arange(n)[None, :]
    a_first = pos[:, a] < pos[:, b]
    act = np.where(a_first, a[None, :], b[None, :])
    oth = np.where(a_first, b[None, :], a[None, :])
    lo = np.minimum(ys[:, a], ys[:, b])
    perturbed = (1.0 - np.asarray(config.g(lo), dtype=np.float64)) * inst.w[a, b][None, :]
    pref = config.pref_positions(n)[act, oth]
    act_pos = np.take_along_axis(pos, act, axis=1)
    aa = np.broadcast_to(a, (t, len(a)))
    bb = np.broadcast_to(b, (t, len(b)))
    return np.lexsort((bb, aa, pref, act_pos, -perturbed), axis=-1)


def perturbed_weights(inst: Instance, g: Callable, y: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    a, b = pairs[:, 0], pairs[:, 1]
    return (1.0 - np.asarray(g(np.minimum(y[a], y[b])), dtype=np.float64)) * inst.w[a, b]


def _alive_pairs(n: int, removed: Iterable[int]) -> np.ndarray:
    gone = set(int(v) for v in removed)
    keep = [v for v in range(n) if v not in gone]
    if len(keep) < 2:
        return np.zeros((0, 2), dtype=np.int64)
    iu, ju = np.triu_indices(len(keep), k=1)
    keep_arr = np.asarray(keep, dtype=np.int64)
    return np.stack([keep_arr[iu], keep_arr[ju]], axis=1)


def _run_pair_order(
    inst: Instance,
    config: AlgoConfig,
    y: np.ndarray,
    keys: np.ndarray | None,
    removed: Iterable[int],
    seed: object,
    record_transcript: bool,
) -> RunRecord:
    session = ProbeSession(inst, removed)
    pairs = _alive_pairs(inst.n, session.removed)
    for idx in pair_probe_order(inst, config, y, keys, pairs):
        session.probe(int(pairs[idx, 0]), int(pairs[idx, 1]))
    return _finish(inst, config.name, session, y, seed, record_transcript)


def run_algorithm(
    inst: Instance,
    config: AlgoConfig,
    y: np.ndarray | None = None,
    seed: SeedLike = None,
    removed: Iterable[int] = (),
    record_transcript: bool = True,
) -> RunRecord:
    """Run any algorithm through the reference probe engine.

    Randomness is drawn from ``seed`` following the module protocol; an
    explicit ``y`` overrides the drawn ranks while keeping the drawn key
    table, which is what rank-resetting experiments need.
    """
    n = inst.n
    keys = None
    if config.randomized_ranks or config.random_keys:
        if seed is None and (config.random_keys or y is None):
            raise PreconditionError(f"{config.name} needs a seed")
        if seed is not None:
            drawn_y, keys = draw_randomness(config, n, make_rng(seed))
            if y is None:
                y = drawn_y
    if y is None:
        y = fixed_order_ranks(config.order, n) if config.name == IRP else np.zeros(n)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (n,) or np.any((y < 0) | (y > 1)):
        raise PreconditionError("ranks must be a length-n vector in [0, 1]")
    if config.prefs is not None:
        check_preferences(config.prefs, n)
    if config.name in VERTEX_ITERATIVE:
        table = preference_keys(config, n, y, keys)
        return _run_vertex_iterative(inst, config.name, y, table, removed, seed, record_transcript)
    return _run_pair_order(inst, config, y, keys, removed, seed, record_transcript)


def probe_session(inst: Instance) -> ProbeSession:
    return ProbeSession(inst)


def run_rdo(inst: Instance, prefs: np.ndarray, y: np.ndarray, removed: Iterable[int] = ()) -> RunRecord:
    """Random decision order with fixed preferences, at the given ranks."""
    return run_algorithm(inst, AlgoConfig(RDO, prefs=prefs), y=y, removed=removed)


def run_perturbed_greedy(
    inst: Instance,
    g: Callable,
    y: np.ndarray,
    prefs: np.ndarray | None = None,
    removed: Iterable[int] = (),
) -> RunRecord:
    """Probe all pairs by descending perturbed weight ``(1 - g(min rank)) * w``."""
    return run_algorithm(inst, AlgoConfig(PERTURBED_GREEDY, prefs=prefs, g=g), y=y, removed=removed)


def run_mrg(inst: Instance, seed: SeedLike, removed: Iterable[int] = ()) -> RunRecord:
    """Random decision order and independent random preference lists."""
    return run_algorithm(inst, AlgoConfig(MRG), seed=seed, removed=removed)


def run_ranking(inst: Instance, seed: SeedLike, removed: Iterable[int] = ()) -> RunRecord:
    """One random permutation serves as decision order and common preference."""
    return run_algorithm(inst, AlgoConfig(RANKING), seed=seed, removed=removed)


def run_irp(inst: Instance, order: Sequence[int], seed: SeedLike, removed: Iterable[int] = ()) -> RunRecord:
    """Fixed decision order with independent random preference lists."""
    return run_algorithm(inst, AlgoConfig(IRP, order=tuple(order)), seed=seed, removed=removed)


def run_weight_greedy(inst: Instance, removed: Iterable[int] = ()) -> RunRecord:
    """Probe pairs by descending raw weight, ties lexicographic."""
    return run_algorithm(inst, AlgoConfig(WEIGHT_GREEDY), removed=removed)


def run_random_pair_permutation(inst: Instance, seed: SeedLike, removed: Iterable[int] = ()) -> RunRecord:
    """Probe all pairs in a uniformly random order."""
    return run_algorithm(inst, AlgoConfig(RANDOM_PAIRS), seed=seed, removed=removed)


def rerun_without_vertex(
    inst: Instance,
    config: AlgoConfig,
    y: np.ndarray,
    removed: int,
    seed: SeedLike = None,
    base_removed: Iterable[int] = (),
) -> RunRecord:
    """Rerun with ``removed`` deleted; ranks and preferences stay as they were."""
    if not 0 <= removed < inst.n:
        raise PreconditionError(f"vertex {removed} out of range")
    return run_algorithm(inst, config, y=y, seed=seed, removed=set(base_removed) | {int(removed)})


def run_from_record(inst: Instance, config: AlgoConfig, run: RunRecord, y: np.ndarray | None = None, removed=None) -> RunRecord:
    """Repeat a recorded run, optionally with new ranks or removals."""
    return run_algorithm(
        inst,
        config,
        y=run.ranks if y is None else y,
        seed=run.seed,
        removed=run.removed if removed is None else removed,
    )


# --------------------------------------------------------------------------
# structural utilities
# --------------------------------------------------------------------------


def edge_decision_key(inst: Instance, config: AlgoConfig | None, run: RunRecord, pair: tuple[int, int]) -> float:
    """Monotone quantity along alternating paths: decision time or perturbed weight."""
    a, b = pair
    if inst.is_weighted and config is not None and config.name == PERTURBED_GREEDY:
        return float(perturbed_weights(inst, config.g, run.ranks, np.array([[a, b]]))[0])
    return float(min(run.ranks[a], run.ranks[b]))


def alternating_path(
    run: RunRecord,
    run_removed: RunRecord,
    inst: Instance | None = None,
    config: AlgoConfig | None = None,
) -> list[int]:
    """Alternating path between a run and its rerun without one vertex.

    The path starts at the removed vertex and alternates between edges of
    ``run`` and of ``run_removed``. It checks that the path covers the whole
    symmetric difference. Along the path, decision times must be
    non-decreasing (unweighted) or perturbed weights non-increasing with
    strictly increasing probe positions (weighted, needs ``inst`` and
    ``config``). Raises ``StructuralViolation`` otherwise.
    """
    extra = run_removed.removed - run.removed
    if len(extra) != 1:
        raise PreconditionError("second run must remove exactly one more vertex")
    (start,) = extra
    if run.mate[start] < 0:
        raise PreconditionError("removed vertex was unmatched in the original run")
    m1 = set(run.matching.pairs)
    m2 = set(run_removed.matching.pairs)
    diff = m1 ^ m2
    path = [start]
    used: set[tuple[int, int]] = set()
    cur = start
    use_first = True
    while True:
        nxt = int((run.mate if use_first else run_removed.mate)[cur])
        if nxt < 0:
            break
        e = norm_pair(cur, nxt)
        if e not in diff or e in used:
            break
        used.add(e)
        path.append(nxt)
        cur = nxt
        use_first = not use_first
    if used != diff:
        raise StructuralViolation(f"symmetric difference is not a single path from {start}: {sorted(diff - used)}")
    edges = [norm_pair(path[i], path[i + 1]) for i in range(len(path) - 1)]
    if inst is not None and inst.is_weighted and config is not None and config.name == PERTURBED_GREEDY:
        pw = [edge_decision_key(inst, config, run, e) for e in edges]
        for i in range(len(pw) - 1):
            if pw[i + 1] > pw[i]:
                raise StructuralViolation(f"perturbed weights increase along path at step {i}: {pw}")
        pairs = _alive_pairs(inst.n, run.removed)
        order = pair_probe_order(inst, config, run.ranks, None, pairs)
        position = {tuple(map(int, pairs[idx])): p for p, idx in enumerate(order)}
        probe_pos = [position[e] for e in edges]
        if any(probe_pos[i + 1] <= probe_pos[i] for i in range(len(probe_pos) - 1)):
            raise StructuralViolation(f"probe positions not increasing along path: {probe_pos}")
    else:
        times = [float(min(run.ranks[a], run.ranks[b])) for a, b in edges]
        for i in range(len(times) - 1):
            if times[i + 1] < times[i]:
                raise StructuralViolation(f"decision times decrease along path at step {i}: {times}")
    return path


def batch_mates_for_ranks(
    inst: Instance,
    config: AlgoConfig,
    ys: np.ndarray,
    keys: np.ndarray | None = None,
    removed: Iterable[int] = (),
    accel: bool | None = None,
) -> np.ndarray:
    """Mates for many rank vectors sharing one key table (fast path)."""
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    n = inst.n
    alive = np.ones(n, dtype=np.bool_)
    alive[list(removed)] = False
    orders = np.argsort(ys, axis=1, kind="stable")
    if config.name in VERTEX_ITERATIVE:
        indptr, indices = inst.csr
        rows = np.repeat(np.arange(n), np.diff(indptr))
        if config.name == RANKING:
            edge_keys = ys[:, indices]
        else:
            edge_keys = preference_keys(config, n, ys[0], keys)[rows, indices]
        return vertex_greedy(indptr, indices, edge_keys, orders, alive, accel=accel)
    e = inst.edge_array
    edge_orders = pair_probe_orders(inst, config, ys, keys, e)
    return pair_greedy(e[:, 0], e[:, 1], edge_orders, n, alive, accel=accel)


def active_mask(mates: np.ndarray, ys: np.ndarray, v: int) -> np.ndarray:
    """Per row, whether ``v`` is matched and decides before its mate."""
    mates = np.atleast_2d(mates)
    ys = np.atleast_2d(ys)
    mv = mates[:, v]
    matched = mv >= 0
    safe = np.where(matched, mv, 0)
    other = ys[np.arange(len(ys)), safe]
    mine = ys[:, v]
    earlier = (mine < other) | ((mine == other) & (v < safe))
    return matched & earlier


def rank_grid(step: float) -> np.ndarray:
    k = int(round(1.0 / step))
    if not np.isclose(k * step, 1.0):
        raise PreconditionError("grid step must divide 1")
    return np.arange(k + 1) / k


def rank_threshold(
    inst: Instance,
    config: AlgoConfig,
    y: np.ndarray,
    v: int,
    step: float = 1e-3,
    seed: SeedLike = None,
    removed: Iterable[int] = (),
    accel: bool | None = None,
) -> float:
    """Grid estimate of the rank below which ``v`` becomes active.

    Reruns with ``y_v`` reset to every grid value and returns the first grid
    value from which ``v`` is never active again (0 when ``v`` is never
    active). ``v`` must be passive or unmatched at ``y``.
    """
    res = threshold_scan(inst, config, y, v, step=step, seed=seed, removed=removed, accel=accel)
    return res.threshold


@dataclass(frozen=True)
class ThresholdScan:
    threshold: float
    grid: np.ndarray
    active: np.ndarray
    unchanged: np.ndarray
    mates: np.ndarray


def threshold_scan(
    inst: Instance,
    config: AlgoConfig,
    y: np.ndarray,
    v: int,
    step: float = 1e-3,
    seed: SeedLike = None,
    removed: Iterable[int] = (),
    accel: bool | None = None,
) -> ThresholdScan:
    """Rerun over a rank grid for ``v`` and report activity and stability."""
    y = np.asarray(y, dtype=np.float64)
    keys = None
    if config.random_keys:
        _, keys = draw_randomness(config, inst.n, make_rng(seed))
    base = batch_mates_for_ranks(inst, config, y[None, :], keys, removed, accel=accel)[0]
    if active_mask(base[None, :], y[None, :], v)[0]:
        raise PreconditionError(f"vertex {v} is active at the given ranks")
    grid = rank_grid(step)
    ys = np.repeat(y[None, :], len(grid), axis=0)
    ys[:, v] = grid
    mates = batch_mates_for_ranks(inst, config, ys, keys, removed, accel=accel)
    act = active_mask(mates, ys, v)
    unchanged = np.all(mates == base[None, :], axis=1)
    idx = np.flatnonzero(act)
    threshold = float(grid[idx[-1] + 1]) if len(idx) else 0.0
    return ThresholdScan(threshold, grid, act, unchanged, mates)


# --------------------------------------------------------------------------
# batched Monte Carlo fast path
# --------------------------------------------------------------------------


def simulate_mates(
    inst: Instance,
    config: AlgoConfig,
    seed: int,
    trials: int,
    removed: Iterable[int] = (),
    accel: bool | None = None,
    first_trial: int = 0,
) -> np.ndarray:
    """Mates of ``trials`` independent runs with per-trial seeds ``(seed, t)``.

    Trial ``t`` matches ``run_algorithm(inst, config, seed=(seed, t))``
    exactly.
    """
    n = inst.n
    alive = np.ones(n, dtype=np.bool_)
    alive[list(removed)] = False
    out = np.empty((trials, n), dtype=np.int64)
    if trials == 0:
        return out
    indptr, indices = inst.csr
    rows = np.repeat(np.arange(n), np.diff(indptr))
    nnz = len(indices)
    if config.name in VERTEX_ITERATIVE:
        per_trial_keys = config.name != RDO
        chunk = max(1, min(trials, (1 << 22) // max(1, nnz if per_trial_keys else n)))
        shared = preference_keys(config, n, np.zeros(n), None)[rows, indices] if not per_trial_keys else None
        for lo in range(0, trials, chunk):
            hi = min(trials, lo + chunk)
            orders = np.empty((hi - lo, n), dtype=np.int64)
            keys = np.empty((hi - lo, nnz)) if per_trial_keys else None
            for i, t in enumerate(range(first_trial + lo, first_trial + hi)):
                y, table = draw_randomness(config, n, make_rng(trial_seed(seed, t)))
                orders[i] = decision_order(y)
                if per_trial_keys:
                    keys[i] = y[indices] if config.name == RANKING else table[rows, indices]
            out[lo:hi] = vertex_greedy(indptr, indices, keys if per_trial_keys else shared, orders, alive, accel=accel)
        return out
    e = inst.edge_array
    chunk = max(1, min(trials, (1 << 22) // max(1, len(e))))
    for lo in range(0, trials, chunk):
        hi = min(trials, lo + chunk)
        if config.name == PERTURBED_GREEDY:
            ys = np.stack([draw_randomness(config, n, make_rng(trial_seed(seed, t)))[0]
                           for t in range(first_trial + lo, first_trial + hi)])
            orders = pair_probe_orders(inst, config, ys, None, e)
        else:
            orders = np.empty((hi - lo, len(e)), dtype=np.int64)
            for i, t in enumerate(range(first_trial + lo, first_trial + hi)):
                y, table = draw_randomness(config, n, make_rng(trial_seed(seed, t)))
                orders[i] = pair_probe_order(inst, config, y, table, e)
        out[lo:hi] = pair_greedy(e[:, 0], e[:, 1], orders, n, alive, accel=accel)
    return out


def mates_weight(inst: Instance, mates: np.ndarray) -> np.ndarray:
    """Matching weight of each row of mates."""
    mates = np.atleast_2d(mates)
    n = inst.n
    safe = np.where(mates >= 0, mates, 0)
    w = inst.w[np.arange(n)[None, :], safe]
    return np.where(mates >= 0, w, 0.0).sum(axis=1) / 2.0

"""Instance generators, Monte Carlo ratio estimation and stochastic probing.

Trial ``t`` of an experiment with master seed ``s`` draws all of its
randomness from ``(s, t)``, so results do not depend on how trials are
split across threads.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import OracleCapacityError, PreconditionError
from .graph import Instance, Matching, max_matching, ratio
from .matchers import (
    RANKING,
    RDO,
    AlgoConfig,
    make_rng,
    mates_weight,
    run_algorithm,
    run_rdo,
    simulate_mates,
)

RATIO_COLUMNS = ("family", "params", "algorithm", "trials", "seed", "mean", "se", "min", "max")
ENUMERATION_CAP = 8


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------


def _group_preferences(n: int, groups_by_vertex: Sequence[Sequence[Sequence[int]]]) -> np.ndarray:
    """Preference lists from ranked vertex groups, remaining vertices last by index."""
    prefs = np.empty((n, n - 1), dtype=np.int64)
    for u in range(n):
        seen = {u}
        row: list[int] = []
        for group in groups_by_vertex[u]:
            for v in group:
                if v not in seen:
                    row.append(v)
                    seen.add(v)
        row.extend(v for v in range(n) if v not in seen)
        prefs[u] = row
    return prefs


@dataclass(frozen=True)
class DoubleBombLayout:
    """Vertex ranges of the six parts of a Double-Bomb instance."""

    n1: int
    n2: int

    @property
    def A(self) -> range:
        return range(0, self.n2)

    @property
    def B(self) -> range:
        return range(self.n2, 2 * self.n2)

    @property
    def C(self) -> range:
        return range(2 * self.n2, 2 * self.n2 + self.n1)

    @property
    def D(self) -> range:
        return range(2 * self.n2 + self.n1, 2 * self.n2 + 2 * self.n1)

    @property
    def E(self) -> range:
        s = 2 * self.n2 + 2 * self.n1
        return range(s, s + self.n2)

    @property
    def F(self) -> range:
        s = 3 * self.n2 + 2 * self.n1
        return range(s, s + self.n2)

    @property
    def n(self) -> int:
        return 4 * self.n2 + 2 * self.n1


def gen_double_bomb(n1: int, n2: int, cross_block: int | None = None) -> tuple[Instance, np.ndarray]:
    """Six-part bipartite instance on which RDO with group preferences does poorly.

    Parts ``A, B, E, F`` have ``n2`` vertices and ``C, D`` have ``n1``.
    Edges: ``C[i]-D[i]``; ``A[j]-B[j]`` and ``E[j]-F[j]``; all ``B-C`` and
    ``D-E`` pairs; ``B[i]-E[j]`` for ``i, j < cross_block``. The default
    block is all of ``B x E`` (``cross_block = n2``), the variant whose
    RDO ratios bottom out near 0.646 around ``n2 / n1 = 1.5``; pass
    ``cross_block = n1`` for the smaller block. Preferences: ``B``
    ranks ``E > C > A``, ``C`` ranks ``B > D``, ``E`` ranks ``B > D > F``,
    ``D`` ranks ``E > C``; lower index first inside a part.
    """
    if n1 < 1 or n2 < n1:
        raise PreconditionError("double-bomb needs 1 <= n1 <= n2")
    k = n2 if cross_block is None else int(cross_block)
    if not 0 <= k <= n2:
        raise PreconditionError("cross_block must lie in [0, n2]")
    L = DoubleBombLayout(n1, n2)
    A, B, C, D, E, F = L.A, L.B, L.C, L.D, L.E, L.F
    edges: list[tuple[int, int]] = []
    edges += [(C[i], D[i]) for i in range(n1)]
    edges += [(A[j], B[j]) for j in range(n2)]
    edges += [(E[j], F[j]) for j in range(n2)]
    edges += [(B[j], C[i]) for i in range(n1) for j in range(n2)]
    edges += [(D[i], E[j]) for i in range(n1) for j in range(n2)]
    edges += [(B[i], E[j]) for i in range(k) for j in range(k)]
    part = np.zeros(L.n, dtype=np.int64)
    for grp in (B, D, F):
        part[list(grp)] = 1
    groups: list[list[Sequence[int]]] = [[] for _ in range(L.n)]
    for v in A:
        groups[v] = [B]
    for v in B:
        groups[v] = [E, C, A]
    for v in C:
        groups[v] = [B, D]
    for v in D:
        groups[v] = [E, C]
    for v in E:
        groups[v] = [B, D, F]
    for v in F:
        groups[v] = [E]
    prefs = _group_preferences(L.n, groups)
    return Instance.unweighted(L.n, edges, part.tolist()), prefs


def double_bomb_edge_count(n1: int, n2: int, cross_block: int | None = None) -> int:
    k = n2 if cross_block is None else int(cross_block)
    return n1 + 2 * n2 + 2 * n1 * n2 + k * k


def gen_dyer_frieze(n: int) -> tuple[Instance, np.ndarray]:
    """Pendant edges ``u_i - v_i`` plus a complete bipartite graph between the two halves of the ``u``'s.

    Vertex ``u_i`` is ``i`` and ``v_i`` is ``n + i``. The returned decision
    order lists every ``u`` before every ``v``.
    """
    if n < 2 or n % 2:
        raise PreconditionError("dyer-frieze needs an even n >= 2")
    half = n // 2
    edges = [(i, n + i) for i in range(n)]
    edges += [(i, j) for i in range(half) for j in range(half, n)]
    part = [0] * half + [1] * half + [1] * half + [0] * half
    order = np.arange(2 * n, dtype=np.int64)
    return Instance.unweighted(2 * n, edges, part), order


def gen_four_vertex() -> tuple[Instance, np.ndarray]:
    """Vertices ``a, b, c, d`` = 0..3 with edges ab, ac, bc, cd; everyone prefers c > b > a > d."""
    inst = Instance.unweighted(4, [(0, 1), (0, 2), (1, 2), (2, 3)])
    common = [2, 1, 0, 3]
    prefs = np.array([[v for v in common if v != u] for u in range(4)], dtype=np.int64)
    return inst, prefs


def gen_erdos_renyi(n: int, p: float, seed: int, bipartite: bool = False) -> Instance:
    """``G(n, p)``; with ``bipartite`` only pairs across a random bipartition are kept."""
    rng = make_rng((int(seed), 0x9E0))
    part = rng.integers(0, 2, n) if bipartite else None
    edges = []
    coins = rng.random((n, n))
    for u in range(n):
        for v in range(u + 1, n):
            if part is not None and part[u] == part[v]:
                continue
            if coins[u, v] < p:
                edges.append((u, v))
    return Instance.unweighted(n, edges, None if part is None else part.tolist())


def gen_random_weighted(
    n: int,
    p: float,
    seed: int,
    weight_dist: str = "uniform",
    bipartite: bool = False,
) -> Instance:
    """Random weighted instance: ``G(n, p)`` edges, weights on every pair.

    ``weight_dist`` is ``uniform`` (on ``[0, 1)``), ``integer`` (1..10) or
    ``exponential`` (mean 1).
    """
    base = gen_erdos_renyi(n, p, seed, bipartite)
    rng = make_rng((int(seed), 0x9E1))
    if weight_dist == "uniform":
        raw = rng.random((n, n))
    elif weight_dist == "integer":
        raw = rng.integers(1, 11, (n, n)).astype(np.float64)
    elif weight_dist == "exponential":
        raw = rng.exponential(1.0, (n, n))
    else:
        raise PreconditionError(f"unknown weight distribution {weight_dist!r}")
    w = np.triu(raw, 1)
    w = w + w.T
    return Instance.weighted(n, base.edges, w, base.bipartition)


@dataclass(frozen=True)
class GeneratorSpec:
    family: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def describe(self) -> str:
        return ";".join(f"{k}={v}" for k, v in sorted(self.params.items()))


def generate(spec: GeneratorSpec) -> tuple[Instance, np.ndarray | None, np.ndarray | None]:
    """Instance, preference profile (if any) and fixed decision order (if any)."""
    p = spec.params
    if spec.family == "double-bomb":
        block = p.get("cross_block")
        inst, prefs = gen_double_bomb(int(p["n1"]), int(p["n2"]), None if block is None else int(block))
        return inst, prefs, None
    if spec.family == "dyer-frieze":
        inst, order = gen_dyer_frieze(int(p["n"]))
        return inst, None, order
    if spec.family == "four-vertex":
        inst, prefs = gen_four_vertex()
        return inst, prefs, None
    if spec.family == "erdos-renyi":
        return gen_erdos_renyi(int(p["n"]), float(p["p"]), spec.seed, bool(p.get("bipartite", False))), None, None
    if spec.family == "random-weighted":
        inst = gen_random_weighted(
            int(p["n"]),
            float(p["p"]),
            spec.seed,
            str(p.get("weight_dist", "uniform")),
            bool(p.get("bipartite", False)),
        )
        return inst, None, None
    raise PreconditionError(f"unknown family {spec.family!r}")


# --------------------------------------------------------------------------
# ratio estimation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RatioEstimate:
    family: str
    params: str
    algorithm: str
    trials: int
    seed: int
    mean: float
    se: float
    min: float
    max: float
    opt: float
    opt_source: str

    def csv_row(self) -> list:
        return [self.family, self.params, self.algorithm, self.trials, self.seed,
                repr(self.mean), repr(self.se), repr(self.min), repr(self.max)]

    def to_doc(self) -> dict:
        return asdict(self)


def summarize(values: np.ndarray) -> tuple[float, float, float, float]:
    """Mean, standard error, min and max with exactly rounded summation."""
    values = np.asarray(values, dtype=np.float64)
    t = len(values)
    mean = math.fsum(values) / t
    se = math.sqrt(math.fsum((values - mean) ** 2) / (t - 1) / t) if t > 1 else 0.0
    return mean, se, float(values.min()), float(values.max())


def trial_ratios(
    inst: Instance,
    config: AlgoConfig,
    trials: int,
    seed: int,
    opt: float,
    accel: bool | None = None,
    threads: int = 1,
    block: int = 256,
) -> np.ndarray:
    """Per-trial ratios ``w(M) / opt`` from the batched fast path."""
    starts = list(range(0, trials, block))

    def work(lo: int) -> np.ndarray:
        hi = min(trials, lo + block)
        mates = simulate_mates(inst, config, seed, hi - lo, accel=accel, first_trial=lo)
        return mates_weight(inst, mates)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(lo) for lo in starts]
    weights = np.concatenate(parts) if parts else np.zeros(0)
    if opt <= 0:
        return np.ones_like(weights)
    return weights / opt


def estimate_ratio(
    inst: Instance,
    config: AlgoConfig,
    trials: int,
    seed: int,
    opt: float | None = None,
    family: str = "instance",
    params: str = "",
    accel: bool | None = None,
    threads: int = 1,
) -> RatioEstimate:
    """Mean approximation ratio over independent seeded trials.

    ``opt`` may be supplied when the optimum is known by construction;
    otherwise the exact oracle is used.
    """
    if trials <= 0:
        raise PreconditionError("need at least one trial")
    source = "by-construction"
    if opt is None:
        try:
            opt = max_matching(inst).weight
        except OracleCapacityError as exc:
            raise PreconditionError(f"optimum unavailable: {exc}") from exc
        source = "oracle"
    ratios = trial_ratios(inst, config, trials, seed, opt, accel=accel, threads=threads)
    mean, se, lo, hi = summarize(ratios)
    return RatioEstimate(family, params, config.label or config.name, trials, seed, mean, se, lo, hi, float(opt), source)


def ratio_csv(rows: Iterable[RatioEstimate]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RATIO_COLUMNS)
    for r in rows:
        writer.writerow(r.csv_row())
    return buf.getvalue()


# --------------------------------------------------------------------------
# exact expectation by enumeration
# --------------------------------------------------------------------------


def enumerate_exact_expectation(
    inst: Instance,
    prefs: np.ndarray | None = None,
    algo: str = RDO,
    cap: int = ENUMERATION_CAP,
) -> Fraction:
    """Exact expected matching weight over all ``n!`` decision orders.

    For RDO the preference lists stay fixed; for Ranking each permutation is
    also every vertex's preference order. Weights enter as exact fractions.
    """
    n = inst.n
    if n > cap:
        raise OracleCapacityError(f"enumeration refuses n={n} > cap={cap}")
    if algo not in (RDO, RANKING):
        raise PreconditionError("enumeration supports rdo and ranking")
    if algo == RDO and prefs is None:
        raise PreconditionError("rdo enumeration needs a preference profile")
    total = Fraction(0)
    count = 0
    for perm in itertools.permutations(range(n)):
        y = np.empty(n)
        y[list(perm)] = (np.arange(n) + 0.5) / n
        if algo == RDO:
            run = run_rdo(inst, prefs, y)
        else:
            run = run_algorithm(inst, AlgoConfig(RANKING), y=y)
        total += sum((Fraction(float(inst.w[u, v])) for u, v in run.matching.pairs), Fraction(0))
        count += 1
    return total / max(count, 1)


def enumerate_random_preference_expectation(
    inst: Instance,
    order: Sequence[int] | None = None,
    cap: int = ENUMERATION_CAP,
    max_runs: int = 2_000_000,
) -> Fraction:
    """Exact expected weight of MRG (``order=None``) or IRP (fixed ``order``).

    A vertex only ever succeeds on neighbors and skips everything else, so
    the outcome depends on each preference list only through the relative
    order of that vertex's neighbors. Enumerating those orders (each equally
    likely under uniform lists) together with every decision order (MRG) or
    the fixed one (IRP) gives the exact expectation.
    """
    n = inst.n
    if n > cap:
        raise OracleCapacityError(f"enumeration refuses n={n} > cap={cap}")
    nbrs = [sorted(v for v in range(n) if v != u and inst.has_edge(u, v)) for u in range(n)]
    per_vertex = [list(itertools.permutations(nb)) for nb in nbrs]
    profiles = math.prod(len(p) for p in per_vertex)
    orders = [tuple(order)] if order is not None else list(itertools.permutations(range(n)))
    if profiles * len(orders) > max_runs:
        raise OracleCapacityError(f"{profiles * len(orders)} runs exceed the cap of {max_runs}")
    ranks = []
    for o in orders:
        y = np.empty(n)
        y[list(o)] = (np.arange(n) + 0.5) / n
        ranks.append(y)
    total = Fraction(0)
    for choice in itertools.product(*per_vertex):
        prefs = np.empty((n, n - 1), dtype=np.int64)
        for u in range(n):
            head = list(choice[u])
            prefs[u] = head + [v for v in range(n) if v != u and v not in head]
        for y in ranks:
            run = run_rdo(inst, prefs, y)
            total += sum((Fraction(float(inst.w[u, v])) for u, v in run.matching.pairs), Fraction(0))
    return total / (profiles * len(orders))


# --------------------------------------------------------------------------
# stochastic probing
# --------------------------------------------------------------------------

INDEPENDENT = "independent"
SHARED_FACTOR = "shared-factor"


@dataclass(frozen=True, eq=False)
class ProbingSpec:
    """Candidate pairs with existence probabilities and a correlation model.

    Under ``shared-factor`` every candidate pair is tied to one of
    ``latent_count`` fair coins. A pair with probability ``p`` exists with
    probability ``min(1, 2p)`` when its coin is heads and ``max(0, 2p - 1)``
    when tails, using its own uniform draw, so the marginal stays ``p``
    while pairs sharing a coin are positively correlated.
    """

    base: Instance
    prob: np.ndarray
    model: str = INDEPENDENT
    latent_count: int = 1
    assignment: np.ndarray | None = None

    def __post_init__(self) -> None:
        prob = np.asarray(self.prob, dtype=np.float64)
        n = self.base.n
        if prob.shape != (n, n) or np.any(prob < 0) or np.any(prob > 1):
            raise PreconditionError("probabilities must be an n x n table in [0, 1]")
        object.__setattr__(self, "prob", prob)
        if self.model not in (INDEPENDENT, SHARED_FACTOR):
            raise PreconditionError(f"unknown correlation model {self.model!r}")
        if self.model == SHARED_FACTOR:
            if self.latent_count < 1:
                raise PreconditionError("shared-factor model needs at least one latent coin")
            m = self.base.m
            assign = self.assignment
            if assign is None:
                assign = np.arange(m) % self.latent_count
            assign = np.asarray(assign, dtype=np.int64)
            if assign.shape != (m,) or np.any(assign < 0) or np.any(assign >= self.latent_count):
                raise PreconditionError("coin assignment must give one coin per candidate pair")
            object.__setattr__(self, "assignment", assign)

    def realize(self, rng: np.random.Generator) -> Instance:
        """Sample which candidate pairs exist."""
        e = self.base.edge_array
        p = self.prob[e[:, 0], e[:, 1]] if len(e) else np.zeros(0)
        if self.model == INDEPENDENT:
            keep = rng.random(len(e)) < p
        else:
            coins = rng.random(self.latent_count) < 0.5
            own = rng.random(len(e))
            heads = coins[self.assignment]
            cut = np.where(heads, np.minimum(1.0, 2.0 * p), np.maximum(0.0, 2.0 * p - 1.0))
            keep = own < cut
        edges = [tuple(map(int, pair)) for pair in e[keep]]
        return Instance(n=self.base.n, edges=tuple(edges), kind=self.base.kind,
                        weights=self.base.weights, bipartition=self.base.bipartition)


@dataclass(frozen=True)
class ProbingResult:
    ratios: np.ndarray
    mean: float
    se: float
    min: float
    max: float


def run_probing(spec: ProbingSpec, config: AlgoConfig, trials: int, seed: int) -> ProbingResult:
    """Realize the graph, run the (probability-oblivious) algorithm, compare to the realized optimum."""
    if trials <= 0:
        raise PreconditionError("need at least one trial")
    ratios = np.empty(trials)
    for t in range(trials):
        realized = spec.realize(make_rng((int(seed), int(t), 0)))
        opt = max_matching(realized).weight
        run = run_algorithm(realized, config, seed=(int(seed), int(t), 1), record_transcript=False)
        ratios[t] = ratio(run.matching.weight, opt)
    mean, se, lo, hi = summarize(ratios)
    return ProbingResult(ratios, mean, se, lo, hi)


def correlated_probing_spec(n: int, seed: int, weighted: bool = True, latent_count: int = 3) -> ProbingSpec:
    """Complete candidate graph with random weights and probabilities tied to shared coins."""
    rng = make_rng((int(seed), 0x9E2))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    prob = rng.uniform(0.2, 0.9, (n, n))
    prob = np.triu(prob, 1)
    prob = prob + prob.T
    if weighted:
        w = rng.exponential(1.0, (n, n))
        w = np.triu(w, 1)
        base = Instance.weighted(n, pairs, w + w.T)
    else:
        base = Instance.unweighted(n, pairs)
    assign = rng.integers(0, latent_count, len(pairs))
    return ProbingSpec(base, prob, SHARED_FACTOR, latent_count, assign)


def spec_to_doc(spec: GeneratorSpec) -> str:
    return json.dumps({"family": spec.family, "params": spec.params, "seed": spec.seed}, sort_keys=True)


def matching_summary(inst: Instance, m: Matching) -> dict:
    return {"size": m.size, "weight": m.weight, "n": inst.n}

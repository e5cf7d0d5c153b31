"""Instances, matchings, validation and exact maximum-matching oracles.

An :class:`Instance` carries a weight for every unordered vertex pair (the
algorithms know these) plus the hidden edge set (which they only learn by
probing). Unweighted instances have unit weight on every pair.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import OracleCapacityError, PreconditionError
from .kernels import max_matching_dp

UNWEIGHTED = "unweighted"
WEIGHTED = "weighted"
BRUTE_FORCE_CAP = 16

Pair = tuple[int, int]


def norm_pair(u: int, v: int) -> Pair:
    """Return the pair with the smaller endpoint first."""
    u, v = int(u), int(v)
    return (u, v) if u <= v else (v, u)


@dataclass(frozen=True, eq=False)
class Instance:
    """A vertex set with pairwise weights and a hidden edge set.

    Construction only normalizes (sorts pairs, drops duplicates, freezes
    arrays); use :func:`validate_instance` to check invariants. ``weights``
    is ``None`` for unweighted instances.
    """

    n: int
    edges: tuple[Pair, ...]
    kind: str = UNWEIGHTED
    weights: np.ndarray | None = None
    bipartition: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "n", int(self.n))
        edges = tuple(sorted({norm_pair(u, v) for u, v in self.edges}))
        object.__setattr__(self, "edges", edges)
        if self.kind not in (UNWEIGHTED, WEIGHTED):
            raise PreconditionError(f"unknown instance kind {self.kind!r}")
        if self.weights is not None:
            w = np.array(self.weights, dtype=np.float64, copy=True)
            if w.shape != (self.n, self.n):
                raise PreconditionError("weight table must be n x n")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)
        elif self.kind == WEIGHTED:
            raise PreconditionError("weighted instance needs a weight table")
        if self.bipartition is not None:
            object.__setattr__(self, "bipartition", tuple(int(b) for b in self.bipartition))

    # -- constructors -----------------------------------------------------

    @classmethod
    def unweighted(
        cls, n: int, edges: Iterable[Sequence[int]], bipartition: Sequence[int] | None = None
    ) -> "Instance":
        return cls(n=n, edges=tuple(tuple(e) for e in edges), bipartition=bipartition)

    @classmethod
    def weighted(
        cls,
        n: int,
        edges: Iterable[Sequence[int]],
        weights: np.ndarray | Mapping[Pair, float],
        bipartition: Sequence[int] | None = None,
    ) -> "Instance":
        """Build a weighted instance from a full table or a pair -> weight map.

        Pairs missing from a map get weight 0.
        """
        if isinstance(weights, Mapping):
            table = np.zeros((n, n))
            for (u, v), w in weights.items():
                table[u, v] = table[v, u] = float(w)
        else:
            table = np.asarray(weights, dtype=np.float64)
        return cls(
            n=n,
            edges=tuple(tuple(e) for e in edges),
            kind=WEIGHTED,
            weights=table,
            bipartition=bipartition,
        )

    # -- derived views ----------------------------------------------------

    @property
    def is_weighted(self) -> bool:
        return self.kind == WEIGHTED

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def w(self) -> np.ndarray:
        """Dense symmetric weight table (unit off-diagonal when unweighted)."""
        if self.weights is not None:
            return self.weights
        table = np.ones((self.n, self.n)) - np.eye(self.n)
        table.setflags(write=False)
        return table

    @cached_property
    def edge_array(self) -> np.ndarray:
        arr = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        arr.setflags(write=False)
        return arr

    @cached_property
    def edge_weights(self) -> np.ndarray:
        e = self.edge_array
        return self.w[e[:, 0], e[:, 1]] if len(e) else np.zeros(0)

    @cached_property
    def edge_set(self) -> frozenset[Pair]:
        return frozenset(self.edges)

    @cached_property
    def adjacency_matrix(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=bool)
        if self.m:
            e = self.edge_array
            adj[e[:, 0], e[:, 1]] = True
            adj[e[:, 1], e[:, 0]] = True
        adj.setflags(write=False)
        return adj

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Adjacency lists as ``(indptr, indices)`` with neighbors ascending."""
        e = self.edge_array
        if self.m:
            src = np.concatenate([e[:, 0], e[:, 1]])
            dst = np.concatenate([e[:, 1], e[:, 0]])
            order = np.lexsort((dst, src))
            src, dst = src[order], dst[order]
        else:
            src = dst = np.zeros(0, dtype=np.int64)
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        np.cumsum(indptr, out=indptr)
        return indptr, dst.astype(np.int64)

    def has_edge(self, u: int, v: int) -> bool:
        return norm_pair(u, v) in self.edge_set

    def weight(self, u: int, v: int) -> float:
        return float(self.w[u, v])

    def neighbors(self, u: int) -> np.ndarray:
        indptr, indices = self.csr
        return indices[indptr[u] : indptr[u + 1]]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        if (self.n, self.kind, self.edges, self.bipartition) != (
            other.n,
            other.kind,
            other.edges,
            other.bipartition,
        ):
            return False
        if self.weights is None or other.weights is None:
            return self.weights is None and other.weights is None
        return bool(np.array_equal(self.weights, other.weights))

    def __hash__(self) -> int:
        return hash((self.n, self.kind, self.edges, self.bipartition))

    def __repr__(self) -> str:
        part = ", bipartite" if self.bipartition is not None else ""
        return f"Instance(n={self.n}, m={self.m}, kind={self.kind}{part})"


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate_instance`: ``ok`` or the first violation."""

    ok: bool
    violation: str | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok


def validate_instance(inst: Instance) -> ValidationReport:
    """Check instance invariants and report the first one that fails."""
    n = inst.n
    if n < 0:
        return ValidationReport(False, "negative vertex count")
    for u, v in inst.edges:
        if u == v:
            return ValidationReport(False, "self-loop", f"edge ({u},{v})")
        if u < 0 or v >= n:
            return ValidationReport(False, "vertex out of range", f"edge ({u},{v})")
    if inst.weights is not None:
        w = inst.weights
        if not np.all(np.isfinite(w)):
            return ValidationReport(False, "non-finite weight")
        if np.any(w < 0):
            return ValidationReport(False, "negative weight")
        if not np.array_equal(w, w.T):
            return ValidationReport(False, "asymmetric weights")
        if inst.kind == UNWEIGHTED:
            off = ~np.eye(n, dtype=bool)
            if not np.all(w[off] == 1.0):
                return ValidationReport(False, "non-unit weight on unweighted instance")
    if inst.bipartition is not None:
        part = inst.bipartition
        if len(part) != n or any(b not in (0, 1) for b in part):
            return ValidationReport(False, "bad bipartition labels")
        for u, v in inst.edges:
            if part[u] == part[v]:
                return ValidationReport(False, "non-crossing edge", f"edge ({u},{v})")
    return ValidationReport(True)


# --------------------------------------------------------------------------
# matchings
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Matching:
    """Vertex-disjoint pairs of an instance and their total weight."""

    pairs: tuple[Pair, ...]
    weight: float = field(default=0.0)

    @classmethod
    def from_pairs(cls, inst: Instance, pairs: Iterable[Sequence[int]]) -> "Matching":
        ps = tuple(sorted(norm_pair(u, v) for u, v in pairs))
        return cls(ps, matching_weight(inst, ps))

    @classmethod
    def from_mate(cls, inst: Instance, mate: Sequence[int]) -> "Matching":
        ps = [(u, int(v)) for u, v in enumerate(mate) if v > u]
        return cls.from_pairs(inst, ps)

    @property
    def size(self) -> int:
        return len(self.pairs)

    def mate(self, n: int) -> np.ndarray:
        out = np.full(n, -1, dtype=np.int64)
        for u, v in self.pairs:
            out[u] = v
            out[v] = u
        return out

    def __contains__(self, pair: object) -> bool:
        if not isinstance(pair, tuple) or len(pair) != 2:
            return False
        return norm_pair(*pair) in set(self.pairs)


def matching_weight(inst: Instance, pairs: Iterable[Pair]) -> float:
    """Sum of pair weights, accumulated exactly and in sorted pair order."""
    return math.fsum(inst.w[u, v] for u, v in sorted(pairs))


def check_matching(inst: Instance, matching: Matching) -> None:
    """Raise ``PreconditionError`` unless ``matching`` is a valid matching of ``inst``."""
    seen: set[int] = set()
    for u, v in matching.pairs:
        if not inst.has_edge(u, v):
            raise PreconditionError(f"pair ({u},{v}) is not an edge")
        if u in seen or v in seen:
            raise PreconditionError(f"vertex reused in pair ({u},{v})")
        seen.update((u, v))
    if matching.weight != matching_weight(inst, matching.pairs):
        raise PreconditionError("stored matching weight differs from recomputed sum")


def perfect_partners(matching: Matching, n: int) -> np.ndarray:
    """Partner map of a fixed maximum matching (``-1`` for uncovered vertices)."""
    return matching.mate(n)


# --------------------------------------------------------------------------
# oracles
# --------------------------------------------------------------------------


def brute_force_max_matching(inst: Instance, cap: int = BRUTE_FORCE_CAP) -> Matching:
    """Exact optimum by exhaustive subset dynamic programming (``n <= cap``)."""
    if inst.n > cap:
        raise OracleCapacityError(f"brute force refuses n={inst.n} > cap={cap}")
    _, mate = max_matching_dp(inst.w, inst.adjacency_matrix)
    return Matching.from_mate(inst, mate)


def _nx_graph(inst: Instance, weighted: bool) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(range(inst.n))
    if weighted:
        for (u, v), w in zip(inst.edges, inst.edge_weights):
            g.add_edge(u, v, weight=float(w))
    else:
        g.add_edges_from(inst.edges)
    return g


def _bipartite_weighted(inst: Instance) -> Matching:
    part = np.asarray(inst.bipartition)
    left = np.flatnonzero(part == 0)
    right = np.flatnonzero(part == 1)
    if len(left) == 0 or len(right) == 0:
        return Matching((), 0.0)
    sub = np.where(inst.adjacency_matrix[np.ix_(left, right)], inst.w[np.ix_(left, right)], 0.0)
    rows, cols = linear_sum_assignment(sub, maximize=True)
    pairs = [
        (int(left[r]), int(right[c]))
        for r, c in zip(rows, cols)
        if sub[r, c] > 0 and inst.has_edge(left[r], right[c])
    ]
    return Matching.from_pairs(inst, pairs)


def max_matching(inst: Instance, weighted_solver: str | None = None) -> Matching:
    """Maximum-cardinality (unweighted) or maximum-weight (weighted) matching.

    Unweighted instances use Hopcroft-Karp when a bipartition is given and
    Edmonds' blossom algorithm otherwise. Weighted bipartite instances use an
    assignment solver. Weighted general instances use exhaustive search up
    to ``BRUTE_FORCE_CAP`` vertices; beyond that pass
    ``weighted_solver="blossom"`` to opt in to the floating-point blossom
    solver, otherwise ``OracleCapacityError`` is raised.
    """
    if inst.m == 0:
        return Matching((), 0.0)
    if not inst.is_weighted:
        if inst.bipartition is not None:
            top = [v for v in range(inst.n) if inst.bipartition[v] == 0]
            mate = nx.bipartite.hopcroft_karp_matching(_nx_graph(inst, False), top_nodes=top)
            return Matching.from_pairs(inst, [(u, v) for u, v in mate.items() if u < v])
        pairs = nx.max_weight_matching(_nx_graph(inst, False), maxcardinality=True)
        return Matching.from_pairs(inst, pairs)
    if inst.bipartition is not None:
        return _bipartite_weighted(inst)
    if inst.n <= BRUTE_FORCE_CAP:
        return brute_force_max_matching(inst)
    if weighted_solver == "blossom":
        pairs = nx.max_weight_matching(_nx_graph(inst, True), maxcardinality=False)
        return Matching.from_pairs(inst, pairs)
    raise OracleCapacityError(
        f"oracle capacity exceeded: weighted general instance with n={inst.n} "
        f"> {BRUTE_FORCE_CAP} and no polynomial solver configured"
    )


def optimum_value(inst: Instance, weighted_solver: str | None = None) -> float:
    return max_matching(inst, weighted_solver).weight


def ratio(alg_weight: float, opt_weight: float) -> float:
    """Approximation ratio with the convention that an empty optimum scores 1."""
    if opt_weight <= 0:
        return 1.0
    return alg_weight / opt_weight


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------


def instance_to_doc(inst: Instance) -> dict:
    doc: dict = {"n": inst.n, "kind": inst.kind}
    if inst.bipartition is not None:
        doc["bipartition"] = list(inst.bipartition)
    doc["edges"] = [[u, v] for u, v in inst.edges]
    if inst.weights is None:
        doc["weights"] = "unit"
    else:
        w = inst.weights
        doc["weights"] = [
            [u, v, float(w[u, v])] for u in range(inst.n) for v in range(u + 1, inst.n) if w[u, v] != 0
        ]
    return doc


def instance_from_doc(doc: Mapping) -> Instance:
    n = int(doc["n"])
    kind = doc.get("kind", UNWEIGHTED)
    edges = [tuple(e) for e in doc.get("edges", [])]
    bip = doc.get("bipartition")
    weights = doc.get("weights", "unit")
    if weights == "unit":
        if kind != UNWEIGHTED:
            raise PreconditionError("unit weights require an unweighted instance")
        return Instance.unweighted(n, edges, bip)
    table = np.zeros((n, n))
    for u, v, w in weights:
        table[int(u), int(v)] = table[int(v), int(u)] = float(w)
    return Instance(n=n, edges=tuple(edges), kind=kind, weights=table, bipartition=bip)


def dump_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_doc(inst)) + "\n")


def load_instance(path: str | Path) -> Instance:
    return instance_from_doc(json.loads(Path(path).read_text()))

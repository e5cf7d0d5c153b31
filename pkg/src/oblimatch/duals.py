"""Gain sharing: turning a matching into per-vertex dual values.

Every rule splits each matched edge's weight between its endpoints, so
the dual values always sum to the matching weight. The general-graph rules
then move part of an active vertex's share to its *victim*: the perfect
partner ``v`` of the vertex ``u`` that ``z`` matched, when ``u`` and ``v``
would match each other if ``z`` were removed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import PreconditionError, StructuralViolation
from .graph import Instance, max_matching, perfect_partners
from .matchers import (
    ACTIVE,
    PASSIVE,
    AlgoConfig,
    RunRecord,
    run_algorithm,
    trial_seed,
)

BIPARTITE = "bipartite"
GENERAL = "general"
WEIGHTED = "weighted"
SHARING_MODES = (BIPARTITE, GENERAL, WEIGHTED)


def _const(value: float) -> Callable[[np.ndarray], np.ndarray]:
    def f(y):
        return np.full(np.shape(y), float(value)) if np.ndim(y) else float(value)

    return f


@dataclass(frozen=True, eq=False)
class GainFunctions:
    """The sharing function ``g`` and compensation function ``h``.

    ``m(y) = min(g(y) - h(y), 1 - g(y))`` is the guaranteed share of a
    matched vertex with rank ``y``.
    """

    g: Callable
    h: Callable

    def m(self, y):
        gy = np.asarray(self.g(y), dtype=np.float64)
        return np.minimum(gy - np.asarray(self.h(y), dtype=np.float64), 1.0 - gy)

    @classmethod
    def bipartite(cls, g: Callable) -> "GainFunctions":
        return cls(g=g, h=_const(0.0))

    @classmethod
    def weighted(cls, g: Callable) -> "GainFunctions":
        """``h = (1 - g) / 10`` as used for edge-weighted graphs."""

        def h(y):
            return (1.0 - np.asarray(g(y), dtype=np.float64)) / 10.0

        return cls(g=g, h=h)

    def check(self, mode: str, grid: int = 1001) -> None:
        """Raise ``PreconditionError`` if the mode's invariants fail on a grid."""
        ys = np.linspace(0.0, 1.0, grid)
        gy = np.asarray(self.g(ys), dtype=np.float64)
        hy = np.asarray(self.h(ys), dtype=np.float64)
        if np.any(np.diff(gy) < -1e-12):
            raise PreconditionError("g must be non-decreasing")
        if np.any(gy < -1e-12) or np.any(gy > 1 + 1e-12):
            raise PreconditionError("g must map into [0, 1]")
        if mode == GENERAL and self.m(ys).min() < hy.max() - 1e-12:
            raise PreconditionError("general sharing needs min m >= max h")
        if mode == WEIGHTED:
            if np.any(gy < 0.4 - 1e-12) or np.any(gy > 0.6 + 1e-12):
                raise PreconditionError("weighted sharing needs g in [0.4, 0.6]")
            if not np.allclose(hy, (1.0 - gy) / 10.0, rtol=0, atol=1e-12):
                raise PreconditionError("weighted sharing needs h = (1 - g) / 10")


@dataclass(frozen=True)
class Victim:
    """``v`` is the victim of ``z``: ``z`` matched ``u``, and ``u``-``v`` match once ``z`` is gone."""

    z: int
    u: int
    v: int


VictimMap = Mapping[int, Victim]


def _g(gf: GainFunctions, y: float) -> float:
    return float(np.asarray(gf.g(np.array([y])), dtype=np.float64)[0])


def _h(gf: GainFunctions, y: float) -> float:
    return float(np.asarray(gf.h(np.array([y])), dtype=np.float64)[0])


def _active_partner(run: RunRecord, v: int) -> int:
    """Active endpoint of ``v``'s matched edge."""
    x = int(run.mate[v])
    return v if run.roles[v] == ACTIVE else x


def base_shares(run: RunRecord, gf: GainFunctions, inst: Instance | None = None) -> np.ndarray:
    """Step one: active ``u`` keeps ``g(y_u) w``, its passive partner ``(1 - g(y_u)) w``."""
    alpha = np.zeros(run.n)
    for a, b in run.matching.pairs:
        act = a if run.roles[a] == ACTIVE else b
        pas = b if act == a else a
        if run.roles[pas] != PASSIVE:
            raise StructuralViolation(f"edge ({a},{b}) lacks one active and one passive endpoint")
        w = 1.0 if inst is None else float(inst.w[a, b])
        gy = _g(gf, float(run.ranks[act]))
        alpha[act] = gy * w
        alpha[pas] = (1.0 - gy) * w
    return alpha


def share_gains_bipartite(run: RunRecord, gf: GainFunctions) -> np.ndarray:
    """Bipartite rule: no compensation."""
    return base_shares(run, gf)


def find_victims(
    inst: Instance,
    config: AlgoConfig,
    y: np.ndarray,
    perfect: np.ndarray,
    seed=None,
    removed: Iterable[int] = (),
    run: RunRecord | None = None,
) -> dict[int, Victim]:
    """Victims of every active vertex, found by rerunning without it."""
    if run is None:
        run = run_algorithm(inst, config, y=y, seed=seed, removed=removed)
    victims: dict[int, Victim] = {}
    base_removed = set(run.removed)
    for z in range(inst.n):
        if run.roles[z] != ACTIVE:
            continue
        u = int(run.mate[z])
        v = int(perfect[u])
        if v < 0 or v == z or v in base_removed:
            continue
        rerun = run_algorithm(inst, config, y=run.ranks, seed=run.seed, removed=base_removed | {z}, record_transcript=False)
        if int(rerun.mate[u]) == v:
            victims[z] = Victim(z=z, u=u, v=v)
    return victims


def share_gains_general_unweighted(run: RunRecord, gf: GainFunctions, victims: VictimMap) -> np.ndarray:
    """Unweighted general rule: each active ``z`` pays ``h(y_z)`` to an unmatched victim."""
    alpha = base_shares(run, gf)
    for z, vic in sorted(victims.items()):
        if run.mate[vic.v] >= 0:
            continue
        amount = _h(gf, float(run.ranks[z]))
        alpha[z] -= amount
        alpha[vic.v] += amount
        if alpha[z] < -1e-12:
            raise StructuralViolation(f"compensation drives alpha[{z}] negative (min m < max h?)")
    return alpha


def compensation_amount(run: RunRecord, gf: GainFunctions, inst: Instance, vic: Victim) -> float:
    """Weighted compensation from ``vic.z`` to ``vic.v`` (minimal amount meeting the guarantee)."""
    z, u, v = vic.z, vic.u, vic.v
    target = _h(gf, float(run.ranks[z])) * float(inst.w[u, z])
    x = int(run.mate[v])
    if x < 0:
        return target
    w_vx = float(inst.w[v, x])
    if run.roles[v] == ACTIVE:
        yv = float(run.ranks[v])
        held = (_g(gf, yv) - _h(gf, yv)) * w_vx
    else:
        held = (1.0 - _g(gf, float(run.ranks[x]))) * w_vx
    return max(target - held, 0.0)


def share_gains_weighted(run: RunRecord, gf: GainFunctions, victims: VictimMap, inst: Instance) -> np.ndarray:
    """Weighted rule with the three-case compensation.

    Amounts are computed from the step-one shares, so the order in which
    victims are processed does not matter.
    """
    alpha = base_shares(run, gf, inst)
    transfers = [(vic, compensation_amount(run, gf, inst, vic)) for _, vic in sorted(victims.items())]
    for vic, amount in transfers:
        alpha[vic.z] -= amount
        alpha[vic.v] += amount
    if np.any(alpha < -1e-12):
        raise StructuralViolation("weighted compensation drives a dual value negative")
    return alpha


def share_gains(
    mode: str,
    inst: Instance,
    run: RunRecord,
    gf: GainFunctions,
    victims: VictimMap | None = None,
) -> np.ndarray:
    if mode == BIPARTITE:
        return share_gains_bipartite(run, gf)
    if mode == GENERAL:
        return share_gains_general_unweighted(run, gf, victims or {})
    if mode == WEIGHTED:
        return share_gains_weighted(run, gf, victims or {}, inst)
    raise PreconditionError(f"unknown sharing mode {mode!r}")


def default_mode(inst: Instance) -> str:
    if inst.is_weighted:
        return WEIGHTED
    return BIPARTITE if inst.bipartition is not None else GENERAL


# --------------------------------------------------------------------------
# certificate checks
# --------------------------------------------------------------------------


@dataclass
class CertificateReport:
    """Violations found by :func:`check_certificate` (empty lists mean clean)."""

    sum_error: float
    negative: list[int]
    matched_low: list[int]
    victim_low: list[int]
    earlier_low: list[int]

    @property
    def ok(self) -> bool:
        return not (self.negative or self.matched_low or self.victim_low or self.earlier_low) and self.sum_error <= 1e-9


def matched_earlier(run: RunRecord, u: int, v: int) -> bool:
    """``u`` matched before ``v`` got matched (or ``u`` actively matched ``v``)."""
    if run.mate[u] < 0:
        return False
    if int(run.mate[u]) == v:
        return run.roles[u] == ACTIVE
    if run.mate[v] < 0:
        return True
    return run.matched_at[u] < run.matched_at[v]


def check_certificate(
    mode: str,
    inst: Instance,
    run: RunRecord,
    gf: GainFunctions,
    alpha: np.ndarray,
    victims: VictimMap,
    perfect: np.ndarray,
    tol: float = 1e-9,
) -> CertificateReport:
    """Verify the dual-value conditions on one run.

    * the values sum to the matching weight and are non-negative;
    * a matched vertex keeps at least ``m(y)`` (unweighted) or at least its
      guaranteed fraction of its own edge weight (weighted);
    * each victim ends with at least ``h(y_z)`` (times ``w_uz`` when weighted);
    * weighted only: a vertex matched earlier than its perfect partner keeps
      ``(g - h)(y_u) w_uv`` when active and ``(1 - g(y_u)) w_uv`` when passive.
    """
    total = run.matching.weight
    sum_error = abs(math.fsum(alpha) - total)
    negative = [int(v) for v in np.flatnonzero(alpha < -tol)]
    matched_low: list[int] = []
    victim_low: list[int] = []
    earlier_low: list[int] = []
    y = run.ranks
    for v in range(run.n):
        x = int(run.mate[v])
        if x < 0:
            continue
        if mode == WEIGHTED:
            w = float(inst.w[v, x])
            a = _active_partner(run, v)
            if run.roles[v] == ACTIVE:
                need = (_g(gf, y[v]) - _h(gf, y[v])) * w
            else:
                need = (1.0 - _g(gf, y[a])) * w
        else:
            need = float(gf.m(np.array([y[v]]))[0])
        if alpha[v] < need - tol:
            matched_low.append(v)
    for z, vic in victims.items():
        need = _h(gf, y[z]) * (float(inst.w[vic.u, z]) if mode == WEIGHTED else 1.0)
        if alpha[vic.v] < need - tol:
            victim_low.append(vic.v)
    if mode == WEIGHTED:
        for u in range(run.n):
            v = int(perfect[u])
            if v < 0 or not matched_earlier(run, u, v):
                continue
            w_uv = float(inst.w[u, v])
            if run.roles[u] == ACTIVE:
                need = (_g(gf, y[u]) - _h(gf, y[u])) * w_uv
            else:
                need = (1.0 - _g(gf, y[u])) * w_uv
            if alpha[u] < need - tol:
                earlier_low.append(u)
    return CertificateReport(sum_error, negative, matched_low, victim_low, earlier_low)


def certify_run(
    inst: Instance,
    config: AlgoConfig,
    gf: GainFunctions,
    y: np.ndarray | None = None,
    seed=None,
    perfect: np.ndarray | None = None,
    mode: str | None = None,
) -> tuple[RunRecord, np.ndarray, dict[int, Victim], CertificateReport]:
    """Run, find victims, share gains and check the certificate in one go."""
    mode = mode or default_mode(inst)
    if perfect is None:
        perfect = perfect_partners(max_matching(inst), inst.n)
    run = run_algorithm(inst, config, y=y, seed=seed)
    victims = {} if mode == BIPARTITE else find_victims(inst, config, run.ranks, perfect, run=run)
    alpha = share_gains(mode, inst, run, gf, victims)
    report = check_certificate(mode, inst, run, gf, alpha, victims, perfect)
    return run, alpha, victims, report


# --------------------------------------------------------------------------
# per-pair Monte Carlo bound
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PairBoundEstimate:
    pair: tuple[int, int]
    trials: int
    mean: float
    se: float

    def csv_row(self) -> list:
        return [f"{self.pair[0]}-{self.pair[1]}", self.trials, repr(self.mean), repr(self.se)]


PAIR_BOUND_COLUMNS = ("pair", "trials", "mean", "se")


def estimate_pair_bound(
    inst: Instance,
    config: AlgoConfig,
    gf: GainFunctions,
    perfect: np.ndarray,
    pair: tuple[int, int],
    trials: int,
    seed: int,
    mode: str | None = None,
) -> PairBoundEstimate:
    """Monte Carlo mean and standard error of ``alpha_u + alpha_v`` over fresh ranks."""
    if trials <= 0:
        raise PreconditionError("need at least one trial")
    u, v = pair
    if int(perfect[u]) != v:
        raise PreconditionError(f"({u},{v}) is not a pair of the fixed maximum matching")
    mode = mode or default_mode(inst)
    samples = np.empty(trials)
    for t in range(trials):
        run = run_algorithm(inst, config, seed=trial_seed(seed, t))
        victims = {} if mode == BIPARTITE else find_victims(inst, config, run.ranks, perfect, run=run)
        alpha = share_gains(mode, inst, run, gf, victims)
        samples[t] = alpha[u] + alpha[v]
    mean = math.fsum(samples) / trials
    se = float(samples.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return PairBoundEstimate((int(u), int(v)), trials, mean, se)


def pair_bounds_csv(estimates: Iterable[PairBoundEstimate]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PAIR_BOUND_COLUMNS)
    for est in estimates:
        writer.writerow(est.csv_row())
    return buf.getvalue()

"""Dense simplex solver for ``max c.x  s.t.  A x <= b, x >= 0``.

The solver works on the dual ``min b.u  s.t.  A^T u >= c, u >= 0``. Each
dual constraint ``k`` is written as ``sigma_k (A_k^T u - s_k) (+ a_k) =
sigma_k c_k`` with ``sigma_k = -1`` when ``c_k <= 0`` (the surplus ``s_k``
starts basic) and ``sigma_k = +1`` otherwise (an artificial ``a_k`` starts
basic), so the starting basis is the identity.

Primal rows enter as dual columns, so the primal rows can be generated
lazily: solve over a working set, read ``x`` off the dual multipliers, add
the rows it violates most, and repeat until every row holds. New dual
columns start nonbasic at zero, so the previous basis stays feasible and
the next solve resumes from it.

This is a revised simplex: every iteration refactors the basis with a
fresh LU decomposition and recomputes the basic solution, the multipliers
and the entering column from the original data, so rounding error never
accumulates across pivots. The models solved here have at most a few
hundred dual rows, which keeps the refactorization cheap. Pricing is
Dantzig's rule with a Harris two-pass ratio test and a pivot tolerance
relative to the entering column. A pivot that would leave the basis
numerically singular is undone and its column set aside.

The factor models are heavily degenerate, so phase 2 runs on a slightly
perturbed right-hand side (every basic variable strictly positive), then
drops the perturbation in stages and re-optimizes from the same basis.
Bland's rule is kept as a last resort after a run of pivots without
objective progress.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
STALLED = "stalled"
SINGULAR = "singular"


@dataclass
class SimplexResult:
    status: str
    x: np.ndarray
    value: float
    iterations: int
    rounds: int
    working_rows: np.ndarray
    max_violation: float
    diagnostics: dict = field(default_factory=dict)


class _RevisedDual:
    """The dual over a growing set of primal rows, with an explicit basis."""

    def __init__(self, c: np.ndarray, pivot_tol: float, cost_tol: float):
        self.c = np.asarray(c, dtype=np.float64)
        nv = len(self.c)
        self.nv = nv
        self.sigma = np.where(self.c > 0, 1.0, -1.0)
        self.art_rows = np.flatnonzero(self.sigma > 0)
        self.pivot_tol = pivot_tol
        self.cost_tol = cost_tol
        self.harris_tol = 1e-9
        self.tiny = 1e-12
        # Column blocks: [surplus (nv) | artificial (len(art_rows)) | primal rows ...]
        n_art = len(self.art_rows)
        n_fixed = nv + n_art
        self.raw = np.zeros((nv, n_fixed))
        self.raw[np.arange(nv), np.arange(nv)] = -self.sigma
        self.raw[self.art_rows, nv + np.arange(n_art)] = 1.0
        self.basis = np.arange(nv)
        self.basis[self.art_rows] = nv + np.arange(n_art)
        self.rhs0 = self.sigma * self.c
        self.rhs = self.rhs0.copy()
        self.cost = np.zeros(n_fixed)  # phase-2 cost: b for primal rows
        self.is_art = np.zeros(n_fixed, dtype=bool)
        self.is_art[nv:] = True
        self.row_ids = np.zeros(0, dtype=np.int64)
        self.iterations = 0
        self.rejected_at_end = 0
        self._lu = None

    # -- columns ---------------------------------------------------------

    def add_rows(self, A_rows: np.ndarray, b_rows: np.ndarray, ids: np.ndarray) -> None:
        cols = (self.sigma[:, None] * A_rows.T).astype(np.float64)
        self.raw = np.hstack([self.raw, cols])
        self.cost = np.concatenate([self.cost, b_rows])
        self.is_art = np.concatenate([self.is_art, np.zeros(len(b_rows), dtype=bool)])
        self.row_ids = np.concatenate([self.row_ids, ids])

    # -- linear algebra --------------------------------------------------

    def factor(self) -> bool:
        """LU of the current basis; False when it is numerically singular."""
        with warnings.catch_warnings():
            warnings.simplefilter("error", LinAlgWarning)
            try:
                lu, piv = lu_factor(self.raw[:, self.basis], check_finite=False)
            except (LinAlgWarning, ValueError, np.linalg.LinAlgError):
                return False
        d = np.abs(np.diag(lu))
        if d.min() <= 1e-13 * max(1.0, d.max()):
            return False
        self._lu = (lu, piv)
        return True

    def basic_solution(self) -> np.ndarray:
        return lu_solve(self._lu, self.rhs, check_finite=False)

    def perturb(self, scale: float, rng: np.random.Generator) -> None:
        """Shift the right-hand side so every current basic value grows by ~scale."""
        if scale == 0.0:
            self.rhs = self.rhs0.copy()
            return
        delta = scale * (1.0 + rng.random(self.nv)) * (1.0 + np.abs(self.rhs0).max())
        self.rhs = self.rhs0 + self.raw[:, self.basis] @ delta

    def multipliers(self, costs: np.ndarray) -> np.ndarray:
        return lu_solve(self._lu, costs[self.basis], trans=1, check_finite=False)

    def column(self, q: int) -> np.ndarray:
        return lu_solve(self._lu, self.raw[:, q], check_finite=False)

    # -- pivoting --------------------------------------------------------

    def objective(self, costs: np.ndarray) -> float:
        if not self.factor():
            return np.nan
        return float(costs[self.basis] @ np.maximum(self.basic_solution(), 0.0))

    def run(self, costs: np.ndarray, allow_art: bool, max_iter: int, stall_limit: int) -> str:
        best = np.inf
        stall = 0
        bland = False
        rejected: set[int] = set()
        for _ in range(max_iter):
            if not self.factor():
                return SINGULAR
            xb = np.maximum(self.basic_solution(), 0.0)
            obj = float(costs[self.basis] @ xb)
            if obj < best - 1e-12 * max(1.0, abs(best)):
                best = obj
                stall = 0
                bland = False
            else:
                stall += 1
                if stall >= stall_limit:
                    bland = True
            y = self.multipliers(costs)
            d = costs - y @ self.raw
            eligible = d < -self.cost_tol
            if not allow_art:
                eligible &= ~self.is_art
            eligible[self.basis] = False
            if rejected:
                eligible[list(rejected)] = False
            cand = np.flatnonzero(eligible)
            if len(cand) == 0:
                self.rejected_at_end = len(rejected)
                return OPTIMAL
            q = int(cand[0]) if bland else int(cand[np.argmin(d[cand])])
            col = self.column(q)
            tol = self.pivot_tol * max(1.0, float(np.abs(col).max()))
            # Artificials basic at zero leave first, whatever the sign of their entry.
            art_basic = self.is_art[self.basis] & (np.abs(col) > tol) & (xb <= self.harris_tol)
            if not allow_art and art_basic.any():
                p = int(np.flatnonzero(art_basic)[0])
            else:
                pos = col > tol
                if not pos.any():
                    if (col > self.tiny).any():
                        # Only tiny positive entries: pivoting would make the basis
                        # near-singular, so set the column aside for now.
                        rejected.add(q)
                        continue
                    return UNBOUNDED
                ratios = np.full(len(col), np.inf)
                ratios[pos] = xb[pos] / col[pos]
                if bland:
                    rmin = ratios.min()
                    ties = np.flatnonzero(ratios <= rmin + 1e-12 * max(1.0, abs(rmin)))
                    p = int(ties[np.argmin(self.basis[ties])])
                else:
                    # Harris two-pass test: allow rows to go infeasible by at most
                    # harris_tol, then take the largest pivot among admissible rows.
                    relaxed = np.full(len(col), np.inf)
                    relaxed[pos] = (xb[pos] + self.harris_tol) / col[pos]
                    admissible = np.flatnonzero(ratios <= relaxed.min())
                    p = int(admissible[np.argmax(col[admissible])])
            leaving = self.basis[p]
            self.basis[p] = q
            self.iterations += 1
            if not self.factor():
                self.basis[p] = leaving
                rejected.add(q)
                continue
            rejected.clear()
        return STALLED

    # -- primal recovery -------------------------------------------------

    def primal(self) -> np.ndarray:
        if not self.factor():
            return np.full(self.nv, np.nan)
        y = self.multipliers(self.cost)
        return np.maximum(self.sigma * y, 0.0)


def solve_dense(
    A: np.ndarray,
    b: np.ndarray,
    c: np.ndarray,
    *,
    initial_rows: np.ndarray | None = None,
    batch: int | None = None,
    feas_tol: float = 1e-9,
    pivot_tol: float = 1e-9,
    cost_tol: float = 1e-11,
    max_iter: int = 200_000,
    max_rounds: int = 500,
    stall_limit: int = 50,
) -> SimplexResult:
    """Maximize ``c.x`` subject to ``A x <= b`` and ``x >= 0``.

    ``initial_rows`` seeds the working set (all rows when omitted); the
    rest are brought in ``batch`` at a time, most violated first. The
    returned ``x`` satisfies every row to within ``feas_tol``.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    n_rows, nv = A.shape
    if b.shape != (n_rows,) or c.shape != (nv,):
        raise ValueError("shape mismatch between A, b and c")
    A_in, b_in = A, b
    # Scaling a row leaves its half-space unchanged and evens out the pivots.
    norms = np.abs(A).max(axis=1) if nv else np.zeros(n_rows)
    norms = np.where(norms > 0, norms, 1.0)
    A = A / norms[:, None]
    b = b / norms
    rng = np.random.default_rng(0)
    dual = _RevisedDual(c, pivot_tol, cost_tol)
    if initial_rows is None:
        initial_rows = np.arange(n_rows)
    initial_rows = np.unique(np.asarray(initial_rows, dtype=np.int64))
    in_work = np.zeros(n_rows, dtype=bool)
    in_work[initial_rows] = True
    dual.add_rows(A[initial_rows], b[initial_rows], initial_rows)
    batch = batch or max(nv, 64)

    rounds = 0
    phase = 1 if len(dual.art_rows) else 2
    while True:
        rounds += 1
        if phase == 1:
            phase1_cost = dual.is_art.astype(np.float64)
            status = dual.run(phase1_cost, True, max_iter, stall_limit)
            if status in (STALLED, SINGULAR):
                return _result(STALLED, dual, A_in, b_in, c, rounds, in_work, f"phase 1 ended {status}")
            if dual.objective(phase1_cost) > 1e-9:
                if not in_work.all():
                    rest = np.flatnonzero(~in_work)
                    in_work[rest] = True
                    dual.add_rows(A[rest], b[rest], rest)
                    continue
                # Dual infeasible: the primal is unbounded or infeasible.
                status = INFEASIBLE if _primal_infeasible(A, b) else UNBOUNDED
                return _result(status, dual, A_in, b_in, c, rounds, in_work, "dual infeasible")
            phase = 2
        status = _phase2(dual, max_iter, stall_limit, rng)
        if status == UNBOUNDED:
            return _result(INFEASIBLE, dual, A_in, b_in, c, rounds, in_work, "dual unbounded")
        if status in (STALLED, SINGULAR):
            return _result(STALLED, dual, A_in, b_in, c, rounds, in_work, f"phase 2 ended {status}")
        x = dual.primal()
        slack = b_in - A_in @ x
        bad = np.flatnonzero((slack < -feas_tol) & ~in_work)
        if len(bad) == 0:
            if (slack < -feas_tol).any():
                return _result(STALLED, dual, A_in, b_in, c, rounds, in_work, "working rows violated at optimum")
            return _result(OPTIMAL, dual, A_in, b_in, c, rounds, in_work, "")
        if rounds >= max_rounds:
            return _result(STALLED, dual, A_in, b_in, c, rounds, in_work, "row generation hit the round cap")
        pick = bad[np.argsort(slack[bad], kind="stable")[:batch]]
        in_work[pick] = True
        dual.add_rows(A[pick], b[pick], pick)


PERTURBATION_STAGES = (1e-7, 1e-10, 0.0)


def _phase2(dual: _RevisedDual, max_iter: int, stall_limit: int, rng: np.random.Generator) -> str:
    """Optimize the phase-2 costs through a shrinking right-hand-side perturbation."""
    status = OPTIMAL
    for scale in PERTURBATION_STAGES:
        if not dual.factor():
            return SINGULAR
        dual.perturb(scale, rng)
        status = dual.run(dual.cost, False, max_iter, stall_limit)
        if status != OPTIMAL:
            break
    dual.perturb(0.0, rng)
    return status


def _primal_infeasible(A: np.ndarray, b: np.ndarray) -> bool:
    """Phase-1 check: is ``{x >= 0 : A x <= b}`` empty?"""
    res = solve_dense(A, b, np.zeros(A.shape[1]))
    return res.status == INFEASIBLE


def _result(status, dual, A, b, c, rounds, in_work, note) -> SimplexResult:
    x = dual.primal()
    finite = bool(np.all(np.isfinite(x)))
    viol = float(max(0.0, (A @ x - b).max())) if len(b) and finite else (0.0 if finite else np.inf)
    value = float(c @ x) if status == OPTIMAL else (np.inf if status == UNBOUNDED else np.nan)
    diag = {"note": note, "basis_size": dual.nv, "columns": int(dual.raw.shape[1])} if note else {}
    if dual.rejected_at_end:
        diag["rejected_columns"] = dual.rejected_at_end
    return SimplexResult(status, x, value, dual.iterations, rounds, np.flatnonzero(in_work), viol, diag)

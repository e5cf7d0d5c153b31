"""Factor-revealing linear programs for RDO on unweighted graphs.

The analysis lower-bounds ``E[alpha_u + alpha_v]`` by closed-form
functionals ``L(theta, tau[, gamma]; g, h, m)`` of the sharing functions.
With ``g``, ``h`` and ``m`` restricted to step functions on ``n`` equal
cells, each functional is linear in the step values, so

    maximize r  s.t.  r <= L(params; g, h, m)  for every parameter choice

becomes an LP once the continuum of parameters is covered by finitely many
rows that are each no larger than ``L`` somewhere in their cell.

Two relaxations are available.

``tangent`` (default)
    Split parameter space into cells of side ``1 / (n * refine)``. Inside a
    cell every coefficient of ``L`` is a quadratic polynomial of the
    parameters, so the Hessian read off by central differences at the
    centroid is exact. For each cell vertex ``v_q`` the row
    ``r <= L(v_q) - (1/2) d_q' H d_q - E`` is the tangent plane at the
    centroid evaluated at ``v_q``, lowered by a bound ``E`` on the
    curvature term over the cell (using that every variable lies in
    ``[0, 1]``). Any point of the cell is a convex combination of the
    vertices, so the smallest of the cell's rows never exceeds ``L`` there.

``riemann``
    One row per cell. For the bipartite family this is the endpoint
    Riemann relaxation: ``g`` and ``m`` integrals use the pessimistic
    endpoint of each term and ``g(theta)`` is bounded by the next step. For
    the general family each coefficient is replaced by its minimum over the
    cell, obtained from the same vertex-plus-curvature bound.

Variable order: ``r, g_0..g_n, m_0..m_{n-1}`` and, for general graphs,
``h_0..h_{n-1}``. The extra ``g_n`` is the value at ``y = 1``.
"""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError, StructuralViolation
from .simplex import OPTIMAL, SimplexResult, solve_dense

BIPARTITE = "bipartite"
GENERAL = "general"
TANGENT = "tangent"
RIEMANN = "riemann"

LE, GE, EQ = "<=", ">=", "="

# Row kinds. Lower-bound rows are named after the functional they relax.
KIND_L1, KIND_L2 = "L1", "L2"  # bipartite: asymmetric / symmetric case
KIND_E3, KIND_E6, KIND_E7 = "E3", "E6", "E7"  # general: symmetric, gamma = theta, gamma > theta
BOUND_KINDS = (KIND_L1, KIND_L2, KIND_E3, KIND_E6, KIND_E7)

DEFAULT_N = {BIPARTITE: 200, GENERAL: 30}
_CHUNK = 2048


# --------------------------------------------------------------------------
# variable layout and exact linear forms
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Layout:
    """Positions of ``r``, ``g``, ``m`` and ``h`` in the variable vector."""

    n: int
    with_h: bool

    @property
    def n_vars(self) -> int:
        return 2 * self.n + 2 + (self.n if self.with_h else 0)

    def g(self, k: int | np.ndarray) -> int | np.ndarray:
        return 1 + k

    def m(self, k: int | np.ndarray) -> int | np.ndarray:
        return self.n + 2 + k

    def h(self, k: int | np.ndarray) -> int | np.ndarray:
        if not self.with_h:
            raise KeyError("layout has no h variables")
        return 2 * self.n + 2 + k

    @property
    def g_slice(self) -> slice:
        return slice(1, self.n + 2)

    @property
    def m_slice(self) -> slice:
        return slice(self.n + 2, 2 * self.n + 2)

    @property
    def h_slice(self) -> slice:
        return slice(2 * self.n + 2, 3 * self.n + 2)

    def names(self) -> list[str]:
        out = ["r"] + [f"g{k}" for k in range(self.n + 1)] + [f"m{k}" for k in range(self.n)]
        if self.with_h:
            out += [f"h{k}" for k in range(self.n)]
        return out

    def pack(self, g: np.ndarray, m: np.ndarray, h: np.ndarray | None = None, r: float = 0.0) -> np.ndarray:
        x = np.zeros(self.n_vars)
        x[0] = r
        x[self.g_slice] = g
        x[self.m_slice] = m
        if self.with_h:
            x[self.h_slice] = 0.0 if h is None else h
        return x


def seg(n: int, lo: np.ndarray, hi: np.ndarray, a, b) -> np.ndarray:
    """``out[p, k] = integral of (a_p + b_p y) over [lo_p, hi_p) intersected with cell k``.

    Cells are ``[k/n, (k+1)/n)``. Empty or reversed intervals integrate to 0.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    k = np.arange(n)
    L = np.maximum(lo[:, None], k[None, :] / n)
    U = np.minimum(hi[:, None], (k[None, :] + 1) / n)
    U = np.maximum(U, L)
    a = np.broadcast_to(np.asarray(a, dtype=np.float64), lo.shape)[:, None]
    b = np.broadcast_to(np.asarray(b, dtype=np.float64), lo.shape)[:, None]
    return a * (U - L) + b * (U * U - L * L) / 2.0


def cell_of(n: int, y: np.ndarray) -> np.ndarray:
    """Step index of ``y``: ``floor(n y)``, with ``y = 1`` mapped to the last cell."""
    return np.minimum(np.floor(np.asarray(y) * n).astype(np.int64), n - 1)


def bipartite_form(lay: Layout, pts: np.ndarray, ci: np.ndarray, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Constant and coefficient vector of the bipartite bound at ``pts = (theta, tau)``.

    ``L1``: u matched strictly earlier than v;
    ``L2``: u and v match each other when both act last.
    ``ci`` is the step index used for ``g(theta)``. Assumes ``tau <= theta``.
    """
    n = lay.n
    th, ta = pts[:, 0], pts[:, 1]
    P = len(th)
    z = np.zeros(P)
    C = np.zeros(P)
    X = np.zeros((P, lay.n_vars))
    G = X[:, 1 : n + 1]
    M = X[:, lay.m_slice]
    G += seg(n, z, th, 1.0, -1.0) + seg(n, z, ta, 1.0, -1.0)
    M += seg(n, z, np.minimum(th, ta), 0.0, 1.0) + ta[:, None] * seg(n, ta, th, 1.0, 0.0)
    if kind == KIND_L1:
        M += seg(n, z, ta, 0.0, 1.0)
        a = (1 - th) * (1 - th + ta)
        C += a
        X[np.arange(P), lay.g(ci)] -= a
        C += 0.5 * (2 - ta - th) * (th - ta)
    elif kind == KIND_L2:
        M += seg(n, z, np.minimum(th, ta), 0.0, 1.0) + th[:, None] * seg(n, th, ta, 1.0, 0.0)
        C += 0.5 * (1 - th) ** 2 + 0.5 * (1 - ta) ** 2
    else:
        raise PreconditionError(f"unknown bipartite bound {kind!r}")
    return C, X


GENERAL_KINDS = (KIND_E3, "E4", "E5", KIND_E6, KIND_E7)


def general_form(lay: Layout, pts: np.ndarray, ci: np.ndarray, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Constant and coefficient vector of a general-graph bound.

    ``pts`` holds ``(theta, tau)`` or ``(theta, tau, gamma)`` with
    ``tau <= theta <= gamma``. Kinds:

    * ``E3``: u and v match each other when both act last;
    * ``E4``: u matched earlier, the transition ``gamma`` absent;
    * ``E5``: v matched earlier in the graph without ``z``;
    * ``E6``: compensation throughout (``gamma = theta``);
    * ``E7``: compensation only for ``y_u > gamma``.
    """
    n = lay.n
    th, ta = pts[:, 0], pts[:, 1]
    P = len(th)
    ar = np.arange(P)
    z = np.zeros(P)
    one = np.ones(P)
    C = np.zeros(P)
    X = np.zeros((P, lay.n_vars))
    G = X[:, 1 : n + 1]
    H = X[:, lay.h_slice]
    M = X[:, lay.m_slice]
    # Shared term: integral_0^theta (1-y) g(y) - (1 - max(tau, y)) h(y) dy.
    G += seg(n, z, th, 1.0, -1.0)
    H -= seg(n, z, np.minimum(th, ta), 1 - ta, 0.0) + seg(n, ta, th, 1.0, -1.0)
    wedge = 0.5 * (2 - ta - th) * (th - ta)
    corner = (1 - th) ** 2
    if kind == KIND_E3:
        C += 0.5 * (1 - th) ** 2 + 0.5 * (1 - ta) ** 2
        G += seg(n, z, ta, 1.0, -1.0)
        H -= (1 - th)[:, None] * seg(n, z, ta, 1.0, 0.0)
    elif kind == "E4":
        C += corner + wedge
        X[ar, lay.g(ci)] -= corner
        G += seg(n, z, ta, 1.0, -1.0)
        H -= seg(n, z, ta, 1.0, -1.0)
        M += seg(n, z, ta, 0.0, 1.0) + ta[:, None] * seg(n, ta, one, 1.0, 0.0)
    elif kind == "E5":
        C += corner + wedge
        X[ar, lay.g(ci)] -= corner
        M += (1 - th)[:, None] * seg(n, th, one, 1.0, 0.0)
        G += seg(n, z, th, 1.0, -1.0)
    elif kind == KIND_E6:
        C += corner + wedge
        X[ar, lay.g(ci)] -= corner
        X[ar, lay.h(ci)] += corner
        G += seg(n, z, ta, 1.0, -1.0)
    elif kind == KIND_E7:
        ga = pts[:, 2]
        C += corner + wedge
        X[ar, lay.g(ci)] -= corner
        X[ar, lay.h(ci)] += (1 - ga) * (1 - th)
        M += seg(n, z, np.minimum(ga, ta), 0.0, 1.0) + ta[:, None] * seg(n, ta, ga, 1.0, 0.0)
        G += seg(n, z, ta, 1.0, -1.0)
        H -= seg(n, z, np.minimum(ta, ga), ga, -1.0)
    else:
        raise PreconditionError(f"unknown general bound {kind!r}")
    return C, X


# --------------------------------------------------------------------------
# continuous evaluation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StepFunction:
    """``f(y) = values[i]`` on ``[i/n, (i+1)/n)``; ``values[n]`` is the value at ``y = 1``."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64).copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return len(self.values) - 1

    def __call__(self, y):
        y = np.asarray(y, dtype=np.float64)
        if np.any(y < 0) or np.any(y > 1):
            raise PreconditionError("step function is defined on [0, 1]")
        idx = np.minimum(np.floor(y * self.n).astype(np.int64), self.n)
        return self.values[idx]

    def validate(self, tol: float = 1e-9) -> None:
        v = self.values
        if np.any(np.diff(v) < -tol):
            raise StructuralViolation("step function is not non-decreasing")
        if np.any(v < -tol) or np.any(v > 1 + tol):
            raise StructuralViolation("step function leaves [0, 1]")


def bound_value(family: str, kind: str, params, g, m, h=None) -> float:
    """Exact value of a lower-bound functional for step functions ``g``, ``m`` (and ``h``).

    ``g`` has ``n + 1`` entries, ``m`` and ``h`` have ``n``. ``params`` is
    ``(theta, tau)`` or ``(theta, tau, gamma)``.
    """
    g = np.asarray(g, dtype=np.float64)
    n = len(g) - 1
    lay = Layout(n, family == GENERAL)
    x = lay.pack(g, m, h)
    pts = np.asarray(params, dtype=np.float64).reshape(1, -1)
    ci = cell_of(n, pts[:, 0])
    form = bipartite_form if family == BIPARTITE else general_form
    C, X = form(lay, pts, ci, kind)
    return float(C[0] + X[0] @ x)


# --------------------------------------------------------------------------
# relaxation rows
# --------------------------------------------------------------------------


def _hessians(form, lay, centroid, ci, kind, delta):
    P, d = centroid.shape

    def ev(pts):
        return form(lay, pts, ci, kind)

    C0, X0 = ev(centroid)
    HC = np.zeros((P, d, d))
    HX = np.zeros((P, d, d, lay.n_vars))
    E = np.eye(d) * delta
    for a in range(d):
        Cp, Xp = ev(centroid + E[a])
        Cm, Xm = ev(centroid - E[a])
        HC[:, a, a] = (Cp - 2 * C0 + Cm) / delta**2
        HX[:, a, a] = (Xp - 2 * X0 + Xm) / delta**2
        for b in range(a + 1, d):
            r = [ev(centroid + sa * E[a] + sb * E[b]) for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1))]
            HC[:, a, b] = HC[:, b, a] = (r[0][0] - r[1][0] - r[2][0] + r[3][0]) / (4 * delta**2)
            HX[:, a, b] = HX[:, b, a] = (r[0][1] - r[1][1] - r[2][1] + r[3][1]) / (4 * delta**2)
    return ev, HC, HX


def _curvature_bound(H: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Upper bound on ``-(1/2) d' H d`` over ``|d_a| <= s_a``; ``H`` is ``(P, d, d[, k])``."""
    d = s.shape[1]
    extra = (slice(None),) + (None,) * (H.ndim - 3)
    out = np.zeros(H.shape[:1] + H.shape[3:])
    for a in range(d):
        out += 0.5 * np.maximum(0.0, -H[:, a, a]) * (s[:, a] ** 2)[extra]
        for b in range(a + 1, d):
            out += np.abs(H[:, a, b]) * (s[:, a] * s[:, b])[extra]
    return out


def cell_rows(form, lay: Layout, verts: np.ndarray, ci: np.ndarray, kind: str, delta: float, mode: str):
    """Relaxed rows ``r <= C + X.x`` for a batch of cells with vertices ``verts (P, Q, d)``.

    ``mode == TANGENT`` gives ``Q`` rows per cell (vertex-major order);
    ``mode == RIEMANN`` gives one row per cell with every coefficient
    replaced by a lower bound over the cell.
    """
    P, Q, d = verts.shape
    c = verts.mean(axis=1)
    ev, HC, HX = _hessians(form, lay, c, ci, kind, delta)
    D = verts - c[:, None, :]
    s = np.abs(D).max(axis=1)
    TC = np.empty((Q, P))
    TX = np.empty((Q, P, lay.n_vars))
    for q in range(Q):
        Cq, Xq = ev(verts[:, q])
        dq = D[:, q]
        TC[q] = Cq - 0.5 * np.einsum("pa,pab,pb->p", dq, HC, dq)
        TX[q] = Xq - 0.5 * np.einsum("pa,pabk,pb->pk", dq, HX, dq)
    if mode == TANGENT:
        Hmin = HC + np.minimum(HX, 0.0).sum(-1)
        Habs = np.abs(HC) + np.abs(HX).sum(-1)
        d2 = s.shape[1]
        E = np.zeros(P)
        for a in range(d2):
            E += 0.5 * np.maximum(0.0, -Hmin[:, a, a]) * s[:, a] ** 2
            for b in range(a + 1, d2):
                E += Habs[:, a, b] * s[:, a] * s[:, b]
        return (TC - E[None, :]).reshape(-1), TX.reshape(-1, lay.n_vars)
    const = TC.min(axis=0) - _curvature_bound(HC, s)
    coef = TX.min(axis=0) - _curvature_bound(HX, s)
    return const, coef


def _square_cells(N: int):
    """Cells of ``tau <= theta`` on an ``N x N`` grid: (i, j, corner offsets)."""
    I, J = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    off = J < I
    yield I[off], J[off], ((0, 0), (1, 0), (0, 1), (1, 1))
    dg = J == I
    yield I[dg], J[dg], ((0, 0), (1, 0), (1, 1))


def _cube_cells(N: int):
    """Cells of ``tau <= theta <= gamma``: (i, j, l, corner offsets)."""
    I, J, L = np.meshgrid(np.arange(N), np.arange(N), np.arange(N), indexing="ij")
    valid = (J <= I) & (L >= I)
    cube = [(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)]
    for tie_tau in (False, True):
        for tie_gamma in (False, True):
            mask = valid & ((J == I) == tie_tau) & ((L == I) == tie_gamma)
            corners = tuple(p for p in cube if (not tie_tau or p[1] <= p[0]) and (not tie_gamma or p[0] <= p[2]))
            if mask.any():
                yield I[mask], J[mask], L[mask], corners


# --------------------------------------------------------------------------
# the model
# --------------------------------------------------------------------------


@dataclass
class LpModel:
    """``maximize objective.x`` subject to ``A x (sense) rhs`` and ``lb <= x <= ub``.

    ``row_kind`` names each row's origin; bound rows also record their
    parameter cell (``row_cell``, fine-grid indices, ``-1`` when unused) and
    the cell vertex they came from (``row_vertex``, ``-1`` for one-row cells).
    """

    family: str
    n: int
    relaxation: str
    refine: int
    names: list[str]
    objective: np.ndarray
    A: np.ndarray
    rhs: np.ndarray
    sense: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    row_kind: np.ndarray
    row_cell: np.ndarray
    row_vertex: np.ndarray
    layout: Layout = field(repr=False, default=None)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_vars(self) -> int:
        return self.A.shape[1]

    def count(self, kind: str) -> int:
        return int(np.count_nonzero(self.row_kind == kind))

    def bound_rows(self) -> np.ndarray:
        return np.flatnonzero(np.isin(self.row_kind, BOUND_KINDS))

    def slack(self, x: np.ndarray) -> np.ndarray:
        """Per-row slack, positive when satisfied (equality rows report ``-|residual|``)."""
        ax = self.A @ x
        out = np.where(self.sense == GE, ax - self.rhs, self.rhs - ax)
        eq = self.sense == EQ
        out[eq] = -np.abs(ax[eq] - self.rhs[eq])
        return out

    def is_feasible(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(self.slack(x).min() >= -tol and np.all(x >= self.lb - tol) and np.all(x <= self.ub + tol))

    def check_references(self) -> None:
        if self.A.shape != (len(self.rhs), len(self.names)):
            raise StructuralViolation("row matrix does not match declared variables")
        if not np.all(np.isfinite(self.A)) or not np.all(np.isfinite(self.rhs)):
            raise StructuralViolation("non-finite coefficient in model")

    def rows_for_cell(self, kind: str, cell: tuple[int, ...]) -> np.ndarray:
        key = np.full(3, -1)
        key[: len(cell)] = cell
        return np.flatnonzero((self.row_kind == kind) & np.all(self.row_cell == key, axis=1))


_COEF_FLOOR = 1e-12


class _RowBuffer:
    def __init__(self, nv: int):
        self.nv = nv
        self.A: list[np.ndarray] = []
        self.rhs: list[np.ndarray] = []
        self.sense: list[np.ndarray] = []
        self.kind: list[np.ndarray] = []
        self.cell: list[np.ndarray] = []
        self.vertex: list[np.ndarray] = []

    def add(self, A, rhs, sense, kind, cell=None, vertex=None):
        A = np.atleast_2d(A)
        R = A.shape[0]
        self.A.append(A)
        self.rhs.append(np.broadcast_to(np.asarray(rhs, dtype=np.float64), (R,)).copy())
        self.sense.append(np.full(R, sense, dtype=object))
        self.kind.append(np.full(R, kind, dtype=object))
        cells = np.full((R, 3), -1, dtype=np.int64)
        if cell is not None:
            cell = np.atleast_2d(cell)
            cells[:, : cell.shape[1]] = cell
        self.cell.append(cells)
        self.vertex.append(np.full(R, -1, dtype=np.int64) if vertex is None else np.asarray(vertex, dtype=np.int64))

    def add_bound_rows(self, const, coef, kind, cells, vertex):
        """Rows ``r - coef.x <= const``.

        Coefficients below ``_COEF_FLOOR`` are rounding residue; they are
        dropped and the row is tightened by their worst case over ``[0, 1]``
        so it stays sound while the basis stays well conditioned.
        """
        coef = np.array(coef, dtype=np.float64)
        const = np.array(np.broadcast_to(const, (coef.shape[0],)), dtype=np.float64)
        tiny = np.abs(coef) < _COEF_FLOOR
        const += np.where(tiny, np.minimum(coef, 0.0), 0.0).sum(axis=1)
        coef[tiny] = 0.0
        A = -coef
        A[:, 0] += 1.0
        self.add(A, const, LE, kind, cells, vertex)

    def single(self, coeffs: dict[int, float], rhs: float, sense: str, kind: str):
        row = np.zeros(self.nv)
        for k, v in coeffs.items():
            row[k] += v
        self.add(row, rhs, sense, kind)

    def model(self, family, n, relaxation, refine, lay: Layout) -> LpModel:
        nv = self.nv
        obj = np.zeros(nv)
        obj[0] = 1.0
        return LpModel(
            family=family,
            n=n,
            relaxation=relaxation,
            refine=refine,
            names=lay.names(),
            objective=obj,
            A=np.vstack(self.A),
            rhs=np.concatenate(self.rhs),
            sense=np.concatenate(self.sense).astype(str),
            lb=np.zeros(nv),
            ub=np.full(nv, np.inf),
            row_kind=np.concatenate(self.kind).astype(str),
            row_cell=np.vstack(self.cell),
            row_vertex=np.concatenate(self.vertex),
            layout=lay,
        )


def _emit_cells(buf: _RowBuffer, form, lay, kind, cells_idx, corners, h, k, mode):
    """Rows for every cell in ``cells_idx`` (tuple of index arrays), chunked."""
    total = len(cells_idx[0])
    delta = h / 16.0
    offsets = np.asarray(corners, dtype=np.float64)
    for lo in range(0, total, _CHUNK):
        hi = min(total, lo + _CHUNK)
        idx = np.stack([a[lo:hi] for a in cells_idx], axis=1)
        verts = (idx[:, None, :] + offsets[None, :, :]) * h
        ci = idx[:, 0] // k
        const, coef = cell_rows(form, lay, verts, ci, kind, delta, mode)
        if mode == TANGENT:
            Q = len(corners)
            cells = np.tile(idx, (Q, 1))
            vertex = np.repeat(np.arange(Q), len(idx))
        else:
            cells, vertex = idx, None
        buf.add_bound_rows(const, coef, kind, cells, vertex)


def _check_args(n: int, relaxation: str, refine: int) -> None:
    if n < 2:
        raise PreconditionError("discretization size must be at least 2")
    if relaxation not in (TANGENT, RIEMANN):
        raise PreconditionError(f"unknown relaxation {relaxation!r}")
    if refine < 1:
        raise PreconditionError("refine factor must be at least 1")


def _bipartite_riemann_rows(buf: _RowBuffer, lay: Layout) -> None:
    """Endpoint relaxation over every cell ``(i, j)`` of ``[0,1]^2``."""
    n = lay.n
    k = np.arange(n)
    w = (1.0 - (k + 1) / n) / n  # lower bound of integral of (1-y) over cell k
    I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    I = I.ravel()
    J = J.ravel()
    R = len(I)
    below_i = k[None, :] < I[:, None]
    below_j = k[None, :] < J[:, None]
    gint = np.where(below_i, w, 0.0) + np.where(below_j, w, 0.0)  # both (1-y) g integrals
    min_kj = np.minimum(k[None, :], J[:, None]) / n / n
    min_ki = np.minimum(k[None, :], I[:, None]) / n / n
    m_theta = np.where(below_i, min_kj, 0.0)  # integral_0^theta min(y, tau) m
    m_tau_plain = np.where(below_j, k[None, :] / n / n, 0.0)  # integral_0^tau y m
    m_tau_sym = np.where(below_j, min_ki, 0.0)  # integral_0^tau min(y, theta) m

    hi_th = (I + 1) / n
    lo_th = I / n
    hi_ta = (J + 1) / n
    lo_ta = J / n
    # Asymmetric case.
    coef = np.zeros((R, lay.n_vars))
    coef[:, 1 : n + 1] = gint
    coef[:, lay.m_slice] = m_theta + m_tau_plain
    a = (1 - hi_th) * (1 - hi_th + lo_ta)
    coef[np.arange(R), lay.g(np.minimum(I + 1, n))] -= a
    const = a + 0.5 * ((1 - hi_ta) ** 2 - (1 - lo_th) ** 2)
    buf.add_bound_rows(const, coef, KIND_L1, np.stack([I, J], 1), None)
    # Symmetric case.
    coef = np.zeros((R, lay.n_vars))
    coef[:, 1 : n + 1] = gint
    coef[:, lay.m_slice] = m_theta + m_tau_sym
    const = 0.5 * (1 - hi_th) ** 2 + 0.5 * (1 - hi_ta) ** 2
    buf.add_bound_rows(const, coef, KIND_L2, np.stack([I, J], 1), None)


def build_bipartite_lp(n: int, relaxation: str = TANGENT, refine: int = 1) -> LpModel:
    """LP whose optimum lower-bounds RDO's ratio on bipartite graphs.

    Rows: the relaxed bounds, ``g_{k-1} <= g_k`` (``k = 1..n``),
    ``m_k <= g_k``, ``m_k <= 1 - g_k``, ``g_0 >= 0`` and ``g_n <= 1``.
    """
    _check_args(n, relaxation, refine)
    lay = Layout(n, with_h=False)
    buf = _RowBuffer(lay.n_vars)
    if relaxation == RIEMANN:
        _bipartite_riemann_rows(buf, lay)
    else:
        N = n * refine
        for kind in (KIND_L1, KIND_L2):
            for I, J, corners in _square_cells(N):
                _emit_cells(buf, bipartite_form, lay, kind, (I, J), corners, 1.0 / N, refine, TANGENT)
    for kk in range(1, n + 1):
        buf.single({lay.g(kk - 1): 1.0, lay.g(kk): -1.0}, 0.0, LE, "monotone")
    for kk in range(n):
        buf.single({lay.m(kk): 1.0, lay.g(kk): -1.0}, 0.0, LE, "m<=g")
        buf.single({lay.m(kk): 1.0, lay.g(kk): 1.0}, 1.0, LE, "m<=1-g")
    buf.single({lay.g(0): 1.0}, 0.0, GE, "g0>=0")
    buf.single({lay.g(n): 1.0}, 1.0, LE, "gn<=1")
    return buf.model(BIPARTITE, n, relaxation, refine, lay)


def build_general_lp(n: int, relaxation: str = TANGENT, refine: int = 1) -> LpModel:
    """LP whose optimum lower-bounds RDO's ratio on general graphs.

    Bound rows cover ``tau <= theta`` for ``E3`` and ``E6`` and
    ``tau <= theta <= gamma`` for ``E7``. Structural rows: ``g`` monotone,
    ``m_k <= g_k - h_k``, ``m_k <= 1 - g_k``, ``h_j <= m_k`` for all
    ``j, k``, ``g_0 >= 0`` and ``g_n <= 1``.
    """
    _check_args(n, relaxation, refine)
    lay = Layout(n, with_h=True)
    buf = _RowBuffer(lay.n_vars)
    N = n * refine
    h = 1.0 / N
    for kind in (KIND_E3, KIND_E6):
        for I, J, corners in _square_cells(N):
            _emit_cells(buf, general_form, lay, kind, (I, J), corners, h, refine, relaxation)
    for I, J, L, corners in _cube_cells(N):
        _emit_cells(buf, general_form, lay, KIND_E7, (I, J, L), corners, h, refine, relaxation)
    for kk in range(1, n + 1):
        buf.single({lay.g(kk - 1): 1.0, lay.g(kk): -1.0}, 0.0, LE, "monotone")
    for kk in range(n):
        buf.single({lay.m(kk): 1.0, lay.g(kk): -1.0, lay.h(kk): 1.0}, 0.0, LE, "m<=g-h")
        buf.single({lay.m(kk): 1.0, lay.g(kk): 1.0}, 1.0, LE, "m<=1-g")
    for kk in range(n):
        for jj in range(n):
            buf.single({lay.h(jj): 1.0, lay.m(kk): -1.0}, 0.0, LE, "h<=m")
    buf.single({lay.g(0): 1.0}, 0.0, GE, "g0>=0")
    buf.single({lay.g(n): 1.0}, 1.0, LE, "gn<=1")
    return buf.model(GENERAL, n, relaxation, refine, lay)


def expected_row_counts(family: str, n: int, relaxation: str = TANGENT, refine: int = 1) -> dict[str, int]:
    """Row counts by kind, derived by counting cells and vertices."""
    N = n * refine
    pairs_strict = N * (N - 1) // 2
    out: dict[str, int] = {"monotone": n, "g0>=0": 1, "gn<=1": 1}
    if family == BIPARTITE:
        per = n * n if relaxation == RIEMANN else 4 * pairs_strict + 3 * N
        out.update({KIND_L1: per, KIND_L2: per, "m<=g": n, "m<=1-g": n})
        return out
    sq = pairs_strict + N if relaxation == RIEMANN else 4 * pairs_strict + 3 * N
    c3 = math.comb(N, 3)
    c2 = math.comb(N, 2)
    cube = c3 + 2 * c2 + N if relaxation == RIEMANN else 8 * c3 + 12 * c2 + 4 * N
    out.update({KIND_E3: sq, KIND_E6: sq, KIND_E7: cube, "m<=g-h": n, "m<=1-g": n, "h<=m": n * n})
    return out


def half_point(model: LpModel) -> np.ndarray:
    """``r = 1/2``, ``g = m = 1/2``, ``h = 0``: the reference point for feasibility checks."""
    lay = model.layout
    return lay.pack(np.full(model.n + 1, 0.5), np.full(model.n, 0.5), np.zeros(model.n), r=0.5)


# --------------------------------------------------------------------------
# solving
# --------------------------------------------------------------------------


@dataclass
class LpSolution:
    status: str
    value: float
    x: np.ndarray
    max_violation: float
    iterations: int
    rounds: int
    binding: np.ndarray
    diagnostics: dict

    def variables(self, names: list[str]) -> dict[str, float]:
        return {nm: float(v) for nm, v in zip(names, self.x)}


def _standard_form(model: LpModel):
    """Rewrite as ``max c.z  s.t.  A' z <= b', z >= 0`` with ``x = lb + z`` (``lb`` finite)."""
    if np.any(~np.isfinite(model.lb)):
        raise PreconditionError("free variables are not supported")
    A = model.A
    shift = A @ model.lb
    rhs = model.rhs - shift
    blocks = []
    rhs_blocks = []
    le = model.sense == LE
    ge = model.sense == GE
    eq = model.sense == EQ
    blocks += [A[le], -A[ge], A[eq], -A[eq]]
    rhs_blocks += [rhs[le], -rhs[ge], rhs[eq], -rhs[eq]]
    origin = np.concatenate([np.flatnonzero(le), np.flatnonzero(ge), np.flatnonzero(eq), np.flatnonzero(eq)])
    finite_ub = np.flatnonzero(np.isfinite(model.ub))
    if len(finite_ub):
        U = np.zeros((len(finite_ub), model.n_vars))
        U[np.arange(len(finite_ub)), finite_ub] = 1.0
        blocks.append(U)
        rhs_blocks.append(model.ub[finite_ub] - model.lb[finite_ub])
        origin = np.concatenate([origin, np.full(len(finite_ub), -1)])
    return np.vstack(blocks), np.concatenate(rhs_blocks), origin


def solve_lp(model: LpModel, tol: float = 1e-9, generate_rows: bool | None = None) -> LpSolution:
    """Solve ``model`` with the in-repo simplex and re-verify every row at ``tol``.

    Large models are solved by row generation starting from the structural
    rows and a spread-out sample of bound rows.
    """
    model.check_references()
    A, b, origin = _standard_form(model)
    c = model.objective
    if generate_rows is None:
        generate_rows = A.shape[0] > 4 * A.shape[1] + 200
    init = None
    if generate_rows:
        bound = np.isin(origin, model.bound_rows())
        structural = np.flatnonzero(~bound)
        brows = np.flatnonzero(bound)
        stride = max(1, len(brows) // (2 * model.n_vars))
        init = np.concatenate([structural, brows[::stride]])
    res: SimplexResult = solve_dense(A, b, c, initial_rows=init, batch=2 * model.n_vars, feas_tol=tol)
    x = model.lb + res.x
    diagnostics = dict(res.diagnostics)
    status = res.status
    slack = model.slack(x)
    viol = float(max(0.0, -slack.min())) if len(slack) else 0.0
    if status == OPTIMAL and viol > tol:
        status = "stalled"
        diagnostics["note"] = f"residual check failed: max violation {viol:.3e}"
    binding = np.flatnonzero(np.abs(slack) <= max(tol, 1e-9) * 10)
    value = float(c @ x) if status == OPTIMAL else res.value
    return LpSolution(status, value, x, viol, res.iterations, res.rounds, binding, diagnostics)


def extract_step_g(model: LpModel, x: np.ndarray, tol: float = 1e-9) -> StepFunction:
    """The step function ``g`` of an assignment, checked for monotonicity and range."""
    step = StepFunction(np.clip(x[model.layout.g_slice], 0.0, 1.0))
    raw = StepFunction(x[model.layout.g_slice])
    raw.validate(tol)
    return step


def extract_step_h(model: LpModel, x: np.ndarray) -> StepFunction:
    if not model.layout.with_h:
        raise PreconditionError("model has no h variables")
    vals = np.append(x[model.layout.h_slice], x[model.layout.h_slice][-1])
    return StepFunction(np.maximum(vals, 0.0))


def solution_doc(model: LpModel, sol: LpSolution, max_binding: int = 200) -> dict:
    slack = model.slack(sol.x)
    rows = []
    for i in sol.binding[:max_binding]:
        rows.append({
            "row": int(i),
            "kind": str(model.row_kind[i]),
            "cell": [int(v) for v in model.row_cell[i] if v >= 0],
            "vertex": int(model.row_vertex[i]),
            "slack": float(slack[i]),
        })
    return {
        "family": model.family,
        "n": model.n,
        "relaxation": model.relaxation,
        "refine": model.refine,
        "status": sol.status,
        "value": sol.value,
        "max_violation": sol.max_violation,
        "iterations": sol.iterations,
        "rounds": sol.rounds,
        "rows": model.n_rows,
        "variables": sol.variables(model.names),
        "binding_rows": rows,
        "binding_count": int(len(sol.binding)),
    }


# --------------------------------------------------------------------------
# LP text interchange
# --------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def to_lp_text(model: LpModel) -> str:
    """CPLEX-style LP text: objective, constraints, bounds; rows in model order."""
    out = io.StringIO()
    out.write(f"\\ {model.family} n={model.n} relaxation={model.relaxation} refine={model.refine}\n")
    out.write("Maximize\n obj:")
    for j in np.flatnonzero(model.objective):
        out.write(f" + {_fmt(model.objective[j])} {model.names[j]}")
    out.write("\nSubject To\n")
    for i in range(model.n_rows):
        row = model.A[i]
        terms = " ".join(
            f"{'-' if row[j] < 0 else '+'} {_fmt(abs(row[j]))} {model.names[j]}" for j in np.flatnonzero(row)
        )
        out.write(f" c{i}: {terms or '0 r'} {model.sense[i]} {_fmt(model.rhs[i])}\n")
    out.write("Bounds\n")
    for j, nm in enumerate(model.names):
        ub = "+inf" if not np.isfinite(model.ub[j]) else _fmt(model.ub[j])
        out.write(f" {_fmt(model.lb[j])} <= {nm} <= {ub}\n")
    out.write("End\n")
    return out.getvalue()


_TERM = re.compile(r"([+-])\s*([0-9.eE+-]+|inf)\s+([A-Za-z_][A-Za-z0-9_]*)")


def from_lp_text(text: str) -> tuple[list[str], np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Parse text produced by :func:`to_lp_text` back to ``(names, c, A, sense, rhs, lb, ub)``."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("\\")]
    section = None
    obj_terms: list[tuple[str, float]] = []
    rows: list[tuple[list[tuple[str, float]], str, float]] = []
    bounds: dict[str, tuple[float, float]] = {}
    for ln in lines:
        low = ln.lower()
        if low in ("maximize", "subject to", "bounds", "end"):
            section = low
            continue
        if section == "maximize":
            body = ln.split(":", 1)[1]
            obj_terms += [(m.group(3), float(m.group(1) + m.group(2))) for m in _TERM.finditer(body)]
        elif section == "subject to":
            body = ln.split(":", 1)[1]
            sense = next(s for s in (LE, GE, EQ) if f" {s} " in body)
            lhs, rhs = body.rsplit(f" {sense} ", 1)
            terms = [(m.group(3), float(m.group(1) + m.group(2))) for m in _TERM.finditer(lhs)]
            rows.append((terms, sense, float(rhs)))
        elif section == "bounds":
            lo, nm, hi = [p.strip() for p in ln.split("<=")]
            bounds[nm] = (float(lo), float(hi.replace("+inf", "inf")))
    names = list(bounds)
    index = {nm: i for i, nm in enumerate(names)}
    c = np.zeros(len(names))
    for nm, v in obj_terms:
        c[index[nm]] += v
    A = np.zeros((len(rows), len(names)))
    sense = np.empty(len(rows), dtype=object)
    rhs = np.zeros(len(rows))
    for i, (terms, s, r) in enumerate(rows):
        for nm, v in terms:
            A[i, index[nm]] += v
        sense[i] = s
        rhs[i] = r
    lb = np.array([bounds[nm][0] for nm in names])
    ub = np.array([bounds[nm][1] for nm in names])
    return names, c, A, sense.astype(str), rhs, lb, ub


# --------------------------------------------------------------------------
# soundness and domination
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SoundnessReport:
    samples: int
    violations: int
    worst_gap: float  # max over samples of (relaxed row value - exact value); <= 0 when sound


def relaxed_value(model: LpModel, kind: str, params, x: np.ndarray) -> float:
    """Smallest right-hand side ``C + X.x`` among the rows of the cell containing ``params``."""
    N = model.n * model.refine
    p = np.asarray(params, dtype=np.float64)
    if model.family == BIPARTITE and model.relaxation == RIEMANN:
        cell = tuple(int(v) for v in cell_of(model.n, p))
    else:
        cell = _fine_cell(N, p, kind)
    rows = model.rows_for_cell(kind, cell)
    if len(rows) == 0:
        raise PreconditionError(f"no {kind} rows for cell {cell}")
    xr = x.copy()
    xr[0] = 0.0
    # Row reads r - coef.x <= const, so the bound on r is const + coef.x.
    vals = model.rhs[rows] - model.A[rows] @ xr
    return float(vals.min())


def _fine_cell(N: int, p: np.ndarray, kind: str) -> tuple[int, ...]:
    """Fine-grid cell of ``p``; points on a diagonal face go to the diagonal cell."""
    idx = cell_of(N, p)
    if idx[1] > idx[0]:
        idx[1] = idx[0]
    if len(idx) == 3 and idx[2] < idx[0]:
        idx[2] = idx[0]
    return tuple(int(v) for v in idx)


def random_step_functions(n: int, rng: np.random.Generator, with_h: bool):
    """Random non-decreasing ``g`` in ``[0, 1]``, ``h`` and ``m = min(g - h, 1 - g)``, all >= 0."""
    g = np.sort(rng.random(n + 1))
    if with_h:
        h = 0.5 * rng.random(n) * np.minimum(g[:n], 1 - g[:n])
        m = np.minimum(g[:n] - h, 1 - g[:n])
    else:
        h = None
        m = np.minimum(g[:n], 1 - g[:n])
    return g, np.maximum(m, 0.0), h


def random_params(rng: np.random.Generator, dims: int) -> np.ndarray:
    """``(theta, tau[, gamma])`` with ``tau <= theta <= gamma``, uniform on that region."""
    u = rng.random(dims)
    if dims == 2:
        th, ta = max(u), min(u)
        return np.array([th, ta])
    s = np.sort(u)
    return np.array([s[1], s[0], s[2]])


def check_soundness(model: LpModel, samples: int, seed: int, tol: float = 1e-10) -> SoundnessReport:
    """Sample step functions and parameters; compare relaxed rows with the exact bound."""
    rng = np.random.default_rng(seed)
    kinds = (KIND_L1, KIND_L2) if model.family == BIPARTITE else (KIND_E3, KIND_E6, KIND_E7)
    lay = model.layout
    violations = 0
    worst = -np.inf
    for s in range(samples):
        kind = kinds[s % len(kinds)]
        g, m, h = random_step_functions(model.n, rng, lay.with_h)
        x = lay.pack(g, m, h)
        params = random_params(rng, 3 if kind == KIND_E7 else 2)
        exact = bound_value(model.family, kind, params, g, m, h)
        relaxed = relaxed_value(model, kind, params, x)
        gap = relaxed - exact
        worst = max(worst, gap)
        if gap > tol:
            violations += 1
    return SoundnessReport(samples, violations, float(worst))


@dataclass(frozen=True)
class DominationReport:
    points: int
    min_gap_e4_e7: float  # min of E4 - E7(gamma = 1)
    min_gap_e5_e6: float  # min of E5 - E6

    def ok(self, tol: float = 1e-9) -> bool:
        return self.min_gap_e4_e7 >= -tol and self.min_gap_e5_e6 >= -tol


def check_domination(g: np.ndarray, m: np.ndarray, h: np.ndarray, grid: int) -> DominationReport:
    """Compare the bounds left out of the general LP with the ones it uses, on a grid of ``tau <= theta``."""
    n = len(g) - 1
    lay = Layout(n, True)
    x = lay.pack(g, m, h)
    t = np.linspace(0.0, 1.0, grid + 1)
    TH, TA = np.meshgrid(t, t, indexing="ij")
    keep = TA <= TH
    pts = np.stack([TH[keep], TA[keep]], 1)
    ci = cell_of(n, pts[:, 0])
    pts3 = np.column_stack([pts, np.ones(len(pts))])

    def val(kind, p):
        C, X = general_form(lay, p, ci, kind)
        return C + X @ x

    gap47 = val("E4", pts) - val(KIND_E7, pts3)
    gap56 = val("E5", pts) - val(KIND_E6, pts)
    return DominationReport(len(pts), float(gap47.min()), float(gap56.min()))


def lower_envelope(model: LpModel, x: np.ndarray, grid: int = 200) -> float:
    """Minimum of the exact bounds for the solution's step functions on a parameter grid."""
    lay = model.layout
    g = x[lay.g_slice]
    m = x[lay.m_slice]
    h = x[lay.h_slice] if lay.with_h else None
    t = np.linspace(0.0, 1.0, grid + 1)
    TH, TA = np.meshgrid(t, t, indexing="ij")
    keep = TA <= TH
    pts = np.stack([TH[keep], TA[keep]], 1)
    ci = cell_of(model.n, pts[:, 0])
    best = np.inf
    if model.family == BIPARTITE:
        for kind in (KIND_L1, KIND_L2):
            C, X = bipartite_form(lay, pts, ci, kind)
            best = min(best, float((C + X @ x).min()))
        return best
    for kind in (KIND_E3, KIND_E6):
        C, X = general_form(lay, pts, ci, kind)
        best = min(best, float((C + X @ x).min()))
    for gam in t:
        sel = pts[:, 0] <= gam
        p3 = np.column_stack([pts[sel], np.full(sel.sum(), gam)])
        C, X = general_form(lay, p3, ci[sel], KIND_E7)
        best = min(best, float((C + X @ x).min()))
    return best


"""Closed-form lower bounds for Perturbed Greedy on edge-weighted graphs.

The sharing function is the fixed piecewise-linear

    g(y) = 0.365 y + 0.48926   on [0, 0.13]
           0.067 y + 0.528     on (0.13, 0.4)
           0.5548              on [0.4, 1]

with compensation ``h = (1 - g) / 10`` and guaranteed share
``m = min(g - h, 1 - g)``. Every bound below is a sum of products of
parameters with integrals of ``(c0 + c1 y) * f(y)`` for ``f`` in
``{g, h, g - h}``; since ``f`` is linear on each piece those integrals have
exact cubic antiderivatives, which is what the evaluators use.

Bound ids:

* ``symmetric`` -- u and v match each other when both act last (params
  ``theta >= lam``);
* ``u-earlier`` -- u is matched first and u, v do not match without z;
* ``compensation`` -- u, v match without z and v is compensated throughout
  the zone where both act after the transitions;
* ``gamma`` -- as above but compensation only once ``y_u > gamma``
  (params ``tau <= lam``, ``theta <= gamma <= 1``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import PreconditionError

SYMMETRIC = "symmetric"
U_EARLIER = "u-earlier"
COMPENSATION = "compensation"
GAMMA = "gamma"
BOUND_IDS = (SYMMETRIC, U_EARLIER, COMPENSATION, GAMMA)

_ORDER_TOL = 1e-12


@dataclass(frozen=True)
class PiecewiseLinear:
    """Continuous piecewise-linear function on ``[0, 1]``.

    Piece ``k`` covers ``[breaks[k], breaks[k+1]]`` and equals
    ``intercepts[k] + slopes[k] * y``.
    """

    breaks: tuple[float, ...]
    slopes: tuple[float, ...]
    intercepts: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.breaks) != len(self.slopes) + 1 or len(self.slopes) != len(self.intercepts):
            raise PreconditionError("piece count mismatch")
        if self.breaks[0] != 0.0 or self.breaks[-1] != 1.0 or any(np.diff(self.breaks) <= 0):
            raise PreconditionError("breakpoints must increase from 0 to 1")

    @property
    def pieces(self) -> int:
        return len(self.slopes)

    def __call__(self, y):
        y = np.asarray(y, dtype=np.float64)
        if np.any(y < -_ORDER_TOL) or np.any(y > 1 + _ORDER_TOL):
            raise PreconditionError("argument outside [0, 1]")
        # Each piece is evaluated from its left node value and clipped between its
        # two node values, so breakpoints are hit exactly, flat pieces stay flat
        # and monotone functions stay monotone in floating point.
        breaks = np.asarray(self.breaks)
        k = np.clip(np.searchsorted(breaks, y, side="right") - 1, 0, self.pieces - 1)
        slopes = np.asarray(self.slopes)
        nodes = self._nodes
        val = nodes[k] + slopes[k] * (y - breaks[k])
        return np.clip(val, np.minimum(nodes[k], nodes[k + 1]), np.maximum(nodes[k], nodes[k + 1]))

    @property
    def _nodes(self) -> np.ndarray:
        """Values at the breakpoints (left limit of each piece, right end of the last)."""
        b = np.asarray(self.breaks)
        s = np.asarray(self.slopes)
        c = np.asarray(self.intercepts)
        return np.append(c + s * b[:-1], c[-1] + s[-1] * b[-1])

    def slope_at(self, y):
        y = np.asarray(y, dtype=np.float64)
        k = np.clip(np.searchsorted(np.asarray(self.breaks), y, side="left") - 1, 0, self.pieces - 1)
        return np.asarray(self.slopes)[k]

    def affine(self, scale: float, shift: float) -> "PiecewiseLinear":
        """``shift + scale * f``."""
        return PiecewiseLinear(
            self.breaks,
            tuple(scale * s for s in self.slopes),
            tuple(shift + scale * c for c in self.intercepts),
        )

    def continuity_gaps(self) -> np.ndarray:
        b = np.asarray(self.breaks[1:-1])
        left = np.asarray(self.intercepts[:-1]) + np.asarray(self.slopes[:-1]) * b
        right = np.asarray(self.intercepts[1:]) + np.asarray(self.slopes[1:]) * b
        return np.abs(left - right)

    def integral(self, lo, hi, c0=1.0, c1=0.0):
        """Exact ``integral_lo^hi (c0 + c1 y) f(y) dy`` (zero when ``hi <= lo``); broadcasts."""
        lo, hi, c0, c1 = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (lo, hi, c0, c1)))
        out = np.zeros(lo.shape)
        for k in range(self.pieces):
            s, e = self.breaks[k], self.breaks[k + 1]
            a = np.clip(lo, s, e)
            b = np.clip(np.maximum(hi, lo), s, e)
            p, q = self.intercepts[k], self.slopes[k]

            def F(x):
                return c0 * p * x + (c0 * q + c1 * p) * x**2 / 2 + c1 * q * x**3 / 3

            out += F(b) - F(a)
        return out if out.ndim else float(out)


SHARING_G = PiecewiseLinear((0.0, 0.13, 0.4, 1.0), (0.365, 0.067, 0.0), (0.48926, 0.528, 0.5548))
SHARING_H = SHARING_G.affine(-0.1, 0.1)
SHARING_G_MINUS_H = SHARING_G.affine(1.1, -0.1)


def eval_g(y):
    return SHARING_G(y)


def eval_h(y):
    return SHARING_H(y)


def eval_m(y):
    gy = SHARING_G(y)
    return np.minimum(gy - SHARING_H(y), 1.0 - gy)


M0 = float(eval_m(0.0))


def _arr(*vals):
    return [np.asarray(v, dtype=np.float64) for v in vals]


def _check_unit(**params) -> None:
    for name, v in params.items():
        v = np.asarray(v)
        if np.any(v < -_ORDER_TOL) or np.any(v > 1 + _ORDER_TOL):
            raise PreconditionError(f"{name} must lie in [0, 1]")


def bound_symmetric(theta, lam):
    """u, v matched together at the end; requires ``theta >= lam``."""
    theta, lam = _arr(theta, lam)
    _check_unit(theta=theta, lam=lam)
    if np.any(theta < lam - _ORDER_TOL):
        raise PreconditionError("symmetric bound assumes theta >= lam")
    G, GH = SHARING_G, SHARING_G_MINUS_H
    return (
        (1 - lam) * GH.integral(0, theta)
        + (1 - theta) * GH.integral(0, lam)
        + G.integral(0, lam, lam, -1.0)
        + G.integral(0, lam, theta, -1.0)
        + (1 - theta) * (1 - lam)
    )


def bound_u_earlier(theta, lam):
    """u matched strictly first, and u, v apart once z is removed."""
    theta, lam = _arr(theta, lam)
    _check_unit(theta=theta, lam=lam)
    GH = SHARING_G_MINUS_H
    mu = np.minimum(theta, lam)
    return (
        GH.integral(0, theta)
        + (1 - theta) * GH.integral(0, lam)
        + (1 - theta) * (1 - lam) * (1 - eval_g(mu))
        + (1 - theta) * lam * M0
    )


def bound_compensation(theta, lam):
    """u, v together once z is removed; v compensated throughout."""
    theta, lam = _arr(theta, lam)
    _check_unit(theta=theta, lam=lam)
    G, GH = SHARING_G, SHARING_G_MINUS_H
    mu = np.minimum(theta, lam)
    return (
        (1 - theta) * (1 - lam) * (1 - eval_g(mu) + eval_h(mu))
        + (1 - theta) * G.integral(0, lam)
        + (1 - lam) * GH.integral(0, theta)
        + G.integral(0, mu, theta + lam, -2.0)
    )


def bound_gamma(theta, lam, tau, gamma):
    """Compensation only once ``y_u > gamma``; requires ``tau <= lam`` and ``theta <= gamma``."""
    theta, lam, tau, gamma = _arr(theta, lam, tau, gamma)
    _check_unit(theta=theta, lam=lam, tau=tau, gamma=gamma)
    if np.any(tau > lam + _ORDER_TOL) or np.any(gamma < theta - _ORDER_TOL):
        raise PreconditionError("gamma bound assumes tau <= lam and theta <= gamma")
    G, H = SHARING_G, SHARING_H
    mu = np.minimum(theta, lam)
    return (
        (1 - theta) * (1 - lam) * (1 - eval_g(mu))
        + (1 - gamma) * (1 - lam) * eval_h(mu)
        + G.integral(0, theta) - (1 - tau) * H.integral(0, theta)
        + G.integral(0, tau) - (gamma - theta) * H.integral(0, tau)
        + (1 - theta) * (lam - tau)
        + (gamma - theta) * tau * M0
    )


@dataclass(frozen=True)
class BoundParams:
    theta: float = 0.0
    lam: float = 0.0
    tau: float = 0.0
    gamma: float = 1.0


def eval_bound(bound: str, params: BoundParams) -> float:
    p = params
    if bound == SYMMETRIC:
        return float(bound_symmetric(p.theta, p.lam))
    if bound == U_EARLIER:
        return float(bound_u_earlier(p.theta, p.lam))
    if bound == COMPENSATION:
        return float(bound_compensation(p.theta, p.lam))
    if bound == GAMMA:
        return float(bound_gamma(p.theta, p.lam, p.tau, p.gamma))
    raise PreconditionError(f"unknown bound {bound!r}")


# --------------------------------------------------------------------------
# minimization
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundMinimum:
    bound: str
    value: float
    argmin: dict
    grid_value: float
    grid_points: int


def _grid_2d(step: float, ordered: bool):
    k = int(round(1.0 / step))
    t = np.linspace(0.0, 1.0, k + 1)
    TH, LA = np.meshgrid(t, t, indexing="ij")
    if ordered:
        keep = LA <= TH
        return TH[keep], LA[keep]
    return TH.ravel(), LA.ravel()


def _refine_2d(f, x0, y0, step, ordered, sweeps=6):
    """Alternate bounded scalar minimizations (golden section / parabolic) around a grid point."""
    x, y = x0, y0
    best = float(f(x, y))
    for _ in range(sweeps):
        lo, hi = max(0.0, x - step), min(1.0, x + step)
        if ordered:
            lo = max(lo, y)
        if hi > lo:
            r = minimize_scalar(lambda t: float(f(t, y)), bounds=(lo, hi), method="bounded",
                                options={"xatol": 1e-12})
            if r.fun < best:
                best, x = float(r.fun), float(r.x)
        lo, hi = max(0.0, y - step), min(1.0, y + step)
        if ordered:
            hi = min(hi, x)
        if hi > lo:
            r = minimize_scalar(lambda t: float(f(x, t)), bounds=(lo, hi), method="bounded",
                                options={"xatol": 1e-12})
            if r.fun < best:
                best, y = float(r.fun), float(r.x)
    return best, x, y


def minimize_bound(bound: str, grid_step: float = 1e-3) -> BoundMinimum:
    """Exhaustive grid minimum followed by local refinement.

    The gamma bound is minimized over the faces ``lam = tau`` and
    ``gamma in {theta, 1}`` (it is monotone in ``lam`` and linear in
    ``gamma``; :func:`check_gamma_reduction` verifies both facts).
    """
    if grid_step > 1e-3 + 1e-15 and bound != GAMMA:
        raise PreconditionError("grid step must be at most 1e-3")
    if bound == GAMMA:
        faces = []
        for name, gam in (("theta", None), ("one", 1.0)):
            def f(th, ta, gam=gam):
                return bound_gamma(th, ta, ta, th if gam is None else gam)
            faces.append((name, f))
        best = None
        for name, f in faces:
            th, ta = _grid_2d(grid_step, False)
            ok = ta <= 1.0
            vals = f(th[ok], ta[ok])
            i = int(np.argmin(vals))
            val, x, y = _refine_2d(f, float(th[ok][i]), float(ta[ok][i]), grid_step, False)
            cand = BoundMinimum(GAMMA, val, {"theta": x, "lam": y, "tau": y, "gamma": x if name == "theta" else 1.0},
                                float(vals[i]), int(ok.sum()))
            if best is None or cand.value < best.value:
                best = cand
        return best
    fn = {SYMMETRIC: bound_symmetric, U_EARLIER: bound_u_earlier, COMPENSATION: bound_compensation}[bound]
    ordered = bound == SYMMETRIC
    th, la = _grid_2d(grid_step, ordered)
    vals = np.concatenate([fn(th[s:s + 1 << 18], la[s:s + 1 << 18]) for s in range(0, len(th), 1 << 18)])
    i = int(np.argmin(vals))
    val, x, y = _refine_2d(fn, float(th[i]), float(la[i]), grid_step, ordered)
    return BoundMinimum(bound, val, {"theta": x, "lam": y}, float(vals[i]), len(th))


# --------------------------------------------------------------------------
# structural checks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GammaReductionReport:
    points: int
    slack_linear_in_gamma: float  # min of B(gamma) - min(B(theta), B(1))
    slack_lam_to_tau: float  # min of B(lam) - B(lam = tau)
    slack_vs_u_earlier: float  # min of B(gamma = 1, lam = tau) - u-earlier(theta, tau)
    slack_vs_compensation: float  # min of B(gamma = theta, lam = tau) - compensation(theta, tau)

    def ok(self, tol: float = 1e-12) -> bool:
        return min(self.slack_linear_in_gamma, self.slack_lam_to_tau,
                   self.slack_vs_u_earlier, self.slack_vs_compensation) >= -tol


def check_gamma_reduction(grid_step: float = 0.05) -> GammaReductionReport:
    """Verify on a grid that the gamma bound reduces to the u-earlier and compensation bounds."""
    k = int(round(1.0 / grid_step))
    t = np.linspace(0.0, 1.0, k + 1)
    TH, LA, TA, GA = np.meshgrid(t, t, t, t, indexing="ij")
    keep = (TA <= LA) & (GA >= TH)
    th, la, ta, ga = TH[keep], LA[keep], TA[keep], GA[keep]
    b = bound_gamma(th, la, ta, ga)
    b_theta = bound_gamma(th, la, ta, th)
    b_one = bound_gamma(th, la, ta, np.ones_like(th))
    b_tau = bound_gamma(th, ta, ta, ga)
    end_one = bound_gamma(th, ta, ta, np.ones_like(th))
    end_theta = bound_gamma(th, ta, ta, th)
    return GammaReductionReport(
        points=int(len(th)),
        slack_linear_in_gamma=float((b - np.minimum(b_theta, b_one)).min()),
        slack_lam_to_tau=float((b - b_tau).min()),
        slack_vs_u_earlier=float((end_one - bound_u_earlier(th, ta)).min()),
        slack_vs_compensation=float((end_theta - bound_compensation(th, ta)).min()),
    )


def solve_lambda_star() -> float:
    """Root of ``int_0^lam g + (1 - lam) g(lam) = int_0^1 (g - h)``: the minimizer at ``theta = 1``."""
    target = SHARING_G_MINUS_H.integral(0.0, 1.0)
    return float(brentq(lambda x: SHARING_G.integral(0.0, x) + (1 - x) * eval_g(x) - target, 0.0, 0.5, xtol=1e-14))


def solve_lambda_zero() -> float:
    """Root of ``g(lam) + g(1) = 12/11``."""
    return float(brentq(lambda x: eval_g(x) + eval_g(1.0) - 12.0 / 11.0, 0.0, 1.0, xtol=1e-14))


def solve_lambda_half_sum() -> float:
    """Root of ``g(lam) = 6/11``: where ``theta* = lam``."""
    return float(brentq(lambda x: eval_g(x) - 6.0 / 11.0, 0.0, 1.0, xtol=1e-14))


def theta_star(lam):
    """The ``theta`` solving ``g(lam) + g(theta) = 12/11`` within the middle piece."""
    lam = np.asarray(lam, dtype=np.float64)
    return (12.0 / 11.0 - eval_g(lam) - 0.528) / 0.067


@dataclass(frozen=True)
class BranchMinimum:
    lo: float
    hi: float
    value: float
    argmin: float


def compensation_branch_minimum(lo: float, hi: float) -> BranchMinimum:
    """Minimum over ``lam in [lo, hi]`` of the compensation bound at ``theta = theta*(lam)``."""

    def f(x):
        return float(bound_compensation(theta_star(x), x))

    grid = np.linspace(lo, hi, 2001)
    vals = bound_compensation(theta_star(grid), grid)
    i = int(np.argmin(vals))
    a, b = grid[max(0, i - 1)], grid[min(len(grid) - 1, i + 1)]
    r = minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": 1e-12})
    if r.fun < vals[i]:
        return BranchMinimum(lo, hi, float(r.fun), float(r.x))
    return BranchMinimum(lo, hi, float(vals[i]), float(grid[i]))


@dataclass
class DerivativeFacts:
    theta_derivative_max_low_lam: float  # symmetric bound, d/dtheta over lam <= 0.9: must be < 0
    u_earlier_derivative_max_at_zero: float  # d/dtheta of u-earlier at lam = 0: must be < 0
    u_earlier_derivative_argmax_lam: float  # lam maximizing that derivative over the grid
    identity_gap: float  # max |(1-l)(g-h(l) + g-h(t) - 1) - 11/10 (1-l)(g(l)+g(t) - 12/11)|
    slope_gap: float  # min over pieces of (g - h) - (g' - h'): must be > 0
    lambda_zero: float
    lambda_half_sum: float
    lambda_star: float
    high_lam_minimum: float  # symmetric bound restricted to lam >= 0.9

    def ok(self) -> bool:
        return (self.theta_derivative_max_low_lam < 0 and self.u_earlier_derivative_max_at_zero < 0
                and self.identity_gap < 1e-12 and self.slope_gap > 0)


def check_derivative_facts(grid: int = 401) -> DerivativeFacts:
    """Re-verify on a grid the sign and root claims that drive the analytic minimization."""
    t = np.linspace(0.0, 1.0, grid)
    TH, LA = np.meshgrid(t, t, indexing="ij")
    low = LA <= 0.9
    d_sym = (1 - LA) * (eval_g(TH) - eval_h(TH) - 1) + SHARING_H.integral(0.0, LA)
    # u-earlier with lam <= theta: derivative over theta.
    d_ue = (eval_g(TH) - eval_h(TH) - (1 - LA) * (1 - eval_g(LA)) - LA * M0
            - SHARING_G_MINUS_H.integral(0.0, LA))
    per_lam = d_ue.max(axis=0)
    gl, gt = eval_g(LA), eval_g(TH)
    lhs = (1 - LA) * ((gl - eval_h(LA)) + (gt - eval_h(TH)) - 1)
    rhs = 1.1 * (1 - LA) * (gl + gt - 12.0 / 11.0)
    ys = np.linspace(0.0, 1.0, 4001)
    gmh = eval_g(ys) - eval_h(ys)
    dgmh = 1.1 * SHARING_G.slope_at(ys)
    hi_l = np.linspace(0.9, 1.0, 201)
    HT, HL = np.meshgrid(hi_l, hi_l, indexing="ij")
    keep = HT >= HL
    return DerivativeFacts(
        theta_derivative_max_low_lam=float(d_sym[low].max()),
        u_earlier_derivative_max_at_zero=float(d_ue[:, 0].max()),
        u_earlier_derivative_argmax_lam=float(t[int(np.argmax(per_lam))]),
        identity_gap=float(np.abs(lhs - rhs).max()),
        slope_gap=float((gmh - dgmh).min()),
        lambda_zero=solve_lambda_zero(),
        lambda_half_sum=solve_lambda_half_sum(),
        lambda_star=solve_lambda_star(),
        high_lam_minimum=float(bound_symmetric(HT[keep], HL[keep]).min()),
    )


# --------------------------------------------------------------------------
# checkpoint table
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Checkpoint:
    name: str
    expected: float
    computed: float
    tol: float
    kind: str = "eq"  # "eq": |computed - expected| <= tol; "ge": computed >= expected - tol

    @property
    def passed(self) -> bool:
        if self.kind == "ge":
            return self.computed >= self.expected - self.tol
        return abs(self.computed - self.expected) <= self.tol


@dataclass
class AnalyticReport:
    minima: dict = field(default_factory=dict)
    checkpoints: list = field(default_factory=list)
    gamma: GammaReductionReport | None = None
    derivatives: DerivativeFacts | None = None

    @property
    def overall_min(self) -> float:
        return min(m.value for k, m in self.minima.items() if k != GAMMA)

    @property
    def passed(self) -> bool:
        ok = all(c.passed for c in self.checkpoints)
        if self.gamma is not None:
            ok &= self.gamma.ok()
        if self.derivatives is not None:
            ok &= self.derivatives.ok()
        return ok

    def to_doc(self) -> dict:
        return {
            "minima": {k: {"value": m.value, "argmin": m.argmin, "grid_value": m.grid_value,
                           "grid_points": m.grid_points} for k, m in self.minima.items()},
            "overall_min": self.overall_min,
            "checkpoints": [{"name": c.name, "expected": c.expected, "computed": c.computed,
                             "tol": c.tol, "kind": c.kind, "passed": c.passed} for c in self.checkpoints],
            "gamma_reduction": None if self.gamma is None else vars(self.gamma),
            "derivative_facts": None if self.derivatives is None else vars(self.derivatives),
            "passed": self.passed,
        }


def analytic_report(grid_step: float = 1e-3, gamma_step: float = 0.05) -> AnalyticReport:
    rep = AnalyticReport()
    for b in (SYMMETRIC, U_EARLIER, COMPENSATION):
        rep.minima[b] = minimize_bound(b, grid_step)
    rep.minima[GAMMA] = minimize_bound(GAMMA, max(grid_step, 2e-3))
    lam0 = solve_lambda_zero()
    lam_half = solve_lambda_half_sum()
    br1 = compensation_branch_minimum(lam0, 0.13)
    br2 = compensation_branch_minimum(0.13, lam_half)
    cps = [
        Checkpoint("m(0)", 0.438186, float(eval_m(0.0)), 1e-4),
        Checkpoint("g(1)-h(1)", 0.51028, float(eval_g(1.0) - eval_h(1.0)), 1e-4),
        Checkpoint("1-g(0)", 0.51074, float(1 - eval_g(0.0)), 1e-4),
        Checkpoint("lambda* (theta=1 minimizer)", 0.0344402, solve_lambda_star(), 1e-4),
        Checkpoint("lambda0: g(l)+g(1)=12/11", 0.12835, lam0, 1e-3),
        Checkpoint("lambda*: g(l)=6/11", 0.260516, lam_half, 1e-4),
        Checkpoint("compensation branch min on (lambda0, 0.13]", 0.5026, br1.value, 1e-4),
        Checkpoint("compensation branch argmin on (lambda0, 0.13]", 0.13, br1.argmin, 1e-4),
        Checkpoint("compensation branch min on (0.13, lambda*]", 0.50235, br2.value, 1e-3),
        Checkpoint("compensation branch argmin on (0.13, lambda*]", 0.204, br2.argmin, 1e-3),
        Checkpoint("integral of g-h over [0,1]", 0.5016, float(SHARING_G_MINUS_H.integral(0.0, 1.0)), 0.0, "ge"),
        Checkpoint("min symmetric", 0.5014, rep.minima[SYMMETRIC].value, 0.0, "ge"),
        Checkpoint("min u-earlier", 0.5016, rep.minima[U_EARLIER].value, 0.0, "ge"),
        Checkpoint("min compensation", 0.5014, rep.minima[COMPENSATION].value, 0.0, "ge"),
        Checkpoint("g continuity", 0.0, float(SHARING_G.continuity_gaps().max()), 1e-6),
    ]
    rep.checkpoints = cps
    rep.gamma = check_gamma_reduction(gamma_step)
    rep.derivatives = check_derivative_facts()
    return rep

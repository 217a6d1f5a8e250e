"""Excess-risk and radius bounds computed from a doubly wild refitting run.

Quantities
----------
W_n(r), T_n(r)
    Suprema over ``{f in F : ||f - f_hat||_n <= r}`` of
    ``(1/n) sum_i <+-eps_i g_i, f(x_i) - f_hat(x_i)>``.
Opt_diamond, Opt_sharp
    Wild optimisms, computable from the refits; they dominate ``W_n`` and
    ``T_n`` at the refit radii when the trainer is an exact ERM.
B_diamond, B_sharp
    Pilot errors: the same suprema driven by the gradient discrepancy
    between ``f_star`` and ``f_hat``. Only available with an oracle.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .engine import WildRefitOutput, doubly_wild_refit, rademacher, refit_one_side
from .losses import LossSpec
from .models import (FixedDesignDataset, LinearFeatureClass, LinearPredictor, Predictor,
                     UnconstrainedClass, empirical_norm, predictions)
from .wildresp import DIAMOND, SHARP

__all__ = [
    "SupSolver",
    "SupResult",
    "sup_process",
    "sup_solve",
    "W_n",
    "T_n",
    "wild_optimism_diamond",
    "wild_optimism_sharp",
    "pilot_errors",
    "BoundReport",
    "excess_risk_bound",
    "theorem1_total",
    "FixedPointResult",
    "fixed_point_radius",
    "radius_bound_theorem2",
    "radius_bound_corollary",
    "RadiusReport",
    "TuneResult",
    "TuneError",
    "tune_rho_for_radius",
    "AuditResult",
    "run_audit",
]


# --------------------------------------------------------------------------
# suprema of linear processes over empirical-norm balls
# --------------------------------------------------------------------------

@dataclass
class SupResult:
    """``value`` is attained by a feasible point; ``upper`` is a valid upper bound."""

    value: float
    upper: float
    iterations: int = 0
    method: str = "closed-form"

    @property
    def slack(self) -> float:
        return self.upper - self.value

    def __float__(self):
        return float(self.value)


class _LinearGeometry:
    """Whitening of a feature matrix: ``Phi = sqrt(n) Q diag(sqrt(s)) U^T``."""

    def __init__(self, Phi: np.ndarray, rel_cut: float = 1e-12):
        n = Phi.shape[0]
        self.Phi = Phi
        G = Phi.T @ Phi / n
        s, U = np.linalg.eigh(G)
        keep = s > rel_cut * max(s[-1], 1e-300)
        self.s_full, self.U_full = s, U
        self.s = s[keep]
        self.U = U[:, keep]
        self.Q = Phi @ self.U / np.sqrt(n * self.s)
        self.n = n


@dataclass
class SupSolver:
    """Supremum engine for ``sup_{f in F, ||f - c||_n <= r} (1/n) sum <v_i, f(x_i) - c(x_i)>``.

    The unconstrained class has the exact value ``r ||v||_n``. For a
    linear-feature class the problem is a linear objective over an ellipsoid
    in coefficient space; it is solved by projected gradient ascent in
    whitened coordinates (``restarts`` random starts), and the support
    function of the ellipsoid supplies the upper bound. With a coefficient
    bound the feasible set is an ellipsoid/ball intersection handled by
    alternating projections.
    """

    class_tag: str = "unconstrained"
    iterations: int = 200
    restarts: int = 10
    tol: float = 1e-14
    seed: int = 0
    _geo: dict = field(default_factory=dict, repr=False, compare=False)

    def geometry(self, fclass: LinearFeatureClass, ds: FixedDesignDataset) -> _LinearGeometry:
        # hold the keys themselves so identity comparisons cannot hit a recycled id
        c = self._geo
        if c.get("x") is ds.x and c.get("fclass") is fclass:
            return c["geo"]
        g = _LinearGeometry(fclass.features(ds.x))
        self._geo = {"x": ds.x, "fclass": fclass, "geo": g}
        return g

    def solve(self, v, r: float, ds: FixedDesignDataset, fclass=None, center=None) -> SupResult:
        if r < 0 or not np.isfinite(r):
            raise ValueError("radius must be finite and nonnegative")
        V = np.asarray(v, dtype=float).reshape(ds.n, -1)
        if r == 0:
            return SupResult(0.0, 0.0, 0, "zero-radius")
        if fclass is None or isinstance(fclass, UnconstrainedClass):
            val = r * float(np.sqrt(np.mean(np.sum(V * V, axis=1))))
            return SupResult(val, val, 0, "closed-form")
        return self._linear(V, r, ds, fclass, center)

    def _linear(self, V, r, ds, fclass, center):
        geo = self.geometry(fclass, ds)
        n = ds.n
        if center is None:
            raise ValueError("linear-class supremum needs a center")
        Cv = predictions(center, ds)
        # split the center into its in-span part and the orthogonal remainder
        if isinstance(center, LinearPredictor) and center.feature_map is fclass._phi:
            tc = center.coef
            off = 0.0
            offset_val = 0.0
        else:
            proj = geo.Q @ (geo.Q.T @ Cv)
            tc = np.linalg.lstsq(geo.Phi, proj, rcond=None)[0].T
            res = Cv - proj
            off = float(np.mean(np.sum(res * res, axis=1)))
            offset_val = float(np.mean(np.sum(V * (proj - Cv), axis=1)))
        if r * r < off:
            raise ValueError("ball around the center does not meet the class")
        r_eff = math.sqrt(r * r - off)
        # objective <C, theta - tc> with C = V^T Phi / n; whitened coords x = (theta - tc) U sqrt(s)
        C = V.T @ geo.Phi / n
        cw = (C @ geo.U) / np.sqrt(geo.s)
        upper = r_eff * float(np.linalg.norm(cw)) + offset_val
        if fclass.coefficient_bound is None:
            c = np.ascontiguousarray(cw.ravel())
            rng = np.random.default_rng(self.seed)
            best, its = -np.inf, 0
            for k in range(max(1, self.restarts)):
                x0 = np.zeros_like(c) if k == 0 else rng.standard_normal(c.shape)
                nx = np.linalg.norm(x0)
                if nx > r_eff:
                    x0 *= r_eff / nx
                x, it = kernels.ball_ascent(c, x0, r_eff, 1.0, self.iterations, self.tol)
                its += it
                best = max(best, float(c @ x))
            return SupResult(min(best, upper - offset_val) + offset_val, upper, its, "whitened-ascent")
        R = float(fclass.coefficient_bound)
        if np.linalg.norm(tc) > R * (1 + 1e-12):
            raise ValueError("center lies outside the coefficient bound")
        step = 1.0 / max(float(geo.s_full[-1]), 1e-300)
        x, its = kernels.bounded_linear_ascent(C, tc, geo.U_full, np.maximum(geo.s_full, 0.0),
                                               r_eff, R, step, self.iterations, 200)
        val = float(np.sum(C * (x - tc))) + offset_val
        ub_ball = float(np.sum(C * (-tc))) + R * float(np.linalg.norm(C)) + offset_val
        return SupResult(val, min(upper, ub_ball), its, "bounded-ascent")


def sup_solve(sup: SupSolver, center, v, r: float, ds: FixedDesignDataset, fclass=None) -> SupResult:
    return sup.solve(v, r, ds, fclass, center)


def sup_process(sup: SupSolver, center, v, r: float, ds: FixedDesignDataset, fclass=None) -> float:
    """Supremum value (a feasible, attained value) of the linear process over the ball."""
    return sup.solve(v, r, ds, fclass, center).value


def _default_sup(fclass):
    return SupSolver(getattr(fclass, "class_tag", "unconstrained"))


def W_n(out: WildRefitOutput, r: float, fclass=None, sup: Optional[SupSolver] = None) -> float:
    sup = sup or _default_sup(fclass)
    return sup_process(sup, out.f_hat, out.eps[:, None] * out.g_tilde, r, out.D0, fclass)


def T_n(out: WildRefitOutput, r: float, fclass=None, sup: Optional[SupSolver] = None) -> float:
    sup = sup or _default_sup(fclass)
    return sup_process(sup, out.f_hat, -out.eps[:, None] * out.g_tilde, r, out.D0, fclass)


# --------------------------------------------------------------------------
# wild optimisms and pilot errors
# --------------------------------------------------------------------------

def _optimism(spec, f_hat_vals, f_side_vals, y_side, rho, r_side, n, variant):
    if variant not in ("proof", "literal"):
        raise ValueError("optimism variant must be 'proof' or 'literal'")
    quad = spec.beta / (4.0 * rho) * r_side ** 2
    if variant == "literal":
        quad /= n
    gap = float(np.mean(spec.value(f_hat_vals, y_side) - spec.value(f_side_vals, y_side)))
    return quad + gap / (2.0 * rho)


def wild_optimism_diamond(out: WildRefitOutput, spec: LossSpec, variant: str = "proof") -> float:
    """``beta/(4 rho1) ||f_d - f_hat||_n^2 + (1/(2 rho1)) mean[l(f_hat, y_d) - l(f_d, y_d)]``.

    ``variant="literal"`` divides the first term by an extra ``n``.
    """
    return _optimism(spec, out.fitted("hat"), out.fitted(DIAMOND), out.D_diamond.y,
                     out.rho1, out.r_diamond, out.n, variant)


def wild_optimism_sharp(out: WildRefitOutput, spec: LossSpec, variant: str = "proof") -> float:
    """Sharp-side counterpart of :func:`wild_optimism_diamond`."""
    return _optimism(spec, out.fitted("hat"), out.fitted(SHARP), out.D_sharp.y,
                     out.rho2, out.r_sharp, out.n, variant)


def pilot_errors(out: WildRefitOutput, f_star, spec: LossSpec, r: float, fclass=None,
                 sup: Optional[SupSolver] = None):
    """``(B_diamond, B_sharp)`` over the ball of radius ``2 r`` around ``f_hat``."""
    sup = sup or _default_sup(fclass)
    w = spec.grad1(predictions(f_star, out.D0), out.D0.y)
    v = out.eps[:, None] * (w - out.g_tilde)
    bd = sup_process(sup, out.f_hat, v, 2.0 * r, out.D0, fclass)
    bs = sup_process(sup, out.f_hat, -v, 2.0 * r, out.D0, fclass)
    return bd, bs


# --------------------------------------------------------------------------
# excess-risk bound
# --------------------------------------------------------------------------

def theorem1_total(empirical_excess, opt_diamond, opt_sharp, pilot_diamond, pilot_sharp,
                   r, bias_norm, beta, alpha, sigma, t, n, d) -> float:
    """Right-hand side of the excess-risk bound from its pieces."""
    ratio = beta / alpha
    dev_coef = 2.0 * math.sqrt(2.0) * beta * sigma * t / (alpha * math.sqrt(n))
    dev = ((5.0 * math.sqrt(d) + 3.0 * math.sqrt(math.log(n)) + 4.0) * r + bias_norm) * dev_coef
    return ratio * empirical_excess + ratio * (opt_diamond + opt_sharp + pilot_diamond + pilot_sharp) + dev


def _deviation_thm1(r, bias_norm, beta, alpha, sigma, t, n, d):
    return theorem1_total(0.0, 0.0, 0.0, 0.0, 0.0, r, bias_norm, beta, alpha, sigma, t, n, d)


@dataclass
class BoundReport:
    opt_diamond: float
    opt_sharp: float
    W: Optional[float]
    T: Optional[float]
    pilot_diamond: Optional[float]
    pilot_sharp: Optional[float]
    empirical_excess: Optional[float]
    deviation: float
    total_bound: float
    beta: float
    alpha: float
    sigma: float
    t: float
    n: int
    d: int
    r: float
    bias_norm: Optional[float]
    confidence: float
    observable_mode: bool = False
    training_error: Optional[float] = None
    optimism_variant: str = "proof"
    caveats: list = field(default_factory=list)

    def recompute(self) -> float:
        """Re-assemble the bound from the stored pieces (absent pieces count as 0)."""
        z = lambda v: 0.0 if v is None else v  # noqa: E731
        lead = self.training_error if self.observable_mode else self.empirical_excess
        return theorem1_total(z(lead), self.opt_diamond, self.opt_sharp, z(self.pilot_diamond),
                              z(self.pilot_sharp), self.r, z(self.bias_norm), self.beta,
                              self.alpha, self.sigma, self.t, self.n, self.d)

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.observable_mode:
            for k in ("pilot_diamond", "pilot_sharp", "bias_norm", "empirical_excess"):
                out.pop(k)
        out["alpha_is_mu"] = True
        return out


def excess_risk_bound(*, opt_diamond, opt_sharp, r, beta, alpha, sigma, t, n, d,
                      empirical_excess=None, pilot_diamond=None, pilot_sharp=None,
                      bias_norm=None, training_error=None, W=None, T=None,
                      observable: bool = False, optimism_variant: str = "proof") -> BoundReport:
    """Assemble the excess-risk bound.

    In the default (oracle) mode every piece is required. ``observable=True``
    uses the training error as a stand-in for the empirical excess risk and
    leaves out pilot errors and the misspecification term; the report lists
    these omissions in ``caveats``.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if r < 0:
        raise ValueError("r must be nonnegative")
    caveats = []
    if observable:
        if training_error is None:
            raise ValueError("observable mode needs the training error")
        caveats = ["empirical_excess replaced by training error",
                   "pilot errors omitted (need f_star)",
                   "misspecification term omitted (need f_star and f_dagger)"]
        lead, pd, ps, bias = training_error, 0.0, 0.0, 0.0
        empirical_excess = pilot_diamond = pilot_sharp = bias_norm = None
    else:
        missing = [k for k, v in (("empirical_excess", empirical_excess), ("pilot_diamond", pilot_diamond),
                                  ("pilot_sharp", pilot_sharp), ("bias_norm", bias_norm)) if v is None]
        if missing:
            raise ValueError(f"oracle-mode bound is missing {missing}")
        lead, pd, ps, bias = empirical_excess, pilot_diamond, pilot_sharp, bias_norm
    total = theorem1_total(lead, opt_diamond, opt_sharp, pd, ps, r, bias, beta, alpha, sigma, t, n, d)
    return BoundReport(
        opt_diamond=float(opt_diamond), opt_sharp=float(opt_sharp),
        W=None if W is None else float(W), T=None if T is None else float(T),
        pilot_diamond=pilot_diamond, pilot_sharp=pilot_sharp,
        empirical_excess=empirical_excess,
        deviation=_deviation_thm1(r, bias, beta, alpha, sigma, t, n, d),
        total_bound=total, beta=float(beta), alpha=float(alpha), sigma=float(sigma), t=float(t),
        n=int(n), d=int(d), r=float(r), bias_norm=bias_norm,
        confidence=1.0 - 6.0 * math.exp(-t * t),
        observable_mode=observable, training_error=training_error,
        optimism_variant=optimism_variant, caveats=caveats,
    )


# --------------------------------------------------------------------------
# radii
# --------------------------------------------------------------------------

@dataclass
class FixedPointResult:
    r: float
    saturated: bool
    h: float
    evaluations: int

    def __float__(self):
        return float(self.r)


def fixed_point_radius(Wf: Callable, Tf: Callable, alpha: float, r_max: float,
                       tol: float = 1e-8, max_halvings: int = 200) -> FixedPointResult:
    """Largest ``r`` in ``(0, r_max]`` with ``r <= sqrt((2/alpha)(Wf(2r) + Tf(2r)))``.

    ``h(r) = sqrt(...) - r`` is concave with ``h(0) = 0`` when ``Wf`` and ``Tf``
    are, so the satisfying set is an interval starting at 0. A geometric scan
    down from ``r_max`` finds a point with ``h > 0`` and bisection locates the
    right end to absolute tolerance ``tol``. Returns 0 when no positive
    solution is found and ``r_max`` (flagged) when ``h(r_max) > 0``.
    """
    if alpha <= 0 or r_max <= 0 or tol <= 0:
        raise ValueError("alpha, r_max and tol must be positive")
    evals = 0

    def h(r):
        nonlocal evals
        evals += 1
        return math.sqrt(max(0.0, (2.0 / alpha) * (Wf(2.0 * r) + Tf(2.0 * r)))) - r

    h_max = h(r_max)
    if h_max > 0:
        return FixedPointResult(float(r_max), True, h_max, evals)
    hi, lo, h_lo = r_max, None, None
    r = r_max
    for _ in range(max_halvings):
        r *= 0.5
        hr = h(r)
        if hr > 0:
            lo, h_lo = r, hr
            break
        hi = r
    if lo is None:
        return FixedPointResult(0.0, False, 0.0, evals)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        hm = h(mid)
        if hm > 0:
            lo, h_lo = mid, hm
        else:
            hi = mid
    return FixedPointResult(lo, False, h_lo, evals)


def _check_nonneg(**kw):
    for k, v in kw.items():
        if v < 0 or not np.isfinite(v):
            raise ValueError(f"{k} must be finite and nonnegative, got {v}")


def _deviation_radius(alpha, sigma, t, n, d, scale):
    return ((10.0 * math.sqrt(d) + 6.0 * math.sqrt(math.log(n)) + 4.0) / alpha + 1.0) * scale * sigma * t / math.sqrt(n)


def radius_bound_theorem2(W2r, T2r, B_d, B_s, alpha, sigma, t, n, d) -> float:
    """``sqrt((2/a)(W+T)) + sqrt((2/a)(B_d+B_s)) + ((10 sqrt d + 6 sqrt(log n) + 4)/a + 1) 2 sqrt2 sigma t / sqrt n``."""
    _check_nonneg(W2r=W2r, T2r=T2r, B_d=B_d, B_s=B_s, sigma=sigma, t=t)
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return (math.sqrt(2.0 / alpha * (W2r + T2r)) + math.sqrt(2.0 / alpha * (B_d + B_s))
            + _deviation_radius(alpha, sigma, t, n, d, 2.0 * math.sqrt(2.0)))


def radius_bound_corollary(r_diamond, r_sharp, W2rd, T2rs, B_d, B_s, alpha, sigma, t, n, d) -> dict:
    """Solved and simplified forms of the radius bound built from the refit radii.

    Returns ``{"solved": ..., "simplified": ..., "slope_terms": ...}``.
    """
    if r_diamond <= 0 or r_sharp <= 0:
        raise ValueError("refit radii must be positive")
    _check_nonneg(W2rd=W2rd, T2rs=T2rs, B_d=B_d, B_s=B_s, sigma=sigma, t=t)
    slope = 4.0 * W2rd / (alpha * r_diamond) + 4.0 * T2rs / (alpha * r_sharp)
    solved = slope + math.sqrt(8.0 * (B_d + B_s) / alpha) + _deviation_radius(alpha, sigma, t, n, d, 4.0 * math.sqrt(2.0))
    return {"solved": solved, "simplified": max(r_diamond, r_sharp, slope), "slope_terms": slope}


@dataclass
class RadiusReport:
    r_fixed_point: float
    r_theorem2: float
    r_corollary: Optional[float]
    components: dict
    well_specified: bool = True
    confidence_theorem2: float = 0.0
    fixed_point_saturated: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# noise-scale tuning
# --------------------------------------------------------------------------

class TuneError(RuntimeError):
    def __init__(self, msg, table):
        super().__init__(msg)
        self.table = table


@dataclass
class TuneResult:
    rho: float
    achieved_radius: float
    target: float
    gap: bool
    table: list
    f_side: Optional[Predictor] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"rho": self.rho, "achieved_radius": self.achieved_radius, "target": self.target,
                "gap": self.gap, "table": [[float(a), float(b)] for a, b in self.table]}


def tune_rho_for_radius(trainer, ds: FixedDesignDataset, spec: LossSpec, eps, target_radius: float,
                        which: str = DIAMOND, bracket=(1e-3, 1e3), tol: float = 1e-6,
                        max_evals: int = 200, f_hat: Optional[Predictor] = None,
                        grid: int = 25, solve_tol: float = 1e-8, solve_max_iter: int = 100,
                        method: str = "auto") -> TuneResult:
    """Noise scale ``rho`` whose refit lands at ``||f_rho - f_hat||_n = target_radius``.

    A geometric grid over ``bracket`` is scanned for a sign change of
    ``phi(rho) = radius(rho) - target`` and the first one is bisected (in
    log scale). Without a sign change, ``|phi|`` is minimised locally around
    the best grid point; success still requires ``|phi| <= tol``.
    """
    lo_b, hi_b = bracket
    if not (0 < lo_b < hi_b):
        raise ValueError("bracket must satisfy 0 < lo < hi")
    if target_radius < 0:
        raise ValueError("target radius must be nonnegative")
    if f_hat is None:
        f_hat = trainer.fit(ds)
    table = []
    cache = {}

    def phi(rho):
        if rho in cache:
            return cache[rho][0]
        f, _, rad = refit_one_side(trainer, ds, f_hat, spec, eps, rho, which, solve_tol,
                                   solve_max_iter, method)
        cache[rho] = (rad - target_radius, f)
        table.append((float(rho), float(rad)))
        return rad - target_radius

    def done(rho, gap):
        val, f = cache[rho]
        return TuneResult(float(rho), float(val + target_radius), float(target_radius), gap,
                          sorted(table), f)

    rhos = np.geomspace(lo_b, hi_b, max(grid, 2))
    vals = []
    for rho in rhos:
        v = phi(float(rho))
        vals.append(v)
        if abs(v) <= tol:
            return done(float(rho), False)
    vals = np.asarray(vals)
    change = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
    if change.size:
        a, b = float(rhos[change[0]]), float(rhos[change[0] + 1])
        fa = vals[change[0]]
        best = a if abs(fa) < abs(vals[change[0] + 1]) else b
        while len(table) < max_evals:
            m = math.sqrt(a * b)
            if not (a < m < b):
                break
            fm = phi(m)
            if abs(fm) < abs(cache[best][0]):
                best = m
            if abs(fm) <= tol:
                return done(m, False)
            if np.sign(fm) == np.sign(fa):
                a, fa = m, fm
            else:
                b = m
        return done(best, abs(cache[best][0]) > tol)
    # no sign change: local minimisation of |phi| between the best grid point's neighbours
    k = int(np.argmin(np.abs(vals)))
    a = math.log(rhos[max(k - 1, 0)])
    b = math.log(rhos[min(k + 1, len(rhos) - 1)])
    best = float(rhos[k])
    while len(table) < max_evals and b - a > 1e-15:
        m1, m2 = a + (b - a) / 3.0, b - (b - a) / 3.0
        f1, f2 = abs(phi(math.exp(m1))), abs(phi(math.exp(m2)))
        for m, fv in ((m1, f1), (m2, f2)):
            if fv < abs(cache[best][0]):
                best = math.exp(m)
        if min(f1, f2) <= tol:
            return done(best, False)
        if f1 < f2:
            b = m2
        else:
            a = m1
    raise TuneError(f"no noise scale in {bracket} reaches radius {target_radius:.6g} "
                    f"(closest {cache[best][0] + target_radius:.6g} at rho={best:.6g})", sorted(table))


# --------------------------------------------------------------------------
# full pipeline
# --------------------------------------------------------------------------

@dataclass
class AuditResult:
    out: WildRefitOutput
    fixed_point: FixedPointResult
    tune_diamond: Optional[TuneResult]
    tune_sharp: Optional[TuneResult]
    bound: BoundReport
    radius: RadiusReport
    lemma1: dict
    r_used: float
    r_policy: str
    oracle: dict

    def to_dict(self) -> dict:
        return {
            "refit": self.out.summary(),
            "fixed_point": asdict(self.fixed_point),
            "tune": None if self.tune_diamond is None else
            {DIAMOND: self.tune_diamond.to_dict(), SHARP: self.tune_sharp.to_dict()},
            "bound": self.bound.to_dict(),
            "radius": self.radius.to_dict(),
            "lemma1": self.lemma1,
            "r_used": self.r_used,
            "r_policy": self.r_policy,
            "oracle": self.oracle,
        }


def _gradient_norm(g):
    return float(np.sqrt(np.mean(np.sum(g * g, axis=1))))


def run_audit(trainer, ds: FixedDesignDataset, spec: LossSpec, *, seed=None, eps=None,
              fclass=None, sigma: float = 1.0, t: float = 2.0, f_star=None, f_dagger=None,
              optimism_variant: str = "proof", r_policy: str = "fixed_point",
              sup: Optional[SupSolver] = None, tune_kw: Optional[dict] = None,
              solve_tol: float = 1e-8, solve_max_iter: int = 100, method: str = "auto",
              fp_tol: float = 1e-8, rho: Optional[tuple] = None) -> AuditResult:
    """Fixed-point radius, noise scales tuned to twice that radius, refits and bounds.

    Passing ``f_star`` switches on oracle mode: pilot errors, the empirical
    excess risk and the misspecification term enter the bound, and the
    radius bound is evaluated at ``2 ||f_hat - f_star||_n``. ``f_dagger``
    defaults to ``f_star`` (well-specified). Fixed noise scales ``rho =
    (rho1, rho2)`` skip the tuning step.
    """
    if r_policy not in ("fixed_point", "corollary"):
        raise ValueError("r_policy must be 'fixed_point' or 'corollary'")
    if fclass is None:
        fclass = getattr(trainer, "function_class", None)
    sup = sup or _default_sup(fclass)
    f_hat = trainer.fit(ds)
    Z = predictions(f_hat, ds)
    g = spec.grad1(Z, ds.y)
    if eps is None:
        if seed is None:
            raise ValueError("need a seed or an explicit eps")
        eps = rademacher(ds.n, seed)
    eps = np.asarray(eps, dtype=float)
    vW, vT = eps[:, None] * g, -eps[:, None] * g
    Wf = lambda s: sup_process(sup, f_hat, vW, s, ds, fclass)  # noqa: E731
    Tf = lambda s: sup_process(sup, f_hat, vT, s, ds, fclass)  # noqa: E731
    alpha, beta, n, d = spec.alpha, spec.beta, ds.n, ds.d
    gnorm = _gradient_norm(g)
    r_max = 16.0 * gnorm / alpha * (1.0 + 1e-9) + 1e-300
    fp = fixed_point_radius(Wf, Tf, alpha, r_max, fp_tol)
    tune_kw = dict(tune_kw or {})
    tune_kw.setdefault("solve_tol", solve_tol)
    tune_kw.setdefault("solve_max_iter", solve_max_iter)
    tune_kw.setdefault("method", method)

    def refit_at(r):
        if rho is not None:
            out = doubly_wild_refit(trainer, ds, spec, rho[0], rho[1], seed=seed, eps=eps, tol=solve_tol,
                                    max_iter=solve_max_iter, method=method, f_hat=f_hat)
            return None, None, out
        td = tune_rho_for_radius(trainer, ds, spec, eps, 2.0 * r, DIAMOND, f_hat=f_hat, **tune_kw)
        ts = tune_rho_for_radius(trainer, ds, spec, eps, 2.0 * r, SHARP, f_hat=f_hat, **tune_kw)
        out = doubly_wild_refit(trainer, ds, spec, td.rho, ts.rho, seed=seed, eps=eps, tol=solve_tol,
                                max_iter=solve_max_iter, method=method, f_hat=f_hat)
        return td, ts, out

    td, ts, out = refit_at(fp.r)
    oracle_mode = f_star is not None
    oracle = {}
    if oracle_mode:
        f_dagger = f_star if f_dagger is None else f_dagger
        fs = predictions(f_star, ds)
        r_hat = empirical_norm(f_hat, f_star, ds)
        oracle["r_hat"] = r_hat
        oracle["bias_norm"] = empirical_norm(f_dagger, f_star, ds)
        oracle["empirical_excess"] = float(np.mean(spec.value(Z, ds.y) - spec.value(fs, ds.y)))
        r2 = r_hat
    else:
        r2 = fp.r
    # radius bounds
    W2, T2 = Wf(2.0 * r2), Tf(2.0 * r2)
    if oracle_mode:
        Bd2, Bs2 = pilot_errors(out, f_star, spec, r2, fclass, sup)
    else:
        Bd2 = Bs2 = 0.0
    r_thm2 = radius_bound_theorem2(W2, T2, Bd2, Bs2, alpha, sigma, t, n, d)
    cor = None
    W2d = Wf(2.0 * out.r_diamond)
    T2s = Tf(2.0 * out.r_sharp)
    if out.r_diamond > 0 and out.r_sharp > 0:
        if oracle_mode:
            Bdc, _ = pilot_errors(out, f_star, spec, out.r_diamond, fclass, sup)
            _, Bsc = pilot_errors(out, f_star, spec, out.r_sharp, fclass, sup)
        else:
            Bdc = Bsc = 0.0
        cor = radius_bound_corollary(out.r_diamond, out.r_sharp, W2d, T2s, Bdc, Bsc,
                                     alpha, sigma, t, n, d)
    r_cor = None if cor is None else max(out.r_diamond, out.r_sharp, cor["solved"])
    radius = RadiusReport(
        r_fixed_point=fp.r, r_theorem2=r_thm2, r_corollary=r_cor,
        components={"radius_evaluated": r2, "W_2r": W2, "T_2r": T2, "B_diamond_2r": Bd2,
                    "B_sharp_2r": Bs2, "deviation": _deviation_radius(alpha, sigma, t, n, d, 2.0 * math.sqrt(2.0)),
                    "corollary": cor, "pilots_included": oracle_mode},
        well_specified=f_dagger is None or f_dagger is f_star,
        confidence_theorem2=1.0 - 2.0 * math.exp(-t * t),
        fixed_point_saturated=fp.saturated,
    )
    r_used = fp.r
    if r_policy == "corollary" and r_cor is not None and rho is None:
        r_used = r_cor
        td, ts, out = refit_at(r_used)
        W2d = Wf(2.0 * out.r_diamond)
        T2s = Tf(2.0 * out.r_sharp)
    opt_d = wild_optimism_diamond(out, spec, optimism_variant)
    opt_s = wild_optimism_sharp(out, spec, optimism_variant)
    Wd = Wf(out.r_diamond)
    Ts = Tf(out.r_sharp)
    stat = max(v for v in (out.trainer_stationarity.values()) if v is not None) \
        if any(v is not None for v in out.trainer_stationarity.values()) else 0.0
    slack = float(getattr(trainer, "tol", 0.0) or 0.0) + 1e-8
    lemma1 = {"W_at_r_diamond": Wd, "T_at_r_sharp": Ts, "slack": slack,
              "diamond_ok": bool(Wd <= opt_d + slack), "sharp_ok": bool(Ts <= opt_s + slack),
              "max_stationarity": stat}
    lemma1["ok"] = lemma1["diamond_ok"] and lemma1["sharp_ok"]
    if oracle_mode:
        Bd, Bs = pilot_errors(out, f_star, spec, r_used, fclass, sup)
        bound = excess_risk_bound(opt_diamond=opt_d, opt_sharp=opt_s, r=r_used, beta=beta, alpha=alpha,
                                  sigma=sigma, t=t, n=n, d=d, empirical_excess=oracle["empirical_excess"],
                                  pilot_diamond=Bd, pilot_sharp=Bs, bias_norm=oracle["bias_norm"],
                                  W=Wf(2.0 * r_used), T=Tf(2.0 * r_used),
                                  optimism_variant=optimism_variant)
    else:
        bound = excess_risk_bound(opt_diamond=opt_d, opt_sharp=opt_s, r=r_used, beta=beta, alpha=alpha,
                                  sigma=sigma, t=t, n=n, d=d, training_error=float(np.mean(spec.value(Z, ds.y))),
                                  W=Wf(2.0 * r_used), T=Tf(2.0 * r_used), observable=True,
                                  optimism_variant=optimism_variant)
    return AuditResult(out, fp, td, ts, bound, radius, lemma1, r_used, r_policy, oracle)

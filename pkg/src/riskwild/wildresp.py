"""Wild responses: outcomes whose loss gradient at the fitted values equals a
sign-perturbed copy of the original gradient.

For each design point we need ``y`` with ``grad1 l(z, y) = g_target``. Losses
with an explicit inverse are solved in closed form; otherwise a damped Newton
iteration is tried and a proximal point iteration is the fallback.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .losses import LossSpec, _fd_jacobian
from .models import FixedDesignDataset, predictions

__all__ = [
    "WildTarget",
    "SolveReport",
    "WildSolveError",
    "wild_target_gradients",
    "solve_wild_response",
    "newton_solve",
    "ppa_solve",
    "build_wild_datasets",
]

DIAMOND = "diamond"
SHARP = "sharp"


@dataclass(frozen=True)
class WildTarget:
    """Gradient value required at design point ``i``."""

    i: int
    z: np.ndarray
    g_target: np.ndarray
    sign: str
    rho: float
    epsilon_i: int

    @classmethod
    def build(cls, i, z, g_tilde, sign, rho, eps_i) -> "WildTarget":
        if sign not in (DIAMOND, SHARP):
            raise ValueError(f"sign must be {DIAMOND!r} or {SHARP!r}")
        s = -1.0 if sign == DIAMOND else 1.0
        g = np.asarray(g_tilde, dtype=float)
        return cls(i, np.asarray(z, dtype=float), (1.0 + s * 2.0 * rho * eps_i) * g, sign, float(rho), int(eps_i))


@dataclass
class SolveReport:
    y: np.ndarray
    residual_norm: float
    iterations: int
    method: str
    converged: bool = True
    strictly_monotone: bool = True
    trace: list = field(default_factory=list)

    def to_dict(self, with_trace: bool = False) -> dict:
        out = {
            "y": [float(v) for v in np.ravel(self.y)],
            "residual_norm": float(self.residual_norm),
            "iterations": int(self.iterations),
            "method": self.method,
            "converged": bool(self.converged),
            "strictly_monotone": bool(self.strictly_monotone),
        }
        if with_trace:
            out["trace"] = self.trace
        return out


class WildSolveError(RuntimeError):
    """Gradient inversion failed; carries the best report and sample index."""

    def __init__(self, msg, report: Optional[SolveReport] = None, index: Optional[int] = None):
        super().__init__(msg)
        self.report = report
        self.index = index


def wild_target_gradients(g_tilde, eps, rho1: float, rho2: float):
    """Diamond targets ``(1 - 2 rho1 eps_i) g_i`` and sharp targets ``(1 + 2 rho2 eps_i) g_i``."""
    g = np.asarray(g_tilde, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    e = np.asarray(eps, dtype=float).reshape(-1)
    if e.shape[0] != g.shape[0]:
        raise ValueError(f"length mismatch: {g.shape[0]} gradients, {e.shape[0]} signs")
    if not (rho1 > 0 and rho2 > 0):
        raise ValueError("rho1 and rho2 must be positive")
    if not np.all(np.abs(e) == 1):
        raise ValueError("eps entries must be +1 or -1")
    return (1.0 - 2.0 * rho1 * e)[:, None] * g, (1.0 + 2.0 * rho2 * e)[:, None] * g


# --------------------------------------------------------------------------
# scalar-point solvers
# --------------------------------------------------------------------------

def _jac(fun, y):
    return _fd_jacobian(lambda u: fun(u), y[None, :])[0]


def newton_solve(F: Callable, y0, tol: float, max_iter: int):
    """Damped Newton on ``F(y) = 0`` with forward-difference Jacobian.

    Returns ``(y, residual, iterations, ok)``; ``ok`` is False when the
    Jacobian is singular or the line search stalls.
    """
    y = np.array(y0, dtype=float)
    r = F(y)
    rn = float(np.linalg.norm(r))
    for it in range(1, max_iter + 1):
        if rn <= tol:
            return y, rn, it - 1, True
        J = _jac(F, y)
        if not np.all(np.isfinite(J)) or np.linalg.cond(J) > 1e12:
            return y, rn, it, False
        step = np.linalg.solve(J, -r)
        t = 1.0
        while True:
            cand = y + t * step
            rc = F(cand)
            rcn = float(np.linalg.norm(rc))
            if np.isfinite(rcn) and rcn <= (1.0 - 1e-4 * t) * rn:
                break
            t *= 0.5
            if t < 1e-12:
                return y, rn, it, False
        y, r, rn = cand, rc, rcn
    return y, rn, max_iter, rn <= tol


_FLOOR = 1e-13


def _as_schedule(s, default):
    if s is None:
        return default
    if callable(s):
        return s
    if np.isscalar(s):
        return lambda k: float(s)
    seq = list(s)
    return lambda k: float(seq[min(k, len(seq) - 1)])


def ppa_solve(op: Callable, z0, c_schedule=None, delta_schedule=None, tol: float = 1e-8,
              max_outer: int = 100, inner_max: int = 50) -> SolveReport:
    """Proximal point iteration for a root of a monotone map ``op``.

    Each outer step approximately evaluates the resolvent
    ``z_{k+1} = (I + c_k op)^{-1}(z_k)`` by Newton on
    ``S_k(u) = op(u) + (u - z_k) / c_k`` and accepts ``u`` once
    ``||S_k(u)|| <= (delta_k / c_k) ||u - z_k||``.

    Parameters
    ----------
    c_schedule, delta_schedule : scalar, sequence or callable ``k -> value``
        Defaults are ``c_k = 1`` and ``delta_k = 2**-k``.

    Raises
    ------
    WildSolveError
        When ``max_outer`` steps do not reach ``||op(z)|| <= tol``; the
        report carries the residual trace.
    """
    c_of = _as_schedule(c_schedule, lambda k: 1.0)
    d_of = _as_schedule(delta_schedule, lambda k: 0.5 ** k)
    z = np.array(z0, dtype=float)
    trace = []
    res = float(np.linalg.norm(op(z)))
    for k in range(max_outer):
        if res <= tol:
            return SolveReport(z, res, k, "ppa", True, trace=trace)
        c, dk = c_of(k), d_of(k)
        if c <= 0:
            raise ValueError("c_k must be positive")
        zk = z

        def S(u, zk=zk, c=c):
            return op(u) + (u - zk) / c

        u = zk.copy()
        ok = False
        at_floor = False
        for _ in range(inner_max):
            su = S(u)
            lhs = float(np.linalg.norm(su))
            rhs = dk / c * float(np.linalg.norm(u - zk))
            if lhs <= rhs or lhs == 0.0:
                ok = True
                break
            # resolvent already exact to rounding; the rule's right side can sit below it
            if lhs <= _FLOOR * (1.0 + float(np.linalg.norm(u))):
                ok = at_floor = True
                break
            J = _jac(S, u)
            try:
                step = np.linalg.solve(J, -su)
            except np.linalg.LinAlgError:
                break
            t = 1.0
            while t >= 1e-12:
                cand = u + t * step
                if np.linalg.norm(S(cand)) <= (1.0 - 1e-4 * t) * lhs:
                    break
                t *= 0.5
            if t < 1e-12:
                break
            u = cand
        if not ok:
            rep = SolveReport(z, res, k, "ppa", False, trace=trace)
            raise WildSolveError(f"ppa inner solve failed at outer step {k}", rep)
        trace.append({"k": k, "c": c, "delta": dk, "inner_residual": lhs,
                      "rule_rhs": rhs, "rule_ok": bool(lhs <= rhs or lhs == 0.0),
                      "rounding_floor": at_floor})
        z = u
        res = float(np.linalg.norm(op(z)))
    if res <= tol:
        return SolveReport(z, res, max_outer, "ppa", True, trace=trace)
    rep = SolveReport(z, res, max_outer, "ppa", False, trace=trace)
    raise WildSolveError(f"ppa did not reach tol {tol:g} (residual {res:.3g})", rep)


def solve_wild_response(spec: LossSpec, z, g_target, tol: float = 1e-8, max_iter: int = 100,
                        method: str = "auto", y0=None) -> SolveReport:
    """Find ``y`` with ``||grad1 l(z, y) - g_target|| <= tol``.

    ``method="auto"`` tries the closed form, then Newton started at ``y0``
    (the original outcome by convention; ``z`` if omitted), then PPA.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if method not in ("auto", "newton", "ppa"):
        raise ValueError(f"unknown method {method!r}")
    z = np.asarray(z, dtype=float).reshape(-1)
    g = np.asarray(g_target, dtype=float).reshape(-1)
    strict = bool(getattr(spec, "strictly_monotone_in_y", True))

    def F(y):
        return spec.grad1(z, y) - g

    if method == "auto" and spec.has_inverse:
        y = np.asarray(spec.inverse_in_y(z, g), dtype=float).reshape(-1)
        rn = float(np.linalg.norm(F(y)))
        if rn <= tol:
            return SolveReport(y, rn, 0, "closed-form", True, strict)

    start = z.copy() if y0 is None else np.asarray(y0, dtype=float).reshape(-1)
    best = None
    if method in ("auto", "newton"):
        y, rn, its, ok = newton_solve(F, start, tol, max_iter)
        if ok and rn <= tol:
            return SolveReport(y, rn, its, "newton", True, strict)
        best = SolveReport(y, rn, its, "newton", False, strict)
        if method == "newton":
            raise WildSolveError(f"newton failed (residual {rn:.3g})", best)
    # op(y) = g - grad1(z, y) is monotone because -grad1 is monotone in y
    try:
        rep = ppa_solve(lambda y: -F(y), start, tol=tol, max_outer=max_iter)
    except WildSolveError as exc:
        cand = exc.report
        if best is None or (cand is not None and cand.residual_norm < best.residual_norm):
            best = cand
        raise WildSolveError(f"no method reached tol {tol:g}", best) from exc
    rep.strictly_monotone = strict
    return rep


# --------------------------------------------------------------------------
# dataset construction
# --------------------------------------------------------------------------

def _solve_block(spec, Z, G, Y0, tol, max_iter, method):
    n = Z.shape[0]
    strict = bool(getattr(spec, "strictly_monotone_in_y", True))
    reports = [None] * n
    Y = np.empty_like(G)
    pending = np.arange(n)
    if method == "auto" and spec.has_inverse:
        Yc = np.asarray(spec.inverse_in_y(Z, G), dtype=float).reshape(G.shape)
        res = np.linalg.norm(spec.grad1(Z, Yc) - G, axis=1)
        good = res <= tol
        Y[good] = Yc[good]
        for i in np.flatnonzero(good):
            reports[i] = SolveReport(Yc[i].copy(), float(res[i]), 0, "closed-form", True, strict)
        pending = np.flatnonzero(~good)
    for i in pending:
        try:
            rep = solve_wild_response(spec, Z[i], G[i], tol, max_iter, method, y0=Y0[i])
        except WildSolveError as exc:
            exc.index = int(i)
            raise WildSolveError(f"wild response solve failed at index {i}: {exc}", exc.report, int(i)) from exc
        Y[i] = rep.y
        reports[i] = rep
    return Y, reports


def build_wild_datasets(ds: FixedDesignDataset, f_hat, spec: LossSpec, eps, rho1: float,
                        rho2: float, tol: float = 1e-8, max_iter: int = 100,
                        method: str = "auto", which: Sequence[str] = (DIAMOND, SHARP)):
    """Perturbed datasets ``D_diamond`` and ``D_sharp`` sharing ``ds.x``.

    Returns ``(D_diamond, D_sharp, reports)`` where ``reports`` maps
    ``"diamond"``/``"sharp"`` to per-sample :class:`SolveReport` lists. A side
    not listed in ``which`` is returned as ``None``.
    """
    Z = predictions(f_hat, ds)
    G = spec.grad1(Z, ds.y)
    # rho for an unused side is irrelevant; keep the validation happy
    tg_d, tg_s = wild_target_gradients(G, eps, rho1 if rho1 else 1.0, rho2 if rho2 else 1.0)
    out = {}
    reports = {}
    for side, tg in ((DIAMOND, tg_d), (SHARP, tg_s)):
        if side not in which:
            out[side] = None
            continue
        Y, reps = _solve_block(spec, Z, tg, ds.y, tol, max_iter, method)
        worst = max(r.residual_norm for r in reps)
        if worst > tol:  # pragma: no cover - each solve already enforces tol
            raise WildSolveError(f"{side} residual {worst:.3g} exceeds tol")
        out[side] = ds.with_y(Y)
        reports[side] = reps
    return out[DIAMOND], out[SHARP], reports

"""Convex losses ``l(z, y)`` on R^d x R^d and numerical checks of their regularity.

All loss methods broadcast over leading axes: ``z`` and ``y`` of shape
``(..., d)`` give values of shape ``(...)`` and gradients of shape ``(..., d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

__all__ = [
    "LossSpec",
    "SquaredLoss",
    "RegularizedExpFamilyLoss",
    "QuadraticFormLoss",
    "CallableLoss",
    "LOG_PARTITIONS",
    "without_closed_form",
    "loss_value",
    "loss_grad1",
    "grad_fd_check",
    "check_assumption1",
    "CheckReport",
    "ClauseResult",
    "make_loss",
]


class LossSpec:
    """A loss that is beta-smooth and mu-strongly convex in its first argument.

    Subclasses implement :meth:`value` and :meth:`grad1`. A closed-form
    inverse of ``y -> grad1(z, y)`` is optional (:meth:`inverse_in_y`).
    ``mu`` also serves as the curvature constant ``alpha`` in every bound.
    """

    name = "custom"
    strictly_monotone_in_y = True
    #: gradient affine in y, so E_y l(z, y) is l(z, E y) up to a constant in z
    affine_in_y = False

    def __init__(self, beta: float, mu: float, validate: bool = True):
        self.beta = float(beta)
        self.mu = float(mu)
        if validate and not (self.beta >= self.mu > 0):
            raise ValueError(f"need beta >= mu > 0, got beta={beta}, mu={mu}")

    @property
    def alpha(self) -> float:
        return self.mu

    def value(self, z, y):
        raise NotImplementedError

    def grad1(self, z, y):
        raise NotImplementedError

    @property
    def has_inverse(self) -> bool:
        return False

    def inverse_in_y(self, z, g_target):
        """Return ``y`` with ``grad1(z, y) == g_target``."""
        raise NotImplementedError(f"{self.name} has no closed-form inverse")

    def argmin_z(self, y, tol: float = 1e-13, max_iter: int = 100):
        """Per-point minimiser ``argmin_z l(z, y)`` by damped Newton on grad1."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        z = y.copy()
        for _ in range(max_iter):
            g = self.grad1(z, y)
            if np.max(np.linalg.norm(g, axis=-1)) <= tol:
                break
            H = _fd_jacobian(lambda zz: self.grad1(zz, y), z)
            step = np.linalg.solve(H, g[..., None])[..., 0]
            t = 1.0
            base = np.linalg.norm(g, axis=-1)
            while t > 1e-10:
                cand = z - t * step
                if np.all(np.linalg.norm(self.grad1(cand, y), axis=-1) <= (1 - 1e-4 * t) * base + 1e-300):
                    break
                t *= 0.5
            z = z - t * step
        return z

    def __repr__(self) -> str:
        return f"{type(self).__name__}(beta={self.beta:g}, mu={self.mu:g})"


def _fd_jacobian(fun, y, h_rel: float = 1e-6):
    """Forward-difference Jacobian of a batched map R^d -> R^d, shape (..., d, d)."""
    y = np.asarray(y, dtype=float)
    d = y.shape[-1]
    f0 = fun(y)
    h = h_rel * (1.0 + np.linalg.norm(y, axis=-1, keepdims=True))
    J = np.empty(y.shape + (d,))
    for j in range(d):
        yp = y.copy()
        yp[..., j] += h[..., 0]
        J[..., :, j] = (fun(yp) - f0) / h
    return J


class SquaredLoss(LossSpec):
    """``||z - y||^2``; beta = mu = 2."""

    name = "squared"
    affine_in_y = True

    def __init__(self):
        super().__init__(beta=2.0, mu=2.0)

    def value(self, z, y):
        diff = np.asarray(z, dtype=float) - np.asarray(y, dtype=float)
        return np.sum(diff * diff, axis=-1)

    def grad1(self, z, y):
        return 2.0 * (np.asarray(z, dtype=float) - np.asarray(y, dtype=float))

    @property
    def has_inverse(self):
        return True

    def inverse_in_y(self, z, g_target):
        return np.asarray(z, dtype=float) - 0.5 * np.asarray(g_target, dtype=float)

    def argmin_z(self, y, tol=1e-13, max_iter=100):
        return np.array(np.atleast_2d(y), dtype=float)


def _softplus(z):
    return np.logaddexp(0.0, z)


@dataclass(frozen=True)
class _LogPartition:
    value: Callable
    grad: Callable
    #: upper bound on the Hessian spectrum (inf when unbounded)
    hess_max: float
    hess_min: float


LOG_PARTITIONS = {
    "gaussian": _LogPartition(
        value=lambda z: 0.5 * np.sum(z * z, axis=-1),
        grad=lambda z: np.array(z, dtype=float),
        hess_max=1.0,
        hess_min=1.0,
    ),
    "softplus-sum": _LogPartition(
        value=lambda z: np.sum(_softplus(z), axis=-1),
        grad=lambda z: expit(z),
        hess_max=0.25,
        hess_min=0.0,
    ),
}


class RegularizedExpFamilyLoss(LossSpec):
    """``A(z) - z.y + (mu/2)||z||^2`` for a named log-partition ``A``.

    ``beta = sup eig(hess A) + mu`` and the strong-convexity constant is
    ``inf eig(hess A) + mu``; both may be overridden.
    """

    name = "expfam"
    affine_in_y = True

    def __init__(self, log_partition: str = "gaussian", mu_reg: float = 1.0,
                 beta: Optional[float] = None, mu: Optional[float] = None,
                 validate: bool = True):
        if log_partition not in LOG_PARTITIONS:
            raise ValueError(f"unknown log-partition {log_partition!r}; "
                             f"choose from {sorted(LOG_PARTITIONS)}")
        self.log_partition = log_partition
        self._A = LOG_PARTITIONS[log_partition]
        self.mu_reg = float(mu_reg)
        beta = self._A.hess_max + self.mu_reg if beta is None else beta
        mu = self._A.hess_min + self.mu_reg if mu is None else mu
        super().__init__(beta=beta, mu=mu, validate=validate)

    def value(self, z, y):
        z = np.asarray(z, dtype=float)
        y = np.asarray(y, dtype=float)
        return self._A.value(z) - np.sum(z * y, axis=-1) + 0.5 * self.mu_reg * np.sum(z * z, axis=-1)

    def grad1(self, z, y):
        z = np.asarray(z, dtype=float)
        return self._A.grad(z) - np.asarray(y, dtype=float) + self.mu_reg * z

    @property
    def has_inverse(self):
        return True

    def inverse_in_y(self, z, g_target):
        z = np.asarray(z, dtype=float)
        return self._A.grad(z) + self.mu_reg * z - np.asarray(g_target, dtype=float)

    def argmin_z(self, y, tol=1e-13, max_iter=100):
        if self.log_partition == "gaussian":
            return np.atleast_2d(np.asarray(y, dtype=float)) / (1.0 + self.mu_reg)
        return super().argmin_z(y, tol, max_iter)

    def __repr__(self):
        return (f"RegularizedExpFamilyLoss({self.log_partition!r}, mu_reg={self.mu_reg:g}, "
                f"beta={self.beta:g}, mu={self.mu:g})")


class QuadraticFormLoss(LossSpec):
    """``(z - y)' A (z - y) + b'(z - y)`` with symmetric positive-definite ``A``.

    Constants default to twice the extreme eigenvalues of ``A``.
    """

    name = "quadform"
    affine_in_y = True

    def __init__(self, A, b=None, beta: Optional[float] = None, mu: Optional[float] = None,
                 validate: bool = True):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if not np.allclose(A, A.T, atol=1e-12):
            raise ValueError("A must be symmetric")
        self.A = A
        self.b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float).reshape(-1)
        if self.b.shape != (A.shape[0],):
            raise ValueError("b must have length d")
        eig = np.linalg.eigvalsh(A)
        self.eigvals = eig
        self._Ainv = np.linalg.inv(A) if eig[0] > 0 else np.linalg.pinv(A)
        beta = 2.0 * eig[-1] if beta is None else beta
        mu = 2.0 * eig[0] if mu is None else mu
        super().__init__(beta=beta, mu=mu, validate=validate)

    @property
    def d(self):
        return self.A.shape[0]

    def value(self, z, y):
        diff = np.asarray(z, dtype=float) - np.asarray(y, dtype=float)
        return np.einsum("...i,ij,...j->...", diff, self.A, diff) + diff @ self.b

    def grad1(self, z, y):
        diff = np.asarray(z, dtype=float) - np.asarray(y, dtype=float)
        return 2.0 * diff @ self.A + self.b

    @property
    def has_inverse(self):
        return True

    def inverse_in_y(self, z, g_target):
        rhs = np.asarray(g_target, dtype=float) - self.b
        return np.asarray(z, dtype=float) - 0.5 * rhs @ self._Ainv

    def argmin_z(self, y, tol=1e-13, max_iter=100):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return y - 0.5 * np.linalg.solve(self.A, self.b)

    def __repr__(self):
        return f"QuadraticFormLoss(d={self.d}, beta={self.beta:g}, mu={self.mu:g})"


class CallableLoss(LossSpec):
    """Loss assembled from user callables; used for custom losses and for
    stripping the closed-form inverse off a built-in."""

    def __init__(self, value, grad1, beta, mu, inverse_in_y=None,
                 strictly_monotone_in_y=True, name="custom", affine_in_y=False,
                 validate=True):
        super().__init__(beta=beta, mu=mu, validate=validate)
        self._value = value
        self._grad1 = grad1
        self._inverse = inverse_in_y
        self.strictly_monotone_in_y = strictly_monotone_in_y
        self.name = name
        self.affine_in_y = affine_in_y

    def value(self, z, y):
        return self._value(z, y)

    def grad1(self, z, y):
        return self._grad1(z, y)

    @property
    def has_inverse(self):
        return self._inverse is not None

    def inverse_in_y(self, z, g_target):
        if self._inverse is None:
            return super().inverse_in_y(z, g_target)
        return self._inverse(z, g_target)


def without_closed_form(spec: LossSpec) -> CallableLoss:
    """Same loss with ``inverse_in_y`` removed, forcing numerical inversion."""
    return CallableLoss(spec.value, spec.grad1, spec.beta, spec.mu, inverse_in_y=None,
                        strictly_monotone_in_y=spec.strictly_monotone_in_y,
                        name=f"{spec.name}-numeric", affine_in_y=spec.affine_in_y,
                        validate=False)


def _check_dims(z, y):
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if z.shape[-1:] != y.shape[-1:] or z.ndim == 0 or z.shape[-1] < 1:
        raise ValueError(f"dimension mismatch: z{z.shape} vs y{y.shape}")
    return z, y


def loss_value(spec: LossSpec, z, y):
    """``l(z, y)``; raises on mismatched dimension or a non-finite result."""
    z, y = _check_dims(z, y)
    out = spec.value(z, y)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"{spec.name}: non-finite loss value")
    return out if np.ndim(out) else float(out)


def loss_grad1(spec: LossSpec, z, y):
    """Gradient of the loss in its first argument."""
    z, y = _check_dims(z, y)
    return spec.grad1(z, y)


def grad_fd_check(spec: LossSpec, z, y, h: float = 1e-5) -> float:
    """Max over coordinates of ``|grad1 - central difference| / (1 + |grad1|)``."""
    if not 1e-8 <= h <= 1e-3:
        raise ValueError("h must lie in [1e-8, 1e-3]")
    z, y = _check_dims(z, y)
    g = spec.grad1(z, y)
    err = 0.0
    for j in range(z.shape[-1]):
        zp, zm = z.copy(), z.copy()
        zp[..., j] += h
        zm[..., j] -= h
        fd = (spec.value(zp, y) - spec.value(zm, y)) / (2 * h)
        err = max(err, float(np.max(np.abs(g[..., j] - fd) / (1.0 + np.abs(g[..., j])))))
    return err


@dataclass
class ClauseResult:
    worst: float
    violated: bool
    detail: str = ""


@dataclass
class CheckReport:
    loss: str
    beta: float
    mu: float
    trials: int
    slack: float
    clauses: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not any(c.violated for c in self.clauses.values())

    @property
    def violations(self) -> list:
        return [k for k, c in self.clauses.items() if c.violated]

    def to_dict(self) -> dict:
        return {
            "loss": self.loss,
            "beta": self.beta,
            "mu": self.mu,
            "alpha": self.mu,
            "alpha_is_mu": True,
            "trials": self.trials,
            "slack": self.slack,
            "passed": self.passed,
            "violations": self.violations,
            "clauses": {k: {"worst": c.worst, "violated": c.violated, "detail": c.detail}
                        for k, c in self.clauses.items()},
        }


def gaussian_point_sampler(d: int, scale: float = 3.0):
    """Default sampler of ``(z, y1, y2)`` triples with N(0, scale^2) coordinates."""
    def sample(rng, trials):
        return tuple(scale * rng.standard_normal((trials, d)) for _ in range(3))
    return sample


def check_assumption1(spec: LossSpec, point_sampler=None, trials: int = 1000, d: int = 2,
                      seed: int = 0, slack: float = 1e-9, coercive_rmax: float = 1e6,
                      ladder: int = 13) -> CheckReport:
    """Falsification test of the smoothness, convexity, monotonicity and
    coercivity clauses on sampled points.

    ``point_sampler(rng, trials)`` returns three ``(trials, d)`` arrays
    ``z, y1, y2``. The two-point inequalities use ``z`` and ``y1`` as the
    second argument and ``y2`` as the second point in ``z``-space. Slack is
    relative to the magnitude of the compared loss values.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if point_sampler is None:
        point_sampler = gaussian_point_sampler(getattr(spec, "d", d))
    rng = np.random.default_rng(seed)
    z, y1, y2 = (np.asarray(a, dtype=float) for a in point_sampler(rng, trials))
    report = CheckReport(spec.name, spec.beta, spec.mu, trials, slack)

    # two points in z for the same y
    z2 = y2
    l1 = spec.value(z, y1)
    l2 = spec.value(z2, y1)
    g1 = spec.grad1(z, y1)
    diff = z2 - z
    sq = np.sum(diff * diff, axis=-1)
    bregman = l2 - l1 - np.sum(g1 * diff, axis=-1)
    tol = slack * np.maximum(1.0, np.maximum(np.abs(l1), np.abs(l2)))

    smooth_gap = bregman - 0.5 * spec.beta * sq - tol
    worst = float(np.max(smooth_gap))
    report.clauses["smoothness"] = ClauseResult(max(worst, 0.0), worst > 0,
                                                "D(z2,z1) <= beta/2 |z2-z1|^2")

    mu_eff = max(spec.mu, 0.0)
    convex_gap = 0.5 * mu_eff * sq - bregman - tol
    worst = float(np.max(convex_gap))
    bad_mu = not spec.mu > 0
    detail = "D(z2,z1) >= mu/2 |z2-z1|^2"
    if bad_mu:
        detail += f"; stated mu={spec.mu:g} is not positive"
    report.clauses["strong_convexity"] = ClauseResult(max(worst, 0.0), worst > 0 or bad_mu, detail)

    ga = spec.grad1(z, y1)
    gb = spec.grad1(z, y2)
    inner = np.sum((ga - gb) * (y1 - y2), axis=-1)
    itol = slack * np.maximum(1.0, np.linalg.norm(ga - gb, axis=-1) * np.linalg.norm(y1 - y2, axis=-1))
    worst = float(np.max(inner - itol))
    report.clauses["monotonicity"] = ClauseResult(max(float(np.max(inner)), 0.0), worst > 0,
                                                  "<g(z,y1)-g(z,y2), y1-y2> <= 0")

    # coercivity proxy along a geometric ladder of radii
    u = rng.standard_normal(z.shape)
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    radii = np.geomspace(1.0, coercive_rmax, ladder)
    prof = np.stack([np.sum(spec.grad1(z, R * u) * u, axis=-1) for R in radii], axis=-1)
    increasing = np.max(np.diff(prof, axis=-1), axis=-1)
    last = prof[:, -1]
    worst = float(max(np.max(increasing), np.max(last)))
    ok = bool(np.all(increasing < 0) and np.all(last < 0))
    report.clauses["coercivity"] = ClauseResult(
        max(worst, 0.0), not ok,
        f"g(z, R u).u decreasing and negative on R in [1, {coercive_rmax:g}]")
    return report


def make_loss(cfg: dict, d: int) -> LossSpec:
    """Build a loss from a config mapping ``{name: squared|expfam|quadform, ...}``."""
    name = cfg.get("name", "squared")
    if name == "squared":
        return SquaredLoss()
    if name == "expfam":
        return RegularizedExpFamilyLoss(cfg.get("log_partition", "gaussian"),
                                        mu_reg=cfg.get("mu_reg", 1.0),
                                        beta=cfg.get("beta"), mu=cfg.get("mu"),
                                        validate=cfg.get("validate", True))
    if name == "quadform":
        A = cfg.get("A")
        A = np.eye(d) if A is None else A
        return QuadraticFormLoss(A, cfg.get("b"), beta=cfg.get("beta"), mu=cfg.get("mu"),
                                 validate=cfg.get("validate", True))
    raise KeyError(f"unknown loss {name!r}")

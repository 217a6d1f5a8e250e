"""Train, perturb, refit twice: the doubly wild refitting run."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .losses import LossSpec
from .models import FixedDesignDataset, Predictor, Trainer, TrainerError, empirical_norm, predictions
from .wildresp import DIAMOND, SHARP, WildSolveError, build_wild_datasets

__all__ = ["rademacher", "WildRefitOutput", "StageError", "doubly_wild_refit", "refit_one_side"]


class StageError(RuntimeError):
    """Failure tagged with the pipeline stage it came from."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


def rademacher(n: int, seed) -> np.ndarray:
    """``n`` independent uniform signs, deterministic in ``seed``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return np.where(rng.integers(0, 2, size=n) == 1, 1.0, -1.0)


@dataclass
class WildRefitOutput:
    f_hat: Predictor
    f_diamond: Predictor
    f_sharp: Predictor
    D0: FixedDesignDataset
    D_diamond: FixedDesignDataset
    D_sharp: FixedDesignDataset
    eps: np.ndarray
    g_tilde: np.ndarray
    rho1: float
    rho2: float
    r_diamond: float
    r_sharp: float
    seed: Optional[int]
    trainer_stationarity: dict
    solve_reports: dict

    @property
    def n(self) -> int:
        return self.D0.n

    @property
    def d(self) -> int:
        return self.D0.d

    def fitted(self, which: str = "hat") -> np.ndarray:
        f = {"hat": self.f_hat, DIAMOND: self.f_diamond, SHARP: self.f_sharp}[which]
        return predictions(f, self.D0)

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "rho1": float(self.rho1),
            "rho2": float(self.rho2),
            "r_diamond": float(self.r_diamond),
            "r_sharp": float(self.r_sharp),
            "n": self.n,
            "d": self.d,
            "eps": [int(e) for e in self.eps],
            "trainer_stationarity": {k: (None if v is None else float(v))
                                     for k, v in self.trainer_stationarity.items()},
        }


def _fit(trainer, ds, stage):
    try:
        return trainer.fit(ds)
    except (TrainerError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        raise StageError(stage, exc) from exc


def _stationarity(f):
    return getattr(f, "info", {}).get("stationarity")


def refit_one_side(trainer: Trainer, ds: FixedDesignDataset, f_hat: Predictor, spec: LossSpec,
                   eps, rho: float, which: str, tol: float = 1e-8, max_iter: int = 100,
                   method: str = "auto"):
    """Fit on a single perturbed dataset; returns ``(f_side, D_side, radius)``.

    Used by noise-scale tuning, where only one side changes per evaluation.
    """
    try:
        if which == DIAMOND:
            D, _, _ = build_wild_datasets(ds, f_hat, spec, eps, rho, 0, tol, max_iter, method, (DIAMOND,))
        elif which == SHARP:
            _, D, _ = build_wild_datasets(ds, f_hat, spec, eps, 0, rho, tol, max_iter, method, (SHARP,))
        else:
            raise ValueError(f"which must be {DIAMOND!r} or {SHARP!r}")
    except WildSolveError as exc:
        raise StageError(f"wild-{which}", exc) from exc
    f = _fit(trainer, D, f"fit-{which}")
    return f, D, empirical_norm(f, f_hat, ds)


def doubly_wild_refit(trainer: Trainer, ds: FixedDesignDataset, spec: LossSpec, rho1: float,
                      rho2: float, seed=None, eps=None, tol: float = 1e-8, max_iter: int = 100,
                      method: str = "auto", f_hat: Optional[Predictor] = None) -> WildRefitOutput:
    """Fit ``f_hat`` on ``ds``, build both wild datasets with one shared sign
    sequence, refit the same trainer on each, and measure the radii.

    Parameters
    ----------
    eps : array of +-1, optional
        Overrides the sign draw (``seed`` is then only recorded).
    f_hat : Predictor, optional
        Reuse an already fitted ``trainer.fit(ds)``; the caller vouches for it.
    """
    if not (rho1 > 0 and rho2 > 0):
        raise ValueError("rho1 and rho2 must be positive")
    if f_hat is None:
        f_hat = _fit(trainer, ds, "fit-original")
    Z = predictions(f_hat, ds)
    g_tilde = spec.grad1(Z, ds.y)
    if eps is None:
        if seed is None:
            raise ValueError("need a seed or an explicit eps")
        eps = rademacher(ds.n, seed)
    else:
        eps = np.asarray(eps, dtype=float).reshape(-1)
        if eps.shape[0] != ds.n or not np.all(np.abs(eps) == 1):
            raise ValueError("eps must hold n entries of +-1")
    try:
        D_d, D_s, reports = build_wild_datasets(ds, f_hat, spec, eps, rho1, rho2, tol, max_iter, method)
    except WildSolveError as exc:
        raise StageError("wild-responses", exc) from exc
    f_d = _fit(trainer, D_d, "fit-diamond")
    f_s = _fit(trainer, D_s, "fit-sharp")
    return WildRefitOutput(
        f_hat=f_hat, f_diamond=f_d, f_sharp=f_s,
        D0=ds, D_diamond=D_d, D_sharp=D_s,
        eps=eps, g_tilde=g_tilde, rho1=float(rho1), rho2=float(rho2),
        r_diamond=empirical_norm(f_d, f_hat, ds), r_sharp=empirical_norm(f_s, f_hat, ds),
        seed=seed,
        trainer_stationarity={"original": _stationarity(f_hat), DIAMOND: _stationarity(f_d),
                              SHARP: _stationarity(f_s)},
        solve_reports=reports,
    )

"""Run configuration: defaults, strict key checking, YAML/JSON loading."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import yaml

from .oracle import NoiseModel, ScenarioConfig

__all__ = ["ConfigError", "DEFAULTS", "RunConfig", "load_config", "resolve_seed"]


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


DEFAULTS: dict = {
    "seed": None,
    "out": "out",
    "mode": None,
    "dims": {"n": 100, "p": 2, "d": 2},
    "design": {"kind": "uniform", "low": -1.0, "high": 1.0},
    "f_star": {"kind": "linear", "coef": None},
    "noise": {"kind": "isotropic-gaussian", "sigma": 1.0, "df": None},
    "loss": {"name": "squared", "log_partition": "gaussian", "mu_reg": 1.0, "A": None, "b": None,
             "beta": None, "mu": None},
    "trainer": {"name": "ridge", "lambda": 0.0, "tol": 1e-10, "max_iter": 20000, "widths": [16],
                "epochs": 500, "step": 0.05, "seed": 0, "anchor": None},
    "class": {"kind": "linear", "features": "identity", "coefficient_bound": None},
    "solver": {"tol": 1e-8, "max_iter": 100, "method": "auto"},
    "sup": {"iterations": 200, "restarts": 10},
    "engine": {"rho1": None, "rho2": None, "eps": None},
    "risk": {"t": 2.0, "sigma": None, "optimism_variant": "proof", "r_policy": "fixed_point"},
    "tune": {"target": None, "bracket": [1e-3, 1e3], "tol": 1e-6, "max_evals": 200, "which": "both",
             "grid": 25},
    "experiment": {"reps": 200, "t": 2.0, "workers": 1, "mc_samples": 2000, "min_reps": 50},
    "check": {"trials": 1000, "seed": 0},
    "data": {"path": None},
}

_CHOICES = {
    ("mode",): (None, "observable", "oracle"),
    ("design", "kind"): ("uniform", "grid"),
    ("noise", "kind"): ("isotropic-gaussian", "isotropic-student-t"),
    ("loss", "name"): ("squared", "expfam", "quadform"),
    ("trainer", "name"): ("ridge", "convex-erm", "mlp", "interpolate"),
    ("class", "kind"): ("linear", "unconstrained"),
    ("class", "features"): ("identity", "affine", "intercept", "quadratic"),
    ("solver", "method"): ("auto", "newton", "ppa"),
    ("risk", "optimism_variant"): ("proof", "literal"),
    ("risk", "r_policy"): ("fixed_point", "corollary"),
    ("tune", "which"): ("both", "diamond", "sharp"),
}


def _merge(base: dict, over: dict, path=()):
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {'.'.join(path + (k,))!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config section {'.'.join(path + (k,))!r} must be a mapping")
            _merge(base[k], v, path + (k,))
        else:
            base[k] = v


@dataclass
class RunConfig:
    """Merged configuration tree plus the resolved seed and output directory."""

    tree: dict
    seed: int
    out: Path
    source: Optional[Path] = None

    def __getitem__(self, key) -> Any:
        return self.tree[key]

    @property
    def mode(self) -> str:
        if self.tree["mode"]:
            return self.tree["mode"]
        return "observable" if self.tree["data"]["path"] else "oracle"

    def scenario(self) -> ScenarioConfig:
        t = self.tree
        try:
            noise = NoiseModel(t["noise"]["kind"], float(t["noise"]["sigma"]), t["noise"]["df"])
            return ScenarioConfig(
                n=int(t["dims"]["n"]), p=int(t["dims"]["p"]), d=int(t["dims"]["d"]),
                design=dict(t["design"]), f_star=dict(t["f_star"]), noise=noise,
                loss=dict(t["loss"]), trainer=dict(t["trainer"]), fclass=dict(t["class"]),
                seed=self.seed, mc_samples=int(t["experiment"]["mc_samples"]),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def data_path(self) -> Optional[Path]:
        p = self.tree["data"]["path"]
        if p is None:
            return None
        p = Path(p)
        if not p.is_absolute() and self.source is not None:
            p = self.source.parent / p
        return p


def resolve_seed(cli_seed: Optional[int], cfg_seed: Optional[int]) -> int:
    """``--seed`` beats the config, which beats ``RISKWILD_SEED``; default 0."""
    if cli_seed is not None:
        return int(cli_seed)
    if cfg_seed is not None:
        return int(cfg_seed)
    env = os.environ.get("RISKWILD_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"RISKWILD_SEED must be an integer, got {env!r}") from exc
    return 0


def load_config(path=None, overrides: Optional[dict] = None, cli_seed: Optional[int] = None,
                cli_out=None, cli_mode: Optional[str] = None) -> RunConfig:
    """Read ``path`` (YAML or JSON), overlay it on the defaults and validate."""
    tree = copy.deepcopy(DEFAULTS)
    src = None
    if path is not None:
        src = Path(path)
        try:
            text = src.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {src}: {exc}") from exc
        try:
            data = json.loads(text) if src.suffix.lower() == ".json" else yaml.safe_load(text)
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot parse config {src}: {exc}") from exc
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        _merge(tree, data)
    if overrides:
        _merge(tree, overrides)
    if cli_mode is not None:
        tree["mode"] = cli_mode
    for keys, allowed in _CHOICES.items():
        node = tree
        for k in keys[:-1]:
            node = node[k]
        if node[keys[-1]] not in allowed:
            raise ConfigError(f"{'.'.join(keys)} must be one of {allowed}, got {node[keys[-1]]!r}")
    for k in ("n", "p", "d"):
        if not isinstance(tree["dims"][k], int) or tree["dims"][k] < 1:
            raise ConfigError(f"dims.{k} must be a positive integer")
    if not tree["risk"]["t"] or tree["risk"]["t"] <= 0 or tree["experiment"]["t"] <= 0:
        raise ConfigError("t must be positive")
    seed = resolve_seed(cli_seed, tree["seed"])
    out = Path(cli_out if cli_out is not None else tree["out"])
    return RunConfig(tree, seed, out, src)

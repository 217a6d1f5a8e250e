"""``riskwild`` command line: check-loss, audit, tune-rho, radius, coverage.

Exit codes: 0 success, 1 failed check / failed stage / coverage below its
floor, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .engine import StageError, rademacher
from .losses import check_assumption1, make_loss
from .models import (AnchoredTrainer, FixedDesignDataset, LinearFeatureClass, TablePredictor,
                     TrainerError, UnconstrainedClass, empirical_norm, load_dataset, predictions)
from .oracle import (COVER_ATOL, best_in_class, coverage_experiment, gen_fixed_design, make_trainer,
                     true_excess_risk)
from .risk import SupSolver, TuneError, fixed_point_radius, run_audit, sup_process, tune_rho_for_radius
from .wildresp import DIAMOND, SHARP, WildSolveError

__all__ = ["main", "write_json_atomic", "write_text_atomic"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_text_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_atomic(path, obj) -> None:
    write_text_atomic(path, json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n")


def _dataset_csv(ds: FixedDesignDataset) -> str:
    header = [f"x_{j + 1}" for j in range(ds.p)] + [f"y_{k + 1}" for k in range(ds.d)]
    lines = [",".join(header)]
    for row in np.hstack([ds.x, ds.y]):
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def _echo(cfg: RunConfig) -> dict:
    tree = dict(cfg.tree)
    tree.pop("out", None)
    tree["seed"] = cfg.seed
    return tree


# --------------------------------------------------------------------------
# problem assembly
# --------------------------------------------------------------------------

class _Problem:
    def __init__(self, cfg: RunConfig, need_oracle: bool = False):
        t = cfg.tree
        self.mode = cfg.mode
        path = cfg.data_path()
        if path is not None:
            if self.mode == "oracle" or need_oracle:
                raise ConfigError("oracle mode needs a synthetic scenario, not a data file")
            try:
                self.ds = load_dataset(path)
            except (OSError, ValueError, KeyError) as exc:
                raise ConfigError(f"cannot load dataset {path}: {exc}") from exc
            d = self.ds.d
            self.f_star = None
            self.scenario = None
        else:
            sc = cfg.scenario()
            self.scenario = sc
            try:
                self.ds, f_star = gen_fixed_design(sc, cfg.seed)
            except (ValueError, KeyError) as exc:
                raise ConfigError(str(exc)) from exc
            d = sc.d
            self.f_star = f_star if (self.mode == "oracle" or need_oracle) else None
        try:
            self.spec = make_loss(t["loss"], d)
            ck = t["class"]
            if ck["kind"] == "unconstrained":
                self.fclass = UnconstrainedClass(d)
            else:
                self.fclass = LinearFeatureClass(ck["features"], d, ck["coefficient_bound"])
            trainer = make_trainer(t["trainer"], self.spec, self.fclass, self.ds.p, d)
        except (ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        anchor = t["trainer"]["anchor"]
        if anchor is not None:
            apath = Path(anchor)
            if not apath.is_absolute() and cfg.source is not None:
                apath = cfg.source.parent / apath
            try:
                fitted = load_dataset(apath)
            except (OSError, ValueError, KeyError) as exc:
                raise ConfigError(f"cannot load anchor {apath}: {exc}") from exc
            if fitted.y.shape != self.ds.y.shape or not np.array_equal(fitted.x, self.ds.x):
                raise ConfigError("anchor file must list the dataset covariates with fitted values")
            trainer = AnchoredTrainer(trainer, self.ds.y, TablePredictor(self.ds.x, fitted.y))
        self.trainer = trainer
        self.cfg_lambda = float(t["trainer"]["lambda"])
        self.sup = SupSolver(getattr(self.fclass, "class_tag", "unconstrained"),
                             int(t["sup"]["iterations"]), int(t["sup"]["restarts"]))
        sigma = t["risk"]["sigma"]
        if sigma is None:
            sigma = t["noise"]["sigma"] if self.scenario is not None else None
        if sigma is None:
            raise ConfigError("risk.sigma is required for file datasets")
        self.sigma = float(sigma)
        self.f_dagger = None
        self.well_specified = None
        if self.f_star is not None:
            self.well_specified = self.scenario.well_specified
            self.f_dagger = best_in_class(self.fclass, self.scenario.noise, self.f_star, self.ds, self.spec,
                                          seed=[cfg.seed, 4], well_specified=self.well_specified)
        eps = t["engine"]["eps"]
        if eps is not None:
            eps = np.asarray(eps, dtype=float)
            if eps.shape != (self.ds.n,) or not np.all(np.abs(eps) == 1):
                raise ConfigError("engine.eps must list n entries of +1/-1")
        self.eps = eps if eps is not None else rademacher(self.ds.n, cfg.seed)
        self.eps_source = "config" if eps is not None else "seed"
        r1, r2 = t["engine"]["rho1"], t["engine"]["rho2"]
        if (r1 is None) != (r2 is None):
            raise ConfigError("engine.rho1 and engine.rho2 must be set together")
        if r1 is not None and not (r1 > 0 and r2 > 0):
            raise ConfigError("engine.rho1 and engine.rho2 must be positive")
        self.rho = None if r1 is None else (float(r1), float(r2))
        tn = t["tune"]
        self.tune_kw = {"bracket": tuple(tn["bracket"]), "tol": float(tn["tol"]),
                        "max_evals": int(tn["max_evals"]), "grid": int(tn["grid"])}
        sv = t["solver"]
        self.solver_kw = {"solve_tol": float(sv["tol"]), "solve_max_iter": int(sv["max_iter"]),
                          "method": sv["method"]}

    def audit(self, cfg: RunConfig):
        r = cfg.tree["risk"]
        return run_audit(self.trainer, self.ds, self.spec, seed=cfg.seed, eps=self.eps, fclass=self.fclass,
                         sigma=self.sigma, t=float(r["t"]), f_star=self.f_star, f_dagger=self.f_dagger,
                         optimism_variant=r["optimism_variant"], r_policy=r["r_policy"], sup=self.sup,
                         tune_kw=self.tune_kw, rho=self.rho, **self.solver_kw)

    def flags(self) -> dict:
        return {"observable_mode": self.f_star is None, "well_specified": self.well_specified,
                "alpha_is_mu": True, "eps_source": self.eps_source,
                "trainer": self.trainer.metadata, "loss": self.spec.name,
                "class": getattr(self.fclass, "class_tag", "unconstrained")}


def _lemma1_applicable(prob: _Problem) -> bool:
    """Exact ERM over a linear space: the setting where the inequality is a theorem."""
    name = prob.trainer.name.replace("anchored-", "")
    if prob.trainer.name.startswith("anchored-") or name == "mlp":
        return False
    if name == "ridge" and prob.cfg_lambda != 0:
        return False
    return getattr(prob.fclass, "coefficient_bound", None) is None


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_check_loss(cfg: RunConfig) -> int:
    t = cfg.tree
    lc = dict(t["loss"])
    lc["validate"] = False  # the checker itself is the validation
    try:
        spec = make_loss(lc, t["dims"]["d"])
    except (ValueError, KeyError, np.linalg.LinAlgError) as exc:
        raise ConfigError(str(exc)) from exc
    rep = check_assumption1(spec, trials=int(t["check"]["trials"]), d=int(t["dims"]["d"]),
                            seed=int(t["check"]["seed"]) + cfg.seed)
    payload = rep.to_dict()
    payload["config"] = _echo(cfg)
    write_json_atomic(cfg.out / "check_loss.json", payload)
    if not rep.passed:
        print(f"assumption check failed: {', '.join(rep.violations)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_audit(cfg: RunConfig) -> int:
    prob = _Problem(cfg)
    a = prob.audit(cfg)
    payload = a.to_dict()
    payload["config"] = _echo(cfg)
    payload["flags"] = prob.flags()
    payload["flags"]["optimism_variant"] = a.bound.optimism_variant
    payload["wild_solves"] = {side: [r.to_dict() for r in reps] for side, reps in a.out.solve_reports.items()}
    payload["g_tilde"] = a.out.g_tilde
    payload["fitted"] = {"hat": a.out.fitted("hat"), DIAMOND: a.out.fitted(DIAMOND), SHARP: a.out.fitted(SHARP)}
    applicable = _lemma1_applicable(prob)
    payload["lemma1"]["applicable"] = applicable
    status = EXIT_OK
    if prob.f_star is not None:
        sc = prob.scenario
        truth, se = true_excess_risk(a.out.f_hat, prob.f_star, prob.spec, sc.noise, prob.ds, sc.mc_samples,
                                     [cfg.seed, 3])
        payload["oracle"].update({"truth": truth, "truth_se": se,
                                  "covered": bool(a.bound.total_bound >= truth - COVER_ATOL),
                                  "rhat_covered": bool(a.oracle["r_hat"] <= a.radius.r_theorem2 + COVER_ATOL)})
    if applicable and not a.lemma1["ok"]:
        print("optimism check failed: wild optimism below the supremum", file=sys.stderr)
        status = EXIT_FAIL
    write_text_atomic(cfg.out / "d0.csv", _dataset_csv(a.out.D0))
    write_text_atomic(cfg.out / "d_diamond.csv", _dataset_csv(a.out.D_diamond))
    write_text_atomic(cfg.out / "d_sharp.csv", _dataset_csv(a.out.D_sharp))
    write_json_atomic(cfg.out / "audit.json", payload)
    return status


def _fixed_point(prob: _Problem, f_hat, cfg: RunConfig):
    g = prob.spec.grad1(predictions(f_hat, prob.ds), prob.ds.y)
    vW = prob.eps[:, None] * g
    Wf = lambda s: sup_process(prob.sup, f_hat, vW, s, prob.ds, prob.fclass)  # noqa: E731
    Tf = lambda s: sup_process(prob.sup, f_hat, -vW, s, prob.ds, prob.fclass)  # noqa: E731
    gnorm = float(np.sqrt(np.mean(np.sum(g * g, axis=1))))
    alpha = prob.spec.alpha
    return fixed_point_radius(Wf, Tf, alpha, 16.0 * gnorm / alpha * (1 + 1e-9) + 1e-300), gnorm


def cmd_tune_rho(cfg: RunConfig) -> int:
    prob = _Problem(cfg)
    f_hat = prob.trainer.fit(prob.ds)
    tn = cfg.tree["tune"]
    fp, gnorm = _fixed_point(prob, f_hat, cfg)
    target = float(tn["target"]) if tn["target"] is not None else 2.0 * fp.r
    sides = (DIAMOND, SHARP) if tn["which"] == "both" else (tn["which"],)
    payload = {"config": _echo(cfg), "target": target, "target_source": "config" if tn["target"] is not None
               else "twice the fixed-point radius", "r_fixed_point": fp.r, "gradient_norm": gnorm,
               "eps": prob.eps, "results": {}}
    status = EXIT_OK
    for side in sides:
        try:
            res = tune_rho_for_radius(prob.trainer, prob.ds, prob.spec, prob.eps, target, side, f_hat=f_hat,
                                      **prob.tune_kw, **prob.solver_kw)
            payload["results"][side] = res.to_dict()
            payload["results"][side]["recomputed_radius"] = empirical_norm(res.f_side, f_hat, prob.ds)
        except TuneError as exc:
            payload["results"][side] = {"error": str(exc), "table": exc.table}
            status = EXIT_FAIL
    write_json_atomic(cfg.out / "tune_rho.json", payload)
    return status


def cmd_radius(cfg: RunConfig) -> int:
    prob = _Problem(cfg)
    a = prob.audit(cfg)
    g = a.out.g_tilde
    gnorm = float(np.sqrt(np.mean(np.sum(g * g, axis=1))))
    rep = a.radius.to_dict()
    rep["well_specified"] = prob.well_specified
    cor = rep["components"]["corollary"]
    payload = {
        "config": _echo(cfg),
        "radius": rep,
        "alpha": prob.spec.alpha,
        "gradient_norm": gnorm,
        "unconstrained_fixed_point_reference": 8.0 * gnorm / prob.spec.alpha,
        "refit_radii": {DIAMOND: a.out.r_diamond, SHARP: a.out.r_sharp},
        "rho": {DIAMOND: a.out.rho1, SHARP: a.out.rho2},
        "corollary_vs_theorem2": None if cor is None else
        ("corollary_smaller" if rep["r_corollary"] < rep["r_theorem2"] else "theorem2_smaller_or_equal"),
        "flags": prob.flags(),
        "oracle": a.oracle,
    }
    if prob.f_star is None:
        payload["caveats"] = ["pilot errors omitted (need f_star)",
                              "radius bound assumes a well-specified class"]
    write_json_atomic(cfg.out / "radius.json", payload)
    return EXIT_OK


def cmd_coverage(cfg: RunConfig) -> int:
    if cfg.data_path() is not None:
        raise ConfigError("coverage runs need a synthetic scenario")
    if cfg.tree["mode"] == "observable":
        raise ConfigError("coverage runs use oracle mode")
    sc = cfg.scenario()
    ex, r = cfg.tree["experiment"], cfg.tree["risk"]
    reps = int(ex["reps"])
    if reps < 1:
        raise ConfigError("experiment.reps must be >= 1")
    tn = cfg.tree["tune"]
    tune_kw = {"bracket": tuple(tn["bracket"]), "tol": float(tn["tol"]), "max_evals": int(tn["max_evals"]),
               "grid": int(tn["grid"])}
    try:
        rep = coverage_experiment(sc, reps, float(ex["t"]), cfg.seed, r["r_policy"], r["optimism_variant"],
                                  r["sigma"], int(ex["workers"]), tune_kw, min_reps=1)
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    payload = rep.to_dict()
    payload["config"] = _echo(cfg)
    payload["underpowered"] = reps < int(ex["min_reps"])
    write_text_atomic(cfg.out / "coverage.csv", rep.csv_text())
    write_json_atomic(cfg.out / "coverage.json", payload)
    if not rep.passed:
        print(f"coverage below floor or optimism-check failures: thm1 {rep.coverage_thm1:.4f} "
              f"(floor {rep.floor_thm1:.4f}), thm2 {rep.coverage_thm2:.4f} (floor {rep.floor_thm2:.4f}), "
              f"optimism-check pass rate {rep.lemma1_pass_rate:.4f}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


COMMANDS = {
    "check-loss": cmd_check_loss,
    "audit": cmd_audit,
    "tune-rho": cmd_tune_rho,
    "radius": cmd_radius,
    "coverage": cmd_coverage,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="riskwild", description="Excess-risk audits by doubly wild refitting.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, default=None, help="YAML or JSON run configuration")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        sp.add_argument("--mode", choices=("observable", "oracle"), default=None)
    return ap


def main(argv: Optional[list] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config, cli_seed=args.seed, cli_out=args.out, cli_mode=args.mode)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StageError, TrainerError, WildSolveError, TuneError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

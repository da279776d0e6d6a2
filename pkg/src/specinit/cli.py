"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 acceptance failure (``--strict`` or a failed ``validate``).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .asymptotics import critical_ratios, predict
from .errors import (
    AssumptionError,
    BracketError,
    ConfigError,
    ConvergenceError,
    DomainError,
    ScanError,
)
from .harness import ExperimentConfig, compare, sweep
from .model import make_pr_subset, make_pr_trimming, model_from_config, validate
from .quadrature import default_rule
from .spectral import arrowhead_solve, arrowhead_view, cosine_sq, interlacing_ok

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ACCEPT = 0, 2, 3, 4
PREDICT_FIELDS = ("alpha", "lambda_star", "rho_limit", "lambda1_limit", "lambda2_limit",
                  "phase", "phi_prime_at_star")
SWEEP_T_DEFAULTS = {
    "pr_trimming": (2.0, 12.0, 41),
    "pr_subset": (0.2, 6.0, 30),
}


@dataclass
class RunManifest:
    command: str
    config: dict
    version: str
    seed: Optional[int]
    started: str
    finished: str = ""
    outputs: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "version": self.version,
            "seed": self.seed,
            "started": self.started,
            "finished": self.finished,
            "outputs": list(self.outputs),
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def load_config(path: Optional[str]) -> dict:
    if path is None:
        raise ConfigError("a --config file is required")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict) or "model" not in cfg:
        raise ConfigError("config must be an object with a 'model' section")
    extra = set(cfg) - {"model", "experiment", "output"}
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    return cfg


def _alpha_grid(args, experiment: dict) -> list:
    lo = args.alpha_min if args.alpha_min is not None else experiment.get("alpha_min")
    hi = args.alpha_max if args.alpha_max is not None else experiment.get("alpha_max")
    steps = args.alpha_steps if args.alpha_steps is not None else experiment.get("alpha_steps")
    if lo is not None or hi is not None:
        if lo is None or hi is None:
            raise ConfigError("both alpha_min and alpha_max are needed for a log grid")
        steps = 20 if steps is None else int(steps)
        if not 0 < lo <= hi or steps < 1:
            raise ConfigError(f"bad alpha grid: min={lo}, max={hi}, steps={steps}")
        return [float(a) for a in np.geomspace(lo, hi, steps)]
    grid = experiment.get("alpha_grid")
    if not grid:
        raise ConfigError("no alpha grid: set experiment.alpha_grid or --alpha-min/--alpha-max")
    return [float(a) for a in grid]


class _Writer:
    def __init__(self, args, cfg: dict, command: str, seed=None):
        out = cfg.get("output", {}) if cfg else {}
        self.dir = Path(args.out or out.get("dir", "specinit_out"))
        self.prefix = out.get("prefix", command)
        self.manifest = RunManifest(command, cfg, __version__, seed, _now())

    def write(self, suffix: str, text: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / f"{self.prefix}{suffix}"
        path.write_text(text)
        self.manifest.outputs.append(str(path))
        return path

    def close(self) -> Path:
        self.manifest.finished = _now()
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / f"{self.prefix}_manifest.json"
        self.manifest.outputs.append(str(path))
        path.write_text(json.dumps(self.manifest.to_dict(), indent=2) + "\n")
        return path


def _csv(rows, fields) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in fields})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# commands


def cmd_predict(args) -> int:
    cfg = load_config(args.config)
    model = model_from_config(cfg["model"])
    grid = _alpha_grid(args, cfg.get("experiment", {}))
    rule = default_rule()
    rows = [predict(model, rule, a).to_dict() for a in grid]
    wr = _Writer(args, cfg, "predict")
    wr.write(".csv", _csv(rows, PREDICT_FIELDS))
    wr.write(".json", json.dumps({"model": cfg["model"], "rows": rows}, indent=2) + "\n")
    wr.close()
    for row in rows:
        print(f"alpha={row['alpha']:.6g}  rho={row['rho_limit']:.6g}  lambda1={row['lambda1_limit']:.6g}  "
              f"lambda2={row['lambda2_limit']:.6g}  {row['phase']}")
    return EXIT_OK


def _parse_t_grid(spec: str, kind: str):
    if spec == "default":
        if kind not in SWEEP_T_DEFAULTS:
            raise ConfigError("--sweep-t applies to pr_trimming and pr_subset models")
        lo, hi, steps = SWEEP_T_DEFAULTS[kind]
    else:
        try:
            lo, hi, steps = spec.split(":")
            lo, hi, steps = float(lo), float(hi), int(steps)
        except ValueError as exc:
            raise ConfigError(f"--sweep-t expects MIN:MAX:STEPS, got {spec!r}") from exc
    if not 0 < lo <= hi or steps < 1:
        raise ConfigError(f"bad t grid {spec!r}")
    return np.linspace(lo, hi, steps)


def alpha_c_vs_t(kind: str, kappa: float, ts) -> list:
    """alpha_c,min / alpha_c,max across thresholds; None where c <= d."""
    builder = {"pr_trimming": make_pr_trimming, "pr_subset": make_pr_subset}[kind]
    rule = default_rule()
    rows = []
    for t in ts:
        try:
            rep = critical_ratios(builder(kappa, float(t)), rule)
            rows.append({"t": float(t), "alpha_c_min": rep.alpha_c_min,
                         "alpha_c_max": rep.alpha_c_max, "zeros": len(rep.zeros)})
        except AssumptionError:
            rows.append({"t": float(t), "alpha_c_min": "", "alpha_c_max": "", "zeros": 0})
    return rows


def cmd_phase(args) -> int:
    cfg = load_config(args.config)
    model = model_from_config(cfg["model"])
    rep = critical_ratios(model, default_rule())
    wr = _Writer(args, cfg, "phase")
    payload = {"model": cfg["model"], "report": rep.to_dict()}
    print("zeros:   " + ", ".join(f"{z:.6g}" for z in rep.zeros))
    print("alpha_c: " + ", ".join(f"{a:.6g}" for a in rep.alpha_c))
    if args.sweep_t is not None:
        kind = cfg["model"].get("type")
        ts = _parse_t_grid(args.sweep_t, kind)
        if kind not in SWEEP_T_DEFAULTS:
            raise ConfigError("--sweep-t applies to pr_trimming and pr_subset models")
        rows = alpha_c_vs_t(kind, float(cfg["model"].get("kappa", 1.0)), ts)
        wr.write("_sweep_t.csv", _csv(rows, ("t", "alpha_c_min", "alpha_c_max", "zeros")))
        payload["sweep_t"] = rows
        for row in rows:
            print(f"t={row['t']:.4g}  alpha_c={row['alpha_c_min']}")
    wr.write(".json", json.dumps(payload, indent=2) + "\n")
    wr.close()
    return EXIT_OK


def _experiment(args, cfg) -> ExperimentConfig:
    exp = dict(cfg.get("experiment", {}))
    grid = _alpha_grid(args, exp)
    for key in ("alpha_min", "alpha_max", "alpha_steps"):
        exp.pop(key, None)
    exp["alpha_grid"] = grid
    for key in ("n", "trials", "seed", "threads"):
        val = getattr(args, key)
        if val is not None:
            exp[key] = val
    try:
        return ExperimentConfig.from_dict({"model": cfg["model"], **exp})
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    exp = _experiment(args, cfg)
    t0 = time.perf_counter()
    stats = sweep(exp)
    rep = compare(stats)
    echo = dict(cfg)
    echo["experiment"] = {k: v for k, v in exp.to_dict().items() if k != "model"}
    wr = _Writer(args, echo, "sweep", seed=exp.seed)
    wr.write(".csv", stats.to_csv())
    wr.write(".json", stats.to_json() + "\n")
    wr.write("_compare.json", json.dumps(rep.to_dict(), indent=2) + "\n")
    wr.close()
    print(stats.to_csv(), end="")
    rates = ", ".join(f"{k}={v:.2f}" for k, v in rep.pass_rates.items())
    print(f"pass rates: {rates}  ({time.perf_counter() - t0:.1f} s)")
    for flag in rep.flags:
        print(f"flag: {flag}")
    if args.strict and not rep.passed:
        return EXIT_ACCEPT
    return EXIT_OK


def oracle_instance(n: int, seed: int, corrupt_a: float = 0.0):
    """Random Gaussian data matrix and its arrowhead-vs-dense discrepancies."""
    rng = np.random.default_rng([n, seed])
    m = 4 * n
    A = rng.standard_normal((m, n))
    xi = rng.standard_normal(n)
    z = rng.random(m)
    D = (A.T * z) @ A / m
    view = arrowhead_view(D, xi)
    if corrupt_a:
        view = type(view)(view.a_scalar + corrupt_a, view.p_eigvals, view.q_coords)
    sol = arrowhead_solve(view)
    w, V = np.linalg.eigh(D)
    err_l = abs(sol.lambda1 - w[-1]) / abs(w[-1])
    err_c = abs(sol.cos_sq[0] - cosine_sq(xi, V[:, -1])) + (sol.cos_sq[1] - sol.cos_sq[0])
    return err_l, err_c, interlacing_ok(D)


def cmd_oracle_check(args) -> int:
    dims = [int(d) for d in args.dims.split(",")]
    worst, failures = 0.0, 0
    for n in dims:
        for seed in range(args.seeds):
            el, ec, il = oracle_instance(n, seed, args.corrupt_a)
            err = max(el, ec)
            worst = max(worst, err)
            if err > args.tol or not il:
                failures += 1
    # hand case [[0, 1], [1, 0]]: mu* = 1, lambda1 = 1, cos^2 = 1/2
    hand = arrowhead_solve(arrowhead_view(np.array([[0.0 + args.corrupt_a, 1.0], [1.0, 0.0]])))
    hand_ok = abs(hand.lambda1 - 1.0) < args.tol and abs(hand.cos_sq[0] - 0.5) < args.tol
    ok = failures == 0 and hand_ok
    print(f"dims={dims} seeds={args.seeds} worst={worst:.3e} failures={failures} "
          f"hand_case={'ok' if hand_ok else 'mismatch'} -> {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_ACCEPT


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    model = model_from_config(cfg["model"])
    rep = validate(model, default_rule())
    print(f"model: {model.name}")
    print(f"bounded (0 <= z <= tau): {'ok' if rep.bounded_ok else 'FAIL'}")
    print(f"positive correlation E[z s^2] - E[z] = {rep.margin:.6g}: {'ok' if rep.pos_corr_ok else 'FAIL'}")
    print(f"divergence at tau: {'increasing' if rep.divergence_ok else 'unclear'}")
    print(f"  {'lambda':>18} {'E z/(l-z)^2':>14} {'E z s^2/(l-z)':>14}")
    for lam, a, b in rep.divergence_trend:
        print(f"  {lam:18.12g} {a:14.6g} {b:14.6g}")
    if rep.notes:
        print(f"notes: {rep.notes}")
    if args.out is not None or "output" in cfg:
        wr = _Writer(args, cfg, "validate")
        wr.write(".json", json.dumps(rep.to_dict(), indent=2) + "\n")
        wr.close()
    return EXIT_OK if rep.pos_corr_ok else EXIT_ACCEPT


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="specinit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, grid=True):
        sp.add_argument("--config", help="JSON file with model / experiment / output sections")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        if grid:
            sp.add_argument("--alpha-min", type=float)
            sp.add_argument("--alpha-max", type=float)
            sp.add_argument("--alpha-steps", type=int)

    sp = sub.add_parser("predict", help="asymptotic predictions on an alpha grid")
    common(sp)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("phase", help="zero crossings and critical sampling ratios")
    common(sp, grid=False)
    sp.add_argument("--sweep-t", nargs="?", const="default", metavar="MIN:MAX:STEPS",
                    help="tabulate alpha_c against the threshold t")
    sp.set_defaults(func=cmd_phase)

    sp = sub.add_parser("sweep", help="Monte Carlo sweep compared with predictions")
    common(sp)
    sp.add_argument("--n", type=int)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--threads", type=int)
    sp.add_argument("--strict", action="store_true", help="exit 4 unless the comparison passes")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("oracle-check", help="arrowhead characterization vs dense eigensolver")
    sp.add_argument("--dims", default="20,50,100")
    sp.add_argument("--seeds", type=int, default=100)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--corrupt-a", type=float, default=0.0, help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_oracle_check)

    sp = sub.add_parser("validate", help="numerical checks of the model assumptions")
    common(sp, grid=False)
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AssumptionError, BracketError, ScanError, ConvergenceError, DomainError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

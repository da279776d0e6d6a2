"""Monte Carlo experiments: seeded trials, sweeps over alpha, and comparison
against the asymptotic predictions.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import blas

from .asymptotics import linear_rho_limit, predict
from .errors import ConfigError
from .model import Deterministic, ZSModel, model_from_config, sample_zy
from .quadrature import default_rule
from .spectral import cosine_sq, estimate_norm_phase, top_two_eigenpairs

CSV_FIELDS = (
    "alpha", "trials", "n", "rho_mean", "rho_std", "rho_pred", "rho_linear_mean",
    "rho_linear_pred", "lam1_mean", "lam1_std", "lam1_pred", "lam2_mean", "lam2_std",
    "lam2_pred", "gap_mean", "iters_mean", "defects",
)
ENSEMBLES = ("gaussian", "rademacher")
EIG_METHODS = ("lanczos", "power", "dense")


@dataclass(frozen=True)
class ExperimentConfig:
    model: dict
    n: int = 2048
    alpha_grid: tuple = (1.0,)
    trials: int = 16
    ensemble: str = "gaussian"
    seed: int = 0
    eig_tol: float = 1e-10
    eig_method: str = "lanczos"
    threads: int = 1
    chunk: int = 4096

    def __post_init__(self):
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise ConfigError(f"n must be an integer >= 2, got {self.n}")
        if not isinstance(self.trials, (int, np.integer)) or self.trials < 1:
            raise ConfigError(f"trials must be a positive integer, got {self.trials}")
        if not self.alpha_grid:
            raise ConfigError("alpha_grid is empty")
        for a in self.alpha_grid:
            if not a > 0 or round(a * self.n) < 1:
                raise ConfigError(f"alpha = {a} gives no measurements at n = {self.n}")
        if self.ensemble not in ENSEMBLES:
            raise ConfigError(f"ensemble must be one of {ENSEMBLES}, got {self.ensemble!r}")
        if self.eig_method not in EIG_METHODS:
            raise ConfigError(f"eig_method must be one of {EIG_METHODS}, got {self.eig_method!r}")
        if self.threads < 1 or self.chunk < 1:
            raise ConfigError("threads and chunk must be positive")
        model_from_config(self.model)

    def build_model(self) -> ZSModel:
        return model_from_config(self.model)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["alpha_grid"] = list(self.alpha_grid)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown experiment fields: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class TrialResult:
    alpha: float
    rho_spectral: float
    rho_linear: float
    lambda1: float
    lambda2: float
    eigengap: float
    iterations: int
    norm_estimate: Optional[float]
    seed: int
    trial_index: int
    degenerate: bool = False
    converged: bool = True


@dataclass(frozen=True)
class SweepStats:
    rows: tuple
    trials: tuple = field(repr=False, default=())

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in self.rows:
            w.writerow({k: _fmt(row[k]) for k in CSV_FIELDS})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"fields": list(CSV_FIELDS), "rows": [dict(r) for r in self.rows]},
                          indent=2, sort_keys=False)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _is_square_kernel(model: ZSModel) -> bool:
    return isinstance(model.kernel, Deterministic) and model.kernel.label == "square"


def trial_rng(seed: int, alpha_index: int, trial_index: int, stream: int = 0) -> np.random.Generator:
    """Counter-based stream keyed by (seed, alpha index, trial index).

    Stream 0 draws xi and the sensing rows, stream 1 the measurement noise,
    so the chunk size never changes a trial.
    """
    ss = np.random.SeedSequence([int(seed), int(alpha_index), int(trial_index), int(stream)])
    return np.random.Generator(np.random.Philox(ss))


def _draw_rows(rng, rows, n, ensemble):
    if ensemble == "gaussian":
        return rng.standard_normal((rows, n))
    return rng.integers(0, 2, size=(rows, n), dtype=np.int8).astype(float) * 2.0 - 1.0


def run_trial(config: ExperimentConfig, alpha: float, trial_index: int,
              alpha_index: Optional[int] = None, model: Optional[ZSModel] = None) -> TrialResult:
    """One draw of (xi, A, y, z), its data matrix and the derived statistics."""
    model = model if model is not None else config.build_model()
    if alpha_index is None:
        alpha_index = config.alpha_grid.index(float(alpha)) if float(alpha) in config.alpha_grid else 0
    rng = trial_rng(config.seed, alpha_index, trial_index)
    noise = trial_rng(config.seed, alpha_index, trial_index, stream=1)
    n = config.n
    m = int(round(alpha * n))
    kappa = model.kappa
    g = rng.standard_normal(n)
    xi = kappa * g / np.linalg.norm(g)

    D = np.zeros((n, n), order="F")
    lin = np.zeros(n)
    y_sum = 0.0
    z_any = False
    for start in range(0, m, config.chunk):
        rows = min(config.chunk, m - start)
        A = _draw_rows(rng, rows, n, config.ensemble)
        s = A @ xi / kappa
        y, z = sample_zy(model, s, noise)
        y_sum += float(np.sum(y))
        lin += z @ A
        keep = z != 0.0
        if keep.any():
            z_any = True
            B = A[keep] * np.sqrt(z[keep])[:, None]
            D = blas.dsyrk(1.0, B.T, beta=1.0, c=D, overwrite_c=1)
    norm_est = math.sqrt(y_sum / m) if _is_square_kernel(model) else None
    rho_lin = cosine_sq(lin, xi) if np.any(lin != 0.0) else 0.0
    if not z_any:
        return TrialResult(float(alpha), 0.0, rho_lin, 0.0, 0.0, 0.0, 0, norm_est,
                           int(config.seed), int(trial_index), degenerate=True)
    D = np.triu(D)
    D = (D + np.triu(D, 1).T) / m
    eig = top_two_eigenpairs(D, tol=config.eig_tol, method=config.eig_method, seed=int(config.seed))
    return TrialResult(
        alpha=float(alpha),
        rho_spectral=cosine_sq(eig.x1, xi),
        rho_linear=rho_lin,
        lambda1=eig.lambda1,
        lambda2=eig.lambda2,
        eigengap=eig.lambda1 - eig.lambda2,
        iterations=int(eig.iterations),
        norm_estimate=norm_est,
        seed=int(config.seed),
        trial_index=int(trial_index),
        converged=bool(eig.converged),
    )


def _predictions(model, alpha):
    rule = default_rule()
    p = predict(model, rule, alpha)
    return p.rho_limit, linear_rho_limit(model, rule, alpha), p.lambda1_limit, p.lambda2_limit


def aggregate(config: ExperimentConfig, results: Sequence[Sequence[TrialResult]], model=None) -> SweepStats:
    model = model if model is not None else config.build_model()
    rows = []
    for alpha, trs in zip(config.alpha_grid, results):
        rho = np.array([t.rho_spectral for t in trs])
        lin = np.array([t.rho_linear for t in trs])
        l1 = np.array([t.lambda1 for t in trs])
        l2 = np.array([t.lambda2 for t in trs])
        gap = np.array([t.eigengap for t in trs])
        it = np.array([t.iterations for t in trs], dtype=float)
        defects = sum(1 for t in trs if t.degenerate or not t.converged)
        rho_p, lin_p, l1_p, l2_p = _predictions(model, alpha)
        rows.append({
            "alpha": float(alpha), "trials": len(trs), "n": int(config.n),
            "rho_mean": float(rho.mean()), "rho_std": float(rho.std(ddof=1)) if rho.size > 1 else 0.0,
            "rho_pred": rho_p,
            "rho_linear_mean": float(lin.mean()), "rho_linear_pred": lin_p,
            "lam1_mean": float(l1.mean()), "lam1_std": float(l1.std(ddof=1)) if l1.size > 1 else 0.0,
            "lam1_pred": l1_p,
            "lam2_mean": float(l2.mean()), "lam2_std": float(l2.std(ddof=1)) if l2.size > 1 else 0.0,
            "lam2_pred": l2_p,
            "gap_mean": float(gap.mean()), "iters_mean": float(it.mean()), "defects": int(defects),
        })
    flat = tuple(t for trs in results for t in trs)
    return SweepStats(tuple(rows), flat)


def sweep(config: ExperimentConfig, progress: Optional[Callable[[TrialResult], None]] = None) -> SweepStats:
    """All trials over the alpha grid; trials may run concurrently."""
    model = config.build_model()
    jobs = [(ai, a, t) for ai, a in enumerate(config.alpha_grid) for t in range(config.trials)]
    slots: list = [[None] * config.trials for _ in config.alpha_grid]

    def work(job):
        ai, a, t = job
        res = run_trial(config, a, t, alpha_index=ai, model=model)
        slots[ai][t] = res
        if progress is not None:
            progress(res)

    if config.threads == 1:
        for job in jobs:
            work(job)
    else:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            list(pool.map(work, jobs))
    return aggregate(config, slots, model=model)


def sweep_linear_rho(stats: SweepStats) -> np.ndarray:
    """Per-trial linear-estimator cosines grouped by alpha (rows x trials)."""
    by_alpha: dict = {}
    for t in stats.trials:
        by_alpha.setdefault(t.alpha, []).append(t.rho_linear)
    return np.array([by_alpha[row["alpha"]] for row in stats.rows])


# ---------------------------------------------------------------------------
# comparison

_QUANTITIES = {
    "rho": ("rho_mean", "rho_std", "rho_pred"),
    "lam1": ("lam1_mean", "lam1_std", "lam1_pred"),
    "lam2": ("lam2_mean", "lam2_std", "lam2_pred"),
}


@dataclass(frozen=True)
class CompareReport:
    alphas: tuple
    z_scores: dict
    flags: tuple
    pass_rates: dict
    threshold: float
    min_pass_rate: float

    @property
    def passed(self) -> bool:
        return all(r >= self.min_pass_rate for r in self.pass_rates.values())

    def to_dict(self) -> dict:
        return {
            "alphas": list(self.alphas),
            "z_scores": {k: [None if not math.isfinite(v) else v for v in vs] for k, vs in self.z_scores.items()},
            "flags": list(self.flags),
            "pass_rates": dict(self.pass_rates),
            "passed": self.passed,
        }


def z_score(mean: float, std: float, pred: float, trials: int) -> float:
    dev = mean - pred
    if std == 0.0:
        return 0.0 if dev == 0.0 else math.copysign(math.inf, dev)
    return dev / (std / math.sqrt(trials))


def compare(stats: SweepStats, quantities: Sequence[str] = ("rho", "lam1", "lam2"),
            threshold: float = 3.0, min_pass_rate: float = 0.9) -> CompareReport:
    """Standard-error z-scores of each mean against its prediction."""
    zs, flags, rates = {}, [], {}
    for q in quantities:
        mk, sk, pk = _QUANTITIES[q]
        col = []
        for row in stats.rows:
            z = z_score(row[mk], row[sk], row[pk], row["trials"])
            if math.isinf(z):
                flags.append(f"{q} at alpha={row['alpha']:g}: zero spread with nonzero deviation")
            col.append(z)
        zs[q] = col
        rates[q] = float(np.mean([abs(z) <= threshold for z in col])) if col else 0.0
    alphas = tuple(row["alpha"] for row in stats.rows)
    return CompareReport(alphas, zs, tuple(flags), rates, threshold, min_pass_rate)

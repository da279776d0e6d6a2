"""Acquisition models and the induced joint law of (z, s).

A model couples a conditional kernel y ~ f(. | x) evaluated at x = kappa * s
with a bounded preprocessing map z = T(y). Everything downstream only ever
needs the conditional expectation E[h(z) | s], so that is the primitive
exposed here (:func:`cond_expect`).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from .errors import ConfigError

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Deterministic:
    """y is a fixed function of x = kappa * s."""

    fn: ArrayFn
    label: str = ""


@dataclass(frozen=True, eq=False)
class FiniteDiscrete:
    """y takes one of finitely many values with x-dependent probabilities.

    ``probs(x)`` returns an array of shape ``(len(outcomes), x.size)``.
    """

    outcomes: tuple
    probs: Callable[[np.ndarray], np.ndarray]
    label: str = ""


@dataclass(frozen=True, eq=False)
class Sampled:
    """y is drawn by a user sampler ``sampler(x, rng)``.

    Conditional expectations average ``n_inner`` draws per abscissa. If
    ``seed`` is set, expectations are reproducible without an explicit rng.
    """

    sampler: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    n_inner: int = 10_000
    seed: Optional[int] = None
    label: str = ""


ConditionalKernel = Union[Deterministic, FiniteDiscrete, Sampled]


@dataclass(frozen=True, eq=False)
class Preprocessor:
    map: ArrayFn
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")


def _identity(y):
    return np.asarray(y, dtype=float)


@dataclass(frozen=True, eq=False)
class ZSModel:
    """Joint law of (s, y, z) with s ~ N(0, 1).

    ``breaks`` lists |s| locations where z(s) jumps (deterministic kernels);
    quadrature splits its panels there. ``pieces`` optionally declares z as
    piecewise constant in |s|: a tuple of ``(lo, hi, z_value)`` covering
    [0, inf). Both are optional hints; models without them fall back to
    Gauss-Hermite integration.
    """

    kernel: ConditionalKernel
    preprocessor: Preprocessor
    kappa: float
    name: str = "custom"
    breaks: tuple = ()
    pieces: Optional[tuple] = None
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.kappa > 0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")

    @property
    def tau(self) -> float:
        return float(self.preprocessor.tau)


@dataclass(frozen=True)
class AssumptionReport:
    bounded_ok: bool
    pos_corr_ok: bool
    margin: float
    divergence_ok: bool
    divergence_trend: tuple
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "bounded_ok": self.bounded_ok,
            "pos_corr_ok": self.pos_corr_ok,
            "margin": self.margin,
            "divergence_ok": self.divergence_ok,
            "divergence_trend": [list(row) for row in self.divergence_trend],
            "notes": self.notes,
        }


# ---------------------------------------------------------------------------
# built-in models


def make_logistic(kappa: float, beta: float) -> ZSModel:
    """Binary logistic model with z = y in {0, 1}.

    P(y = 1 | s) = 1 / (1 + exp(-(kappa * s - beta))), so ``beta`` acts as an
    activation threshold. A large positive beta makes y = 1 a rare event at
    large s, so z is positively correlated with s^2.
    """
    if not kappa > 0:
        raise ConfigError(f"kappa must be positive, got {kappa}")
    beta = float(beta)

    def probs(x):
        p1 = expit(np.asarray(x, dtype=float) - beta)
        return np.stack([1.0 - p1, p1])

    kernel = FiniteDiscrete(outcomes=(0.0, 1.0), probs=probs, label="logistic")
    return ZSModel(
        kernel,
        Preprocessor(_identity, 1.0),
        float(kappa),
        name=f"logistic(kappa={kappa:g}, beta={beta:g})",
        spec={"type": "logistic", "kappa": float(kappa), "beta": beta},
    )


def _square(x):
    x = np.asarray(x, dtype=float)
    return x * x


def make_pr_trimming(kappa: float, t: float) -> ZSModel:
    """Noiseless phase retrieval y = (kappa s)^2 with z = y * 1[0 <= y <= t]."""
    if not t > 0:
        raise ConfigError(f"trimming threshold t must be positive, got {t}")
    if not kappa > 0:
        raise ConfigError(f"kappa must be positive, got {kappa}")
    t = float(t)

    def trim(y):
        y = np.asarray(y, dtype=float)
        return np.where((y >= 0.0) & (y <= t), y, 0.0)

    edge = np.sqrt(t) / kappa
    return ZSModel(
        Deterministic(_square, label="square"),
        Preprocessor(trim, t),
        float(kappa),
        name=f"pr_trimming(kappa={kappa:g}, t={t:g})",
        breaks=(edge,),
        spec={"type": "pr_trimming", "kappa": float(kappa), "t": t},
    )


def make_pr_subset(kappa: float, t: float) -> ZSModel:
    """Noiseless phase retrieval with the subset rule z = 1[y > t]."""
    if not t > 0:
        raise ConfigError(f"subset threshold t must be positive, got {t}")
    if not kappa > 0:
        raise ConfigError(f"kappa must be positive, got {kappa}")
    t = float(t)

    def indicator(y):
        return (np.asarray(y, dtype=float) > t).astype(float)

    edge = np.sqrt(t) / kappa
    return ZSModel(
        Deterministic(_square, label="square"),
        Preprocessor(indicator, 1.0),
        float(kappa),
        name=f"pr_subset(kappa={kappa:g}, t={t:g})",
        breaks=(edge,),
        pieces=((0.0, edge, 0.0), (edge, np.inf, 1.0)),
        spec={"type": "pr_subset", "kappa": float(kappa), "t": t},
    )


def make_quantizer(theta: float, i1: Sequence[float], i2: Sequence[float]) -> ZSModel:
    """Three-level quantizer: z = 1 on |s| in i1, theta on |s| in i2, else 0.

    The signal norm is fixed to 1, so s and x coincide.
    """
    if not 0.0 < theta < 1.0:
        raise ConfigError(f"theta must lie in (0, 1), got {theta}")
    (a1, b1), (a2, b2) = (tuple(map(float, i1)), tuple(map(float, i2)))
    for lo, hi in ((a1, b1), (a2, b2)):
        if not 0.0 <= lo < hi < np.inf:
            raise ConfigError(f"interval [{lo}, {hi}] must be finite, ordered and nonnegative")
    if a1 < b2 and a2 < b1:
        raise ConfigError("quantizer intervals overlap")
    theta = float(theta)

    def level(x):
        ax = np.abs(np.asarray(x, dtype=float))
        out = np.zeros_like(ax)
        out[(ax >= a1) & (ax <= b1)] = 1.0
        out[(ax >= a2) & (ax <= b2)] = theta
        return out

    cuts = sorted([(a1, b1, 1.0), (a2, b2, theta)])
    pieces, edge = [], 0.0
    for lo, hi, val in cuts:
        if lo > edge:
            pieces.append((edge, lo, 0.0))
        pieces.append((lo, hi, val))
        edge = hi
    pieces.append((edge, np.inf, 0.0))
    return ZSModel(
        Deterministic(level, label="quantizer"),
        Preprocessor(_identity, 1.0),
        1.0,
        name=f"quantizer(theta={theta:g})",
        breaks=tuple(sorted({a1, b1, a2, b2})),
        pieces=tuple(pieces),
        spec={"type": "quantizer", "theta": theta, "i1": [a1, b1], "i2": [a2, b2]},
    )


def make_one_bit(c: float, d: float) -> ZSModel:
    """A binary model with prescribed c = E[z s^2] and d = E[z].

    z = 1 on |s| in [lo, hi], with the interval chosen so that both moments
    match; any pair with 0 < d < 1 and d < c below the tail bound works.
    """
    from scipy.optimize import brentq
    from scipy.special import ndtr, ndtri
    from scipy.stats import norm

    c, d = float(c), float(d)
    if not 0.0 < d < 1.0:
        raise ConfigError(f"d must lie in (0, 1), got {d}")

    def upper(lo):
        # hi with P(|s| in [lo, hi]) = d; inf when the tail beyond lo is just enough
        q = 2.0 * ndtr(-lo) - d
        return np.inf if q <= 0.0 else -ndtri(0.5 * q)

    def second(lo):
        hi = upper(lo)
        hi_term = 0.0 if np.isinf(hi) else hi * norm.pdf(hi)
        return 2.0 * (lo * norm.pdf(lo) - hi_term) + d

    lo_max = -ndtri(0.5 * d)
    c_min, c_max = second(0.0), second(lo_max)
    if not c_min < c < c_max:
        raise ConfigError(f"no interval model has d = {d} and c = {c}; c must lie in ({c_min:.6g}, {c_max:.6g})")
    lo = brentq(lambda x: second(x) - c, 0.0, lo_max, xtol=1e-15, rtol=1e-15)
    hi = upper(lo)
    pieces = ((0.0, lo, 0.0), (lo, hi, 1.0)) + (() if np.isinf(hi) else ((hi, np.inf, 0.0),))
    breaks = (lo,) if np.isinf(hi) else (lo, hi)

    def level(x):
        ax = np.abs(np.asarray(x, dtype=float))
        return ((ax >= lo) & (ax <= hi)).astype(float)

    return ZSModel(
        Deterministic(level, label="interval"),
        Preprocessor(_identity, 1.0),
        1.0,
        name=f"one_bit(c={c:g}, d={d:g})",
        breaks=breaks,
        pieces=pieces,
        spec={"type": "one_bit", "c": c, "d": d},
    )


_BUILDERS = {
    "logistic": (make_logistic, ("kappa", "beta"), {"kappa": 1.0}),
    "pr_trimming": (make_pr_trimming, ("kappa", "t"), {"kappa": 1.0}),
    "pr_subset": (make_pr_subset, ("kappa", "t"), {"kappa": 1.0}),
    "quantizer": (make_quantizer, ("theta", "i1", "i2"), {}),
    "one_bit": (make_one_bit, ("c", "d"), {}),
}


def model_from_config(cfg: dict) -> ZSModel:
    """Build a built-in model from a plain dict such as ``{"type": "pr_subset", "t": 1.5}``."""
    if not isinstance(cfg, dict):
        raise ConfigError("model config must be a mapping")
    kind = cfg.get("type")
    if kind not in _BUILDERS:
        raise ConfigError(f"unknown model type {kind!r}; expected one of {sorted(_BUILDERS)}")
    builder, argnames, defaults = _BUILDERS[kind]
    extra = set(cfg) - set(argnames) - {"type"}
    if extra:
        raise ConfigError(f"unexpected fields for {kind}: {sorted(extra)}")
    args = []
    for name in argnames:
        if name in cfg:
            args.append(cfg[name])
        elif name in defaults:
            args.append(defaults[name])
        else:
            raise ConfigError(f"model type {kind} requires field {name!r}")
    try:
        return builder(*args)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# conditional expectations and sampling


def _rng_for(kernel: Sampled, rng):
    if rng is not None:
        return rng
    if kernel.seed is not None:
        return np.random.default_rng(kernel.seed)
    raise ValueError("sampled kernel needs a randomness source (pass rng or set seed)")


def cond_expect_joint(model: ZSModel, g: Callable, s, rng: Optional[np.random.Generator] = None):
    """E[g(z, s) | s], vectorized over ``s``; ``g`` must broadcast."""
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    x = model.kappa * s_arr
    T = model.preprocessor.map
    kernel = model.kernel
    if isinstance(kernel, Deterministic):
        out = np.asarray(g(T(kernel.fn(x)), s_arr), dtype=float)
    elif isinstance(kernel, FiniteDiscrete):
        P = np.asarray(kernel.probs(x), dtype=float)
        zk = np.asarray(T(np.asarray(kernel.outcomes, dtype=float)), dtype=float)
        gk = np.broadcast_to(np.asarray(g(zk[:, None], s_arr[None, :]), dtype=float), P.shape)
        out = np.sum(gk * P, axis=0)
    elif isinstance(kernel, Sampled):
        gen = _rng_for(kernel, rng)
        k = kernel.n_inner
        y = kernel.sampler(np.repeat(x, k), gen)
        vals = np.asarray(g(T(y), np.repeat(s_arr, k)), dtype=float)
        out = np.broadcast_to(vals, (s_arr.size * k,)).reshape(s_arr.size, k).mean(axis=1)
    else:
        raise TypeError(f"unsupported kernel {type(kernel).__name__}")
    out = np.broadcast_to(out, s_arr.shape).astype(float)
    return out if np.ndim(s) else float(out[0])


def cond_expect(model: ZSModel, h: ArrayFn, s, rng: Optional[np.random.Generator] = None):
    """E[h(z) | s], vectorized over ``s``."""
    return cond_expect_joint(model, lambda z, _s: h(z), s, rng=rng)


def sample_zy(model: ZSModel, s, rng: np.random.Generator):
    """Draw (y, z) given s. Deterministic kernels ignore ``rng``."""
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    x = model.kappa * s_arr
    kernel = model.kernel
    if isinstance(kernel, Deterministic):
        y = np.asarray(kernel.fn(x), dtype=float)
    elif isinstance(kernel, FiniteDiscrete):
        P = np.asarray(kernel.probs(x), dtype=float)
        cdf = np.cumsum(P, axis=0)
        u = rng.random(s_arr.size)
        idx = np.minimum((u[None, :] >= cdf).sum(axis=0), len(kernel.outcomes) - 1)
        y = np.asarray(kernel.outcomes, dtype=float)[idx]
    elif isinstance(kernel, Sampled):
        y = np.asarray(kernel.sampler(x, rng), dtype=float)
    else:
        raise TypeError(f"unsupported kernel {type(kernel).__name__}")
    y = np.broadcast_to(y, s_arr.shape).astype(float)
    z = np.asarray(model.preprocessor.map(y), dtype=float)
    if np.ndim(s):
        return y, z
    return float(y[0]), float(z[0])


# ---------------------------------------------------------------------------
# assumption checks


def validate(model: ZSModel, rule=None, n_samples: int = 20_000, seed: int = 0) -> AssumptionReport:
    """Numerical evidence for boundedness, positive correlation and divergence at tau.

    Nothing here is a proof: the divergence condition is a limit statement,
    so the report only tabulates the two expectations at
    lambda = tau (1 + 10^-k), k = 2..8, and flags whether both keep growing
    without their increments dying out.
    """
    from .quadrature import base_moments, default_rule, lambda_moments

    rule = rule if rule is not None else default_rule()
    notes = []
    gen = np.random.default_rng(seed)
    s = gen.standard_normal(n_samples)
    _, z = sample_zy(model, s, gen)
    tau = model.tau
    bounded = bool(np.all(z >= 0.0) and np.all(z <= tau * (1 + 1e-12)))
    if not bounded:
        notes.append(f"sampled z outside [0, {tau:g}]: min={z.min():.4g}, max={z.max():.4g}")

    mom = base_moments(model, rule)
    margin = mom.c - mom.d
    # cancellation noise of the two quadratures is not evidence either way
    if abs(margin) <= 1e-12 * max(abs(mom.c), abs(mom.d), 1e-300):
        margin = 0.0
    pos_corr = margin > 0.0
    if not pos_corr:
        notes.append(
            f"E[z s^2] - E[z] = {margin:.6g} <= 0: z is not positively correlated with s^2"
        )

    trend = []
    for k in range(2, 9):
        lam = tau * (1.0 + 10.0 ** (-k))
        lm = lambda_moments(model, rule, lam)
        trend.append((lam, lm.m3, lm.m2))
    arr = np.array(trend)
    diverging = True
    for col in (1, 2):
        inc = np.diff(arr[:, col])
        if not (np.all(inc > 0) and inc[-1] >= 0.5 * inc[0]):
            diverging = False
    if not diverging:
        notes.append("no clear divergence of E[z/(lam-z)^2], E[z s^2/(lam-z)] as lam -> tau+")
    return AssumptionReport(
        bounded_ok=bounded,
        pos_corr_ok=pos_corr,
        margin=float(margin),
        divergence_ok=diverging,
        divergence_trend=tuple(tuple(map(float, row)) for row in trend),
        notes="; ".join(notes),
    )


def spec_of(model: ZSModel) -> dict[str, Any]:
    return dict(model.spec)

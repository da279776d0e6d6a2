"""Expectations over s ~ N(0, 1) composed with a model's conditional kernel.

Every lambda-dependent expectation in the package has the form
E[g(z)] or E[g(z) s^2]. The law of (z, s) is therefore reduced once per
(model, rule) pair to a finite set of z-atoms carrying probability mass
``w`` and second-moment mass ``ws2`` (see :class:`ZSMeasure`); the moments
at any lambda are then short weighted sums evaluated by the compiled kernel.

Three reductions are used:

* piecewise-constant z in |s|: exact Gaussian CDF arithmetic per piece;
* deterministic z with jump locations: Gauss-Legendre panels graded
  geometrically toward every jump, weighted by the normal density;
* everything else: probabilists' Gauss-Hermite.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import ndtr
from scipy.stats import norm

from . import _backend
from .errors import ConfigError, DomainError
from .model import Deterministic, FiniteDiscrete, Sampled, ZSModel, cond_expect_joint

DEFAULT_ORDER = 201
MAX_ORDER = 1000
LAMBDA_GUARD = 1e-12
PANEL_SPAN = 14.0
PANEL_LEVELS = 48


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Probabilists' rule: sum(weights * f(nodes)) approximates E f(s), s ~ N(0, 1)."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int


@dataclass(frozen=True)
class BaseMoments:
    c: float
    d: float
    e_zs: float
    e_z2: float
    tau: float


@dataclass(frozen=True)
class LambdaMoments:
    lam: float
    m1: float
    m2: float
    m3: float
    m4: float
    m5: float
    m6: float

    @property
    def as_array(self) -> np.ndarray:
        return np.array([self.m1, self.m2, self.m3, self.m4, self.m5, self.m6])


@dataclass(frozen=True, eq=False)
class ZSMeasure:
    """Discrete law of z with s-moment masses attached to each atom.

    For atom k: ``w[k] = P(z = z[k])``, ``ws[k] = E[s 1{z = z[k]}]``,
    ``ws2[k] = E[s^2 1{z = z[k]}]``.
    """

    z: np.ndarray
    w: np.ndarray
    ws: np.ndarray
    ws2: np.ndarray
    tau: float


# ---------------------------------------------------------------------------
# rules


def _orthonormal_scaled(x: np.ndarray, n: int):
    """Orthonormal probabilists' Hermite recurrence up to degree n.

    Returns (p_n, p_{n-1}, log of sum_{k<n} p_k^2) with p_n, p_{n-1} sharing
    an arbitrary positive per-node scale, so only their ratio is meaningful.
    """
    p_prev = np.zeros_like(x)
    p = np.ones_like(x)
    log_scale = np.zeros_like(x)
    acc = np.zeros_like(x)  # sum p_k^2 in units of exp(2 log_scale)
    for k in range(n):
        acc += p * p
        p_next = (x * p - np.sqrt(k) * p_prev) / np.sqrt(k + 1.0)
        p_prev, p = p, p_next
        big = np.abs(p) > 1e100
        if big.any():
            f = np.where(big, 1e-100, 1.0)
            p *= f
            p_prev *= f
            acc *= f * f
            log_scale -= np.log(f)
    return p, p_prev, np.log(acc) + 2.0 * log_scale


@lru_cache(maxsize=32)
def gauss_hermite(order: int = DEFAULT_ORDER) -> QuadratureRule:
    """Probabilists' Gauss-Hermite rule of the given order.

    Nodes come from the symmetric Jacobi matrix (off-diagonal sqrt(k)) and are
    polished by Newton steps on the orthonormal recurrence; weights are the
    Christoffel numbers 1 / sum_k p_k(x)^2. Weights that fall below the
    smallest double flush to zero, which happens only for the outermost
    nodes at orders above roughly 350.
    """
    order = int(order)
    if not 1 <= order <= MAX_ORDER:
        raise ConfigError(f"quadrature order must lie in [1, {MAX_ORDER}], got {order}")
    if order == 1:
        return QuadratureRule(np.zeros(1), np.ones(1), 1)
    off = np.sqrt(np.arange(1, order, dtype=float))
    x = eigh_tridiagonal(np.zeros(order), off, eigvals_only=True)
    for _ in range(3):
        pn, pn1, _ = _orthonormal_scaled(x, order)
        x = x - pn / (np.sqrt(order) * pn1)
    x = 0.5 * (x - x[::-1])
    _, _, log_sum = _orthonormal_scaled(x, order)
    w = np.exp(-log_sum)
    w = 0.5 * (w + w[::-1])
    w /= w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(x, w, order)


def default_rule() -> QuadratureRule:
    return gauss_hermite(DEFAULT_ORDER)


@lru_cache(maxsize=64)
def _panel_nodes(breaks: tuple, q: int):
    """Gauss-Legendre panels on [-14, 14] graded toward each +-break."""
    cuts = set(np.arange(-PANEL_SPAN, PANEL_SPAN + 1.0).tolist())
    steps = 0.5 ** np.arange(1, PANEL_LEVELS + 1)
    for b in breaks:
        for c in (b, -b):
            if abs(c) >= PANEL_SPAN:
                continue
            cuts.add(c)
            cuts.update((c + steps).tolist())
            cuts.update((c - steps).tolist())
    edges = np.unique(np.clip(np.array(sorted(cuts)), -PANEL_SPAN, PANEL_SPAN))
    t, u = np.polynomial.legendre.leggauss(q)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * u[None, :]).ravel() * norm.pdf(nodes)
    return nodes, weights


def s_nodes(model: ZSModel, rule: QuadratureRule):
    """Integration nodes and probability weights over s suited to ``model``."""
    if model.breaks:
        q = max(8, rule.order // 10)
        return _panel_nodes(tuple(float(b) for b in model.breaks), q)
    return rule.nodes, rule.weights


# ---------------------------------------------------------------------------
# measures


def _piece_masses(lo: float, hi: float):
    """Mass and second-moment mass of |s| in [lo, hi] (both signs)."""
    # tail-stable: Phi(hi) - Phi(lo) = Phi(-lo) - Phi(-hi)
    p = ndtr(-lo) - ndtr(-hi) if lo > 0 else ndtr(hi) - ndtr(lo)
    hi_term = 0.0 if np.isinf(hi) else hi * norm.pdf(hi)
    mass = 2.0 * p
    mass2 = 2.0 * (lo * norm.pdf(lo) - hi_term + p)
    return mass, mass2


def _merge(z, w, ws, ws2, tau):
    z = np.asarray(z, dtype=float).ravel()
    keys, inv = np.unique(z, return_inverse=True)
    agg = [np.bincount(inv, weights=np.asarray(a, dtype=float).ravel(), minlength=keys.size)
           for a in (w, ws, ws2)]
    return ZSMeasure(keys, agg[0], agg[1], agg[2], float(tau))


_MEASURES: dict = {}


def measure(model: ZSModel, rule: QuadratureRule | None = None) -> ZSMeasure:
    """Reduce the law of (z, s) under ``model`` to weighted z-atoms (cached)."""
    rule = rule if rule is not None else default_rule()
    key = (id(model), id(rule))
    hit = _MEASURES.get(key)
    if hit is not None and hit[0] is model and hit[1] is rule:
        return hit[2]
    mu = _build_measure(model, rule)
    if len(_MEASURES) > 256:
        _MEASURES.clear()
    _MEASURES[key] = (model, rule, mu)
    return mu


def _build_measure(model: ZSModel, rule: QuadratureRule) -> ZSMeasure:
    tau = model.tau
    if model.pieces is not None and isinstance(model.kernel, Deterministic):
        rows = []
        for lo, hi, zval in model.pieces:
            mass, mass2 = _piece_masses(float(lo), float(hi))
            rows.append((float(zval), mass, 0.0, mass2))
        z, w, ws, ws2 = np.array(rows).T
        return _merge(z, w, ws, ws2, tau)

    s, ws_ = s_nodes(model, rule)
    kernel = model.kernel
    T = model.preprocessor.map
    x = model.kappa * s
    if isinstance(kernel, Deterministic):
        z = np.asarray(T(kernel.fn(x)), dtype=float)
        return _merge(z, ws_, ws_ * s, ws_ * s * s, tau)
    if isinstance(kernel, FiniteDiscrete):
        P = np.asarray(kernel.probs(x), dtype=float)
        zk = np.asarray(T(np.asarray(kernel.outcomes, dtype=float)), dtype=float)
        Z = np.broadcast_to(zk[:, None], P.shape)
        W = P * ws_[None, :]
        return _merge(Z, W, W * s[None, :], W * (s * s)[None, :], tau)
    if isinstance(kernel, Sampled):
        if kernel.seed is None:
            raise ValueError("sampled kernel needs a seed to build a deterministic measure")
        gen = np.random.default_rng(kernel.seed)
        k = kernel.n_inner
        y = kernel.sampler(np.repeat(x, k), gen)
        z = np.asarray(T(y), dtype=float)
        W = np.repeat(ws_ / k, k)
        S = np.repeat(s, k)
        return _merge(z, W, W * S, W * S * S, tau)
    raise TypeError(f"unsupported kernel {type(kernel).__name__}")


# ---------------------------------------------------------------------------
# expectations


def expect(model: ZSModel, rule: QuadratureRule, g: Callable) -> float:
    """E g(z, s) as sum_i w_i E[g(z, s_i) | s = s_i]."""
    s, w = s_nodes(model, rule)
    kernel = model.kernel
    rng = np.random.default_rng(kernel.seed) if isinstance(kernel, Sampled) and kernel.seed is not None else None
    vals = cond_expect_joint(model, g, s, rng=rng)
    return float(np.dot(w, vals))


def base_moments(model: ZSModel, rule: QuadratureRule | None = None) -> BaseMoments:
    mu = measure(model, rule)
    return BaseMoments(
        c=float(np.dot(mu.ws2, mu.z)),
        d=float(np.dot(mu.w, mu.z)),
        e_zs=float(np.dot(mu.ws, mu.z)),
        e_z2=float(np.dot(mu.w, mu.z * mu.z)),
        tau=mu.tau,
    )


def _check_lambda(lams, tau):
    lams = np.asarray(lams, dtype=float)
    if np.any(~(lams > tau * (1.0 + LAMBDA_GUARD))):
        raise DomainError(f"lambda must exceed tau*(1+{LAMBDA_GUARD:g}) = {tau * (1 + LAMBDA_GUARD)!r}")
    return lams


def lambda_moments_grid(model: ZSModel, rule: QuadratureRule | None, lams) -> np.ndarray:
    """Array of shape (len(lams), 6) with columns m1..m6."""
    mu = measure(model, rule)
    lams = np.atleast_1d(_check_lambda(lams, mu.tau))
    return _backend.kernels.atom_moments(mu.z, mu.w, mu.ws2, np.ascontiguousarray(lams))


def lambda_moments(model: ZSModel, rule: QuadratureRule | None, lam: float) -> LambdaMoments:
    """m1 = E z/(l-z), m2 = E zs^2/(l-z), m3 = E z/(l-z)^2,
    m4 = E z^2/(l-z)^2, m5 = E z^2 s^2/(l-z)^2, m6 = E z^2 s^2/(l-z)."""
    row = lambda_moments_grid(model, rule, [lam])[0]
    return LambdaMoments(float(lam), *map(float, row))


def tail_mass(lo: float, hi: float) -> float:
    """P(|s| in [lo, hi]) computed without cancellation in the far tail."""
    return float(_piece_masses(float(lo), float(hi))[0])

"""High-dimensional limits of the spectral estimator.

Notation: with m1..m6 the lambda-moments of :mod:`specinit.quadrature`,

    psi(l)     = l * m2(l)
    phi_a(l)   = l * (1/a + m1(l))
    lbar_a     = root of m4(l) = 1/a        (minimizer of phi_a)
    zeta_a(l)  = phi_a(max(l, lbar_a))

The fixed point zeta_a(l*) = psi(l*) determines the limiting squared cosine
similarity and the two top eigenvalues.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import AssumptionError, BracketError, ConfigError, DomainError, ScanError
from .model import ZSModel
from .quadrature import (
    LAMBDA_GUARD,
    QuadratureRule,
    base_moments,
    default_rule,
    lambda_moments,
    lambda_moments_grid,
)

CRITICAL_TOL = 1e-9  # on phi'(lambda*) relative to 1/alpha
SCAN_POINTS = 100_000


class Phase(str, Enum):
    UNCORRELATED = "uncorrelated"
    CORRELATED = "correlated"
    CRITICAL = "critical"


@dataclass(frozen=True)
class AsymptoticPrediction:
    alpha: float
    lambda_star: float
    rho_limit: float
    lambda1_limit: float
    lambda2_limit: float
    phase: Phase
    phi_prime_at_star: float

    def to_dict(self) -> dict:
        out = asdict(self)
        out["phase"] = self.phase.value
        return out


@dataclass(frozen=True)
class PhaseReport:
    zeros: tuple
    alpha_c: tuple
    alpha_c_min: float
    alpha_c_max: float
    search_bound: float

    def to_dict(self) -> dict:
        return {
            "zeros": list(self.zeros),
            "alpha_c": list(self.alpha_c),
            "alpha_c_min": self.alpha_c_min,
            "alpha_c_max": self.alpha_c_max,
            "search_bound": self.search_bound,
        }


@dataclass(frozen=True)
class ParametricPoint:
    lam: float
    alpha: float
    rho: float


def _rule(rule):
    return rule if rule is not None else default_rule()


def _lower(tau: float) -> float:
    return tau * (1.0 + LAMBDA_GUARD) * (1.0 + 4e-16)


def _bisect_offset(f, tau: float, lo: float, hi: float, max_iter: int = 400) -> float:
    """Root of increasing f on (lo, hi) with f(lo) < 0 < f(hi).

    Midpoints are geometric in the offset l - tau while the bracket spans
    decades, so roots hugging tau are located in a few dozen steps.
    """
    for _ in range(max_iter):
        ulo, uhi = lo - tau, hi - tau
        if ulo > 0 and uhi > 4.0 * ulo:
            mid = tau + math.sqrt(ulo * uhi)
        else:
            mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# function family


def psi(model: ZSModel, rule: QuadratureRule | None, lam: float) -> float:
    return lam * lambda_moments(model, rule, lam).m2


def phi(model: ZSModel, rule: QuadratureRule | None, alpha: float, lam: float) -> float:
    _check_alpha(alpha)
    return lam * (1.0 / alpha + lambda_moments(model, rule, lam).m1)


def _check_alpha(alpha):
    if not alpha > 0:
        raise ConfigError(f"alpha must be positive, got {alpha}")


def lambda_bar(model: ZSModel, rule: QuadratureRule | None, alpha: float) -> float:
    """Unique l > tau with E[z^2/(l - z)^2] = 1/alpha."""
    _check_alpha(alpha)
    tau = model.tau
    target = 1.0 / alpha

    def f(lam):  # increasing in lam
        return target - lambda_moments(model, rule, lam).m4

    lo = _lower(tau)
    if f(lo) >= 0.0:
        raise BracketError(
            "E[z^2/(lambda - z)^2] stays below 1/alpha next to tau; "
            "the model does not diverge at its support edge"
        )
    hi = 2.0 * tau
    while f(hi) < 0.0:
        hi = tau + 2.0 * (hi - tau)
        if hi > 1e300:
            raise BracketError("no upper bracket for lambda_bar")
    return _bisect_offset(f, tau, lo, hi)


def zeta(model: ZSModel, rule: QuadratureRule | None, alpha: float, lam: float,
         lbar: float | None = None) -> float:
    lbar = lambda_bar(model, rule, alpha) if lbar is None else lbar
    return phi(model, rule, alpha, max(lam, lbar))


def _require_pos_corr(model, rule):
    bm = base_moments(model, rule)
    if not bm.c - bm.d > 0.0:
        raise AssumptionError(f"E[z s^2] - E[z] = {bm.c - bm.d:.6g} must be positive")
    return bm


def solve_lambda_star(model: ZSModel, rule: QuadratureRule | None, alpha: float,
                      lbar: float | None = None) -> float:
    """Unique root of zeta_a - psi, which is strictly increasing on (tau, inf)."""
    _check_alpha(alpha)
    rule = _rule(rule)
    tau = model.tau
    lbar = lambda_bar(model, rule, alpha) if lbar is None else lbar

    def f(lam):
        lm = lambda_moments(model, rule, max(lam, lbar))
        zeta_val = max(lam, lbar) * (1.0 / alpha + lm.m1)
        m2 = lm.m2 if lam >= lbar else lambda_moments(model, rule, lam).m2
        return zeta_val - lam * m2

    eps = 1e-6
    while True:
        lo = max(tau * (1.0 + eps), _lower(tau))
        if f(lo) < 0.0:
            break
        if eps <= LAMBDA_GUARD * 1.0001:
            raise BracketError("psi never exceeds zeta near tau; check the positive-correlation assumption")
        eps = max(eps / 10.0, LAMBDA_GUARD)
    hi = max(lbar, lo)
    while f(hi) <= 0.0:
        hi = tau + 2.0 * (hi - tau)
        if hi > 1e300:
            raise BracketError("no upper bracket for lambda_star")
    return _bisect_offset(f, tau, lo, hi)


def predict(model: ZSModel, rule: QuadratureRule | None, alpha: float) -> AsymptoticPrediction:
    """Limiting rho, lambda1, lambda2 at sampling ratio ``alpha``."""
    rule = _rule(rule)
    _require_pos_corr(model, rule)
    lbar = lambda_bar(model, rule, alpha)
    lstar = solve_lambda_star(model, rule, alpha, lbar=lbar)
    at_star = lambda_moments(model, rule, lstar)
    dphi = 1.0 / alpha - at_star.m4
    dpsi = -at_star.m5
    lam2 = lbar * (1.0 / alpha + lambda_moments(model, rule, lbar).m1)
    if abs(dphi) < CRITICAL_TOL / alpha:
        phase, rho, lam1 = Phase.CRITICAL, 0.0, lam2
    elif dphi < 0.0:
        phase, rho, lam1 = Phase.UNCORRELATED, 0.0, lam2
    else:
        phase = Phase.CORRELATED
        rho = dphi / (dphi - dpsi)
        lam1 = lstar * (1.0 / alpha + at_star.m1)
    return AsymptoticPrediction(
        alpha=float(alpha),
        lambda_star=float(lstar),
        rho_limit=float(rho),
        lambda1_limit=float(lam1),
        lambda2_limit=float(lam2),
        phase=phase,
        phi_prime_at_star=float(dphi),
    )


# ---------------------------------------------------------------------------
# phase transitions


def delta(model: ZSModel, rule: QuadratureRule | None, lam: float) -> float:
    lm = lambda_moments(model, rule, lam)
    return lam * lm.m3 - lm.m2


def search_bound(model: ZSModel, rule: QuadratureRule | None = None) -> float:
    """Upper bound tau / (1 - sqrt(d/c)) on every zero of delta."""
    bm = _require_pos_corr(model, _rule(rule))
    return bm.tau / (1.0 - math.sqrt(bm.d / bm.c))


def zero_crossings(model: ZSModel, rule: QuadratureRule | None = None,
                   points: int = SCAN_POINTS) -> list:
    """Sign changes of delta on (tau, bound], refined by bisection.

    A root where delta touches zero without changing sign is invisible to
    the scan.
    """
    rule = _rule(rule)
    tau = model.tau
    bound = search_bound(model, rule)
    offsets = np.geomspace(tau * 1e-8, bound * 1.01 - tau, points)
    lams = tau + offsets
    grid = lambda_moments_grid(model, rule, lams)
    vals = lams * grid[:, 2] - grid[:, 1]
    sgn = np.sign(vals)
    idx = np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]
    zeros = []
    for i in idx:
        lo, hi = float(lams[i]), float(lams[i + 1])
        flip = 1.0 if vals[i] < 0 else -1.0
        root = _bisect_offset(lambda l: flip * delta(model, rule, l), tau, lo, hi)
        zeros.append(root)
    exact = np.nonzero(vals == 0.0)[0]
    zeros.extend(float(lams[i]) for i in exact)
    zeros = sorted(zeros)
    out = []
    for z in zeros:
        if not out or z - out[-1] > 1e-10:
            out.append(z)
    if not out:
        raise ScanError("delta shows no sign change on the search interval")
    return out


def critical_ratios(model: ZSModel, rule: QuadratureRule | None = None) -> PhaseReport:
    rule = _rule(rule)
    zeros = zero_crossings(model, rule)
    alphas = [1.0 / lambda_moments(model, rule, z).m4 for z in zeros]
    return PhaseReport(
        zeros=tuple(zeros),
        alpha_c=tuple(alphas),
        alpha_c_min=float(min(alphas)),
        alpha_c_max=float(max(alphas)),
        search_bound=search_bound(model, rule),
    )


def parametric_curve(model: ZSModel, rule: QuadratureRule | None, lambda_grid: Sequence[float],
                     lambda_c_max: float | None = None) -> list:
    """(alpha, rho) pairs traced by lambda > largest zero of delta."""
    rule = _rule(rule)
    if lambda_c_max is None:
        lambda_c_max = zero_crossings(model, rule)[-1]
    lams = np.asarray(lambda_grid, dtype=float)
    if np.any(lams <= lambda_c_max):
        raise DomainError(f"parametric grid must lie above lambda_c,max = {lambda_c_max}")
    grid = lambda_moments_grid(model, rule, lams)
    out = []
    for lam, (m1, m2, _m3, m4, m5, _m6) in zip(lams, grid):
        inv_alpha = m2 - m1
        dphi = inv_alpha - m4
        out.append(ParametricPoint(float(lam), float(1.0 / inv_alpha), float(1.0 / (1.0 + m5 / dphi))))
    return out


def parametric_rho(model: ZSModel, rule: QuadratureRule | None, alpha: float,
                   report: PhaseReport | None = None) -> float:
    """rho(alpha) read off the parametric curve (0 at or below alpha_c,max)."""
    _check_alpha(alpha)
    rule = _rule(rule)
    report = critical_ratios(model, rule) if report is None else report
    if alpha <= report.alpha_c_max:
        return 0.0
    lc = report.zeros[-1]
    target = 1.0 / alpha

    def f(lam):  # m2 - m1 decreases to 0 beyond the last zero of delta
        m = lambda_moments(model, rule, lam)
        return target - (m.m2 - m.m1)

    hi = 2.0 * lc
    while f(hi) < 0.0:
        hi *= 2.0
    lam = _bisect_offset(f, model.tau, lc, hi)
    return parametric_curve(model, rule, [lam], lambda_c_max=lc)[0].rho


# ---------------------------------------------------------------------------
# closed forms and side quantities


def one_bit_predict(c: float, d: float, alpha: float) -> AsymptoticPrediction:
    """Closed-form limits for z in {0, 1}, which depend only on c and d."""
    if not c > d > 0:
        raise AssumptionError(f"closed forms need c > d > 0, got c={c}, d={d}")
    _check_alpha(alpha)
    alpha_c = d / (c - d) ** 2
    lam2 = (math.sqrt(d) + 1.0 / math.sqrt(alpha)) ** 2
    if alpha > alpha_c:
        lstar = 1.0 + alpha * (c - d)
    else:
        lstar = lam2 / (lam2 - c)
    dphi = 1.0 / alpha - d / (lstar - 1.0) ** 2
    if abs(dphi) < CRITICAL_TOL / alpha:
        phase, rho, lam1 = Phase.CRITICAL, 0.0, lam2
    elif alpha > alpha_c:
        phase = Phase.CORRELATED
        rho = (alpha - alpha_c) / (alpha + 1.0 / (c - d))
        lam1 = c + c / (alpha * (c - d))
    else:
        phase, rho, lam1 = Phase.UNCORRELATED, 0.0, lam2
    return AsymptoticPrediction(float(alpha), float(lstar), float(rho), float(lam1), float(lam2),
                                phase, float(dphi))


def q_func(model: ZSModel, rule: QuadratureRule | None, lam: float) -> float:
    """Q(l) = E[z^2 s^2/(l - z)]."""
    return lambda_moments(model, rule, lam).m6


def q_inverse(model: ZSModel, rule: QuadratureRule | None, x: float) -> float:
    """Unique l > tau with Q(l) = x (Q decreases from its value at tau to 0)."""
    if not x > 0:
        raise DomainError(f"Q takes only positive values, got {x}")
    tau = model.tau

    def f(lam):
        return x - q_func(model, rule, lam)

    lo = _lower(tau)
    if f(lo) >= 0.0:
        raise BracketError(f"{x} exceeds the supremum of Q")
    hi = 2.0 * tau
    while f(hi) < 0.0:
        hi = tau + 2.0 * (hi - tau)
    return _bisect_offset(f, tau, lo, hi)


def linear_rho_limit(model: ZSModel, rule: QuadratureRule | None, alpha: float) -> float:
    """Limit of the squared cosine of the estimator (1/m) sum z_i a_i."""
    _check_alpha(alpha)
    bm = base_moments(model, rule)
    num = bm.e_zs ** 2
    den = num + bm.e_z2 / alpha
    return float(num / den) if den > 0 else 0.0

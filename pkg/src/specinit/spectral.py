"""Finite-n machinery: data matrices, top eigenpairs, the arrowhead
fixed-point characterization, spiked diagonal matrices and simple
estimators built from the same measurements.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg as sla
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from . import _backend
from .errors import DomainError

MAX_DIM = 8192
TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class SensingBatch:
    """Rows of ``a`` are sensing vectors; ``z`` the preprocessed measurements."""

    a: np.ndarray
    y: np.ndarray
    z: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        m, n = np.shape(self.a)
        if np.shape(self.y) != (m,) or np.shape(self.z) != (m,) or np.shape(self.xi) != (n,):
            raise ValueError(
                f"dimension mismatch: a {np.shape(self.a)}, y {np.shape(self.y)}, "
                f"z {np.shape(self.z)}, xi {np.shape(self.xi)}"
            )


@dataclass(frozen=True, eq=False)
class EigenResult:
    lambda1: float
    lambda2: float
    x1: np.ndarray
    x2: np.ndarray
    iterations: int
    residual: float
    converged: bool


@dataclass(frozen=True, eq=False)
class ArrowheadView:
    """D = [[a, q^T], [q, P]] with P = W diag(p) W^T and q_coords = W^T q."""

    a_scalar: float
    p_eigvals: np.ndarray
    q_coords: np.ndarray

    def __post_init__(self):
        if not np.any(np.asarray(self.q_coords) != 0.0):
            raise ValueError("arrowhead view needs a nonzero off-diagonal block q")


@dataclass(frozen=True)
class ArrowheadSolution:
    mu_star: float
    lambda1: float
    cos_sq: tuple
    case: int

    @property
    def cos_sq_point(self) -> float:
        lo, hi = self.cos_sq
        if hi - lo >= 1e-9:
            raise ValueError(f"cos^2 is only known to lie in [{lo}, {hi}]")
        return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# data matrix and eigenpairs


def build_data_matrix(batch: SensingBatch) -> np.ndarray:
    """D = (1/m) sum_i z_i a_i a_i^T."""
    a = np.asarray(batch.a, dtype=float)
    m, n = a.shape
    if m < 1 or n < 1:
        raise ValueError("need at least one measurement and one dimension")
    if n > MAX_DIM:
        raise ValueError(f"n = {n} exceeds the dense limit {MAX_DIM}")
    z = np.asarray(batch.z, dtype=float)
    D = (a.T * z) @ a / m
    return 0.5 * (D + D.T)


def cosine_sq(u, v) -> float:
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    nu, nv = np.dot(u, u), np.dot(v, v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(min(1.0, np.dot(u, v) ** 2 / (nu * nv)))


def _power(matvec, x0, tol, max_iter, scale_hint, rng, project=None):
    """Power iteration; returns (lam, x, iterations, residual, converged)."""
    x = x0 / np.linalg.norm(x0)
    lam, res = 0.0, np.inf
    restarted = False
    for it in range(1, max_iter + 1):
        y = matvec(x)
        if project is not None:
            y = project(y)
        lam = float(np.dot(x, y))
        res = float(np.linalg.norm(y - lam * x))
        ref = max(abs(lam), scale_hint)
        ny = float(np.linalg.norm(y))
        if ny <= 1e-300 or ny <= 1e-14 * scale_hint:
            # x sits in the (numerical) null space
            if restarted or ref == 0.0:
                return 0.0, x, it, 0.0, True
            restarted = True
            x = rng.standard_normal(x.size)
            if project is not None:
                x = project(x)
            x /= np.linalg.norm(x)
            continue
        if res <= tol * ref:
            return lam, x, it, res / ref, True
        x = y / ny
    return lam, x, max_iter, res / max(abs(lam), scale_hint, 1e-300), False


def _check_psd(l1, l2, tol):
    if l1 < 0.0 or l2 < -max(tol * abs(l1), 1e-12):
        raise ValueError(f"matrix is not positive semidefinite (eigenvalues {l1:.6g}, {l2:.6g})")


def top_two_eigenpairs(D, tol: float = 1e-10, method: str = "power", max_iter: int = 100_000,
                       seed: int = 0, matvec: Optional[Callable] = None) -> EigenResult:
    """Leading two eigenpairs of a symmetric PSD matrix.

    ``power``: power iteration from the normalized all-ones vector, then on
    the operator deflated by x1 (reorthogonalized every step); a seeded
    random start replaces a start vector annihilated by D. ``lanczos``:
    implicitly restarted Lanczos with the same start vector. ``dense``:
    LAPACK. ``iterations`` counts matrix-vector products.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if D.ndim != 2 or D.shape[1] != n or n < 2:
        raise ValueError("D must be a square matrix of size at least 2")
    if not np.allclose(D, D.T, rtol=0, atol=1e-12 * max(1.0, float(np.max(np.abs(D))))):
        raise ValueError("D must be symmetric")
    mv = matvec if matvec is not None else (lambda v: D @ v)
    rng = np.random.default_rng(seed)
    scale = float(np.max(np.abs(np.diag(D)))) if n else 0.0
    scale = max(scale, 1e-300)
    start = np.ones(n)

    if method == "power":
        l1, x1, it1, r1, ok1 = _power(mv, start, tol, max_iter, 1e-300, rng)

        def project(v):
            return v - x1 * np.dot(x1, v)

        deflated = (lambda v: project(mv(project(v))))
        x0 = project(start)
        if np.linalg.norm(x0) <= 1e-12:
            x0 = project(rng.standard_normal(n))
        l2, x2, it2, r2, ok2 = _power(deflated, x0, tol, max_iter, max(abs(l1), 1e-300), rng, project)
        if l2 > l1:
            l1, l2, x1, x2 = l2, l1, x2, x1
        _check_psd(l1, l2, tol)
        return EigenResult(l1, l2, x1, x2, it1 + it2, max(r1, r2), ok1 and ok2)

    if method == "lanczos" and n > 64:
        count = [0]

        def counted(v):
            count[0] += 1
            return mv(np.ravel(v))

        op = LinearOperator((n, n), matvec=counted, dtype=float)
        try:
            vals, vecs = eigsh(op, k=2, which="LA", v0=start, tol=tol, maxiter=max_iter)
            ok = True
        except ArpackNoConvergence as exc:
            vals, vecs, ok = exc.eigenvalues, exc.eigenvectors, False
            if vals.size < 2:
                raise
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]
        iters = count[0]
    elif method in ("dense", "lanczos"):
        vals, vecs = sla.eigh(D, subset_by_index=[n - 2, n - 1])
        vals, vecs = vals[::-1], vecs[:, ::-1]
        ok, iters = True, 0
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    l1, l2 = float(vals[0]), float(vals[1])
    x1 = vecs[:, 0] / np.linalg.norm(vecs[:, 0])
    x2 = vecs[:, 1] / np.linalg.norm(vecs[:, 1])
    _check_psd(l1, l2, tol)
    res = float(np.linalg.norm(mv(x1) - l1 * x1)) / max(abs(l1), 1e-300)
    return EigenResult(l1, l2, x1, x2, iters, res, ok)


# ---------------------------------------------------------------------------
# arrowhead fixed point


def householder_to_e1(u: np.ndarray) -> np.ndarray:
    """Reflector vector h with (I - 2 h h^T) u parallel to e1."""
    u = np.asarray(u, dtype=float) / np.linalg.norm(u)
    h = u.copy()
    h[0] += 1.0 if u[0] >= 0 else -1.0
    return h / np.linalg.norm(h)


def rotate_to_e1(D: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """H D H with H the reflector taking xi to a multiple of e1."""
    h = householder_to_e1(xi)
    Dh = D @ h
    hDh = float(h @ Dh)
    out = D - 2.0 * np.outer(h, Dh) - 2.0 * np.outer(Dh, h) + 4.0 * hDh * np.outer(h, h)
    return 0.5 * (out + out.T)


def arrowhead_view(D, xi=None) -> ArrowheadView:
    """Block view of D in a frame whose first axis is ``xi`` (default e1)."""
    D = np.asarray(D, dtype=float)
    if xi is not None:
        D = rotate_to_e1(D, xi)
    p, W = np.linalg.eigh(D[1:, 1:])
    return ArrowheadView(float(D[0, 0]), p, W.T @ D[1:, 0])


def _active(view: ArrowheadView):
    q2 = np.asarray(view.q_coords, dtype=float) ** 2
    p = np.asarray(view.p_eigvals, dtype=float)
    return p, q2


def _pole_max(p, q2):
    return float(np.max(p[q2 > 0.0]))


def arrowhead_R(view: ArrowheadView, lam: float) -> float:
    """R(lam) = sum q_i^2 / (p_i - lam), increasing on (max active pole, inf)."""
    p, q2 = _active(view)
    if not lam > _pole_max(p, q2):
        raise DomainError(f"lambda = {lam} is not above the largest active pole {_pole_max(p, q2)}")
    return _backend.kernels.secular_sum(p, q2, float(lam))[0]


def arrowhead_R_inverse(view: ArrowheadView, x: float) -> float:
    if not x < 0:
        raise DomainError(f"R takes only negative values, got {x}")
    p, q2 = _active(view)
    return float(_backend.kernels.secular_top(p, q2 / (-x)))


def arrowhead_L(view: ArrowheadView, mu: float) -> float:
    """Largest eigenvalue of P + mu q q^T, as max(R^-1(-1/mu), lambda1(P))."""
    if not mu > 0:
        raise DomainError(f"mu must be positive, got {mu}")
    p, _ = _active(view)
    return max(arrowhead_R_inverse(view, -1.0 / mu), float(np.max(p)))


def arrowhead_solve(view: ArrowheadView) -> ArrowheadSolution:
    """Top eigenvalue of the block matrix and the squared cosine with e1.

    mu* solves L(mu) = a + 1/mu. Where L is differentiable,
    cos^2 = L'/(L' + mu^-2) with L' = 1/(mu^2 R'(L)); at the single kink of
    L the value is only pinned to the interval spanned by the one-sided
    derivatives.
    """
    p, q2 = _active(view)
    if not np.any(q2 > 0):
        raise ValueError("arrowhead view needs a nonzero off-diagonal block q")
    a = float(view.a_scalar)
    mu, lam1 = _backend.kernels.arrowhead_fixed_point(a, p, q2)
    pmax = float(np.max(p))
    root = float(_backend.kernels.secular_top(p, mu * q2))

    act = q2 > 0.0
    pa, qa = np.ascontiguousarray(p[act]), np.ascontiguousarray(q2[act])

    def right_cos(lam):
        dR = _backend.kernels.secular_sum(pa, qa, lam)[1]
        dL = 1.0 / (mu * mu * dR)
        return dL / (dL + 1.0 / (mu * mu))

    # the kink of L exists only if the top eigenvector of P is orthogonal to q
    if _pole_max(p, q2) < pmax:
        gap = root - pmax
        if abs(gap) <= TIE_RTOL * max(abs(pmax), 1.0):
            return ArrowheadSolution(mu, lam1, (0.0, right_cos(root)), 3)
        if gap < 0:
            return ArrowheadSolution(mu, lam1, (0.0, 0.0), 2)
    c = right_cos(lam1)
    return ArrowheadSolution(mu, lam1, (c, c), 1)


def interlacing_ok(D, atol: float = 1e-12) -> bool:
    """lambda2(P) <= lambda2(D) <= lambda1(P) for P = D without row/column 0."""
    D = np.asarray(D, dtype=float)
    d = np.linalg.eigvalsh(D)
    p = np.linalg.eigvalsh(D[1:, 1:])
    tol = atol * max(1.0, abs(d[-1]))
    lp2 = p[-2] if p.size >= 2 else -np.inf
    return bool(lp2 - tol <= d[-2] <= p[-1] + tol)


# ---------------------------------------------------------------------------
# spiked diagonal matrices


def spiked_diag_top(z_diag, v, mu: float) -> float:
    """Leading eigenvalue of diag(z) + (mu/m) v v^T through its secular equation."""
    z = np.asarray(z_diag, dtype=float)
    v = np.asarray(v, dtype=float)
    if z.shape != v.shape:
        raise ValueError("z_diag and v must have the same length")
    if not np.any(v != 0.0):
        raise ValueError("v must be nonzero")
    if not mu > 0:
        raise ValueError("mu must be positive")
    m = z.size
    w = (mu / m) * v * v
    root = float(_backend.kernels.secular_top(z, w))
    return max(root, float(np.max(z)))


def spiked_diag_spectrum(z_diag, v, mu: float) -> np.ndarray:
    """All eigenvalues (descending) of diag(z) + (mu/m) v v^T.

    Equal diagonal entries are deflated first: a group of k equal entries
    keeps k - 1 copies of its value and contributes one pole to the secular
    equation (none if v vanishes on the group).
    """
    z = np.asarray(z_diag, dtype=float)
    v = np.asarray(v, dtype=float)
    if z.shape != v.shape or not np.any(v != 0.0):
        raise ValueError("v must be nonzero and match z_diag")
    m = z.size
    keys, inv, counts = np.unique(z, return_inverse=True, return_counts=True)
    w = np.bincount(inv, weights=(mu / m) * v * v, minlength=keys.size)
    act = w > 0.0
    kept = np.repeat(keys, np.where(act, counts - 1, counts))
    roots = _backend.kernels.secular_roots(np.ascontiguousarray(keys[act]), np.ascontiguousarray(w[act]))
    return np.sort(np.concatenate([kept, roots]))[::-1]


# ---------------------------------------------------------------------------
# estimators


def linear_estimate(batch: SensingBatch) -> np.ndarray:
    a = np.asarray(batch.a, dtype=float)
    if a.shape[0] < 1:
        raise ValueError("need at least one measurement")
    return np.asarray(batch.z, dtype=float) @ a / a.shape[0]


def estimate_norm_phase(y) -> float:
    """sqrt(mean(y)) for y_i = (a_i^T xi)^2."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("need at least one measurement")
    if np.any(y < 0):
        raise ValueError("phase-retrieval measurements must be nonnegative")
    return float(np.sqrt(np.mean(y)))


def estimate_norm_mom(y, w_inverse: Callable[[float], float], domain: Optional[tuple] = None) -> float:
    """Method of moments: w^-1(mean(y)) for the monotone map w(kappa) = E y."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("need at least one measurement")
    ybar = float(np.mean(y))
    if domain is not None and not domain[0] <= ybar <= domain[1]:
        raise DomainError(f"sample mean {ybar} lies outside the invertible range {domain}")
    return float(w_inverse(ybar))

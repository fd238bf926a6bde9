"""Numerical kernels shared by every engine.

Dense least squares with optional ridge, companion-matrix polynomial roots,
restarted MINRES for sparse symmetric (possibly indefinite) systems and the cardinal
cubic B-spline.
"""
import logging
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import minres

from .config import DEFAULTS
from .errors import InputError

logger = logging.getLogger("modelext.numerics")

_MAX_RESTARTS = 20


class LeastSquaresResult(NamedTuple):
    x: np.ndarray
    rank: int
    singular_values: np.ndarray

    @property
    def rank_deficient(self) -> bool:
        return self.rank < len(self.x)

    @property
    def condition(self) -> float:
        """2-norm condition number of the matrix, ``inf`` if singular."""
        sv = self.singular_values
        if sv.size == 0 or sv[-1] == 0.0:
            return float("inf")
        return float(sv[0] / sv[-1])


class SolveResult(NamedTuple):
    x: np.ndarray
    residual: float  # ||Ax - b|| / ||b||
    iterations: int
    converged: bool


def _as_finite(name: str, value, ndim: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != ndim:
        raise InputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


def solve_least_squares_full(A, b, ridge: float = 0.0, rcond: Optional[float] = None) -> LeastSquaresResult:
    """Minimize ``||Ax - b||^2 + ridge ||x||^2`` and report the numerical rank.

    With ``ridge == 0`` the SVD-based LAPACK driver returns the minimum-norm
    minimizer for rank-deficient ``A``. A positive ridge is handled by
    appending ``sqrt(ridge) I`` rows, which has the same minimizer as the
    ridge normal equations without squaring the condition number.
    """
    A = _as_finite("A", A, 2)
    b = _as_finite("b", b, 1)
    rows, cols = A.shape
    if rows < 1 or cols < 1:
        raise InputError(f"least-squares matrix must be non-empty, got shape {A.shape}")
    if b.shape[0] != rows:
        raise InputError(f"dimension mismatch: A has {rows} rows, b has {b.shape[0]} entries")
    if ridge < 0 or not np.isfinite(ridge):
        raise InputError(f"ridge must be a finite nonnegative number, got {ridge}")

    if ridge > 0:
        A = np.vstack([A, np.sqrt(ridge) * np.eye(cols)])
        b = np.concatenate([b, np.zeros(cols)])
    if rcond is None:
        rcond = max(A.shape) * np.finfo(float).eps

    x, _, rank, sv = scipy.linalg.lstsq(A, b, cond=rcond, lapack_driver="gelsd")
    logger.debug(f"lstsq {A.shape}: rank {rank}, ridge {ridge}")
    return LeastSquaresResult(x=x, rank=int(rank), singular_values=sv)


def solve_least_squares(A, b, ridge: float = 0.0) -> np.ndarray:
    return solve_least_squares_full(A, b, ridge).x


def polynomial_roots(coeffs: Sequence[float], tol_root: float = DEFAULTS.root_tol) -> np.ndarray:
    """Roots of ``sum_k c_k z^k`` (coefficients low to high degree).

    The roots are the eigenvalues of the companion matrix; each one is
    checked against ``|p(r)| <= tol_root * max|c_k|`` after scaling by the
    size of ``r^m`` and a warning is logged when the check fails.
    """
    c = _as_finite("coeffs", coeffs, 1)
    if c.size < 2:
        raise InputError("polynomial degree must be at least 1")
    if c[-1] == 0.0:
        raise InputError("leading coefficient must be nonzero")

    deg = c.size - 1
    companion = np.eye(deg, k=-1)
    companion[:, -1] -= c[:-1] / c[-1]
    roots = scipy.linalg.eigvals(companion)

    scale = np.max(np.abs(c)) * np.maximum(1.0, np.abs(roots)) ** deg
    values = np.abs(np.polynomial.polynomial.polyval(roots, c))
    if np.any(values > tol_root * scale):
        logger.warning(f"root residual {np.max(values / scale):.2e} exceeds tolerance {tol_root:.0e}")
    return roots


def cluster_roots(roots, tol_cluster: float = DEFAULTS.cluster_tol) -> List[int]:
    """Label roots closer than ``tol_cluster * max(1, |r|)`` with a shared cluster id."""
    roots = np.asarray(roots, dtype=complex)
    labels = [-1] * len(roots)
    next_label = 0
    for i, r in enumerate(roots):
        if labels[i] >= 0:
            continue
        labels[i] = next_label
        stack = [i]
        while stack:
            j = stack.pop()
            for k in range(len(roots)):
                if labels[k] < 0 and abs(roots[k] - roots[j]) <= tol_cluster * max(1.0, abs(roots[j])):
                    labels[k] = next_label
                    stack.append(k)
        next_label += 1
    return labels


def sparse_symmetric(dimension: int, rows, cols, values) -> sp.csr_matrix:
    """Full CSR matrix from upper-triangle triplets (``row <= col``)."""
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    values = _as_finite("values", values, 1)
    if np.any(rows > cols):
        raise InputError("triplets must satisfy row <= col")
    if rows.size and (rows.min() < 0 or cols.max() >= dimension):
        raise InputError(f"triplet index outside dimension {dimension}")
    pairs = set(zip(rows.tolist(), cols.tolist()))
    if len(pairs) != rows.size:
        raise InputError("duplicate (row, col) triplets")
    upper = sp.coo_matrix((values, (rows, cols)), shape=(dimension, dimension))
    strict = sp.triu(upper, k=1)
    return (upper + strict.T).tocsr()


def solve_symmetric_indefinite(A, b, rtol: float = DEFAULTS.rtol, max_iter: Optional[int] = None,
                               preconditioner=None, x0: Optional[np.ndarray] = None) -> SolveResult:
    """MINRES solve of a symmetric, possibly indefinite system.

    MINRES stops on its own backward-error estimate, so the solve is
    restarted on the true residual ``b - A x`` until ``||b - A x|| <=
    rtol ||b||``, the iteration budget runs out or a restart stops paying
    off. ``converged`` is true only when the reported residual meets
    ``rtol``; the caller decides whether anything else is fatal.

    ``preconditioner`` must be symmetric positive definite (a matrix or
    ``LinearOperator`` approximating ``A^-1``).
    """
    b = _as_finite("b", b, 1)
    if A.shape != (b.size, b.size):
        raise InputError(f"dimension mismatch: matrix {A.shape}, right-hand side {b.size}")
    if rtol <= 0:
        raise InputError(f"rtol must be positive, got {rtol}")
    if max_iter is None:
        max_iter = DEFAULTS.max_iter_factor * b.size

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return SolveResult(x=np.zeros_like(b), residual=0.0, iterations=0, converged=True)

    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    x = np.zeros_like(b) if x0 is None else _as_finite("x0", x0, 1).copy()
    r = b - A @ x
    residual = float(np.linalg.norm(r) / bnorm)
    info = 0
    for _ in range(_MAX_RESTARTS):
        if residual <= rtol or iterations >= max_iter:
            break
        inner_rtol = max(min(0.1, 0.5 * rtol / residual), np.finfo(float).eps)
        dx, info = minres(A, r, rtol=inner_rtol, maxiter=max_iter - iterations, M=preconditioner, callback=count)
        if not np.all(np.isfinite(dx)):
            info = -1
            break
        candidate = x + dx
        r_candidate = b - A @ candidate
        new_residual = float(np.linalg.norm(r_candidate) / bnorm)
        if new_residual >= residual:
            break
        stalled = new_residual > 0.5 * residual
        x, r, residual = candidate, r_candidate, new_residual
        if stalled:
            break

    converged = residual <= rtol
    if info < 0:
        logger.warning(f"MINRES breakdown (info={info}), residual {residual:.2e}")
    elif not converged:
        logger.warning(f"MINRES stopped after {iterations} iterations, residual {residual:.2e} above {rtol:.1e}")
    else:
        logger.debug(f"MINRES converged in {iterations} iterations, residual {residual:.2e}")
    return SolveResult(x=x, residual=residual, iterations=iterations, converged=converged)


def cubic_bspline(t):
    """Cardinal cubic B-spline centred at 0 with support (-2, 2)."""
    t = np.abs(np.asarray(t, dtype=float))
    inner = 2.0 / 3.0 - t ** 2 + 0.5 * t ** 3
    outer = (2.0 - t) ** 3 / 6.0
    values = np.where(t < 1.0, inner, np.where(t < 2.0, outer, 0.0))
    return values if values.ndim else float(values)


def bspline_design_matrix(t, first: int, count: int) -> sp.csr_matrix:
    """Rows ``B(t_r - i)`` for coefficient indices ``i = first .. first+count-1``.

    Only the four B-splines overlapping each ``t_r`` are stored; indices
    outside the coefficient range are dropped.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    base = np.floor(t).astype(int)
    rows, cols, vals = [], [], []
    for shift in (-1, 0, 1, 2):
        idx = base + shift
        keep = (idx >= first) & (idx < first + count)
        r = np.nonzero(keep)[0]
        rows.append(r)
        cols.append(idx[keep] - first)
        vals.append(cubic_bspline(t[keep] - idx[keep]))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(t.size, count),
    )


def difference_matrix(size: int, order: int) -> sp.csr_matrix:
    """Forward difference operator of the given order, shape ``(size-order, size)``."""
    if order < 1 or size <= order:
        raise InputError(f"need size > order >= 1, got size={size}, order={order}")
    D = sp.eye(size, format="csr")
    for _ in range(order):
        D = D[1:] - D[:-1]
    return D.tocsr()

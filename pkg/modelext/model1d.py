import logging
from typing import Tuple

import numpy as np

from .errors import InputError, PropagationOverflowError
from .grid_io import SampledGrid1D
from .models import CoeffKind, FitDiagnostics, Model1D
from .numerics import solve_least_squares_full

logger = logging.getLogger("modelext.model1d")


def _lag_indices(m: int, n: int, i: np.ndarray) -> np.ndarray:
    """Column k-1 holds ``i - (m-k+1) n`` for k = 1..m."""
    k = np.arange(1, m + 1)
    return i[:, None] - (m - k + 1)[None, :] * n


def _check_fit_inputs(grid: SampledGrid1D, m: int, n: int, kind: CoeffKind) -> None:
    if m < 1 or n < 1:
        raise InputError(f"model order and stride must be >= 1, got m={m}, n={n}")
    if grid.N < m * n + m:
        raise InputError(f"not enough data: N={grid.N} < m*n + m = {m * n + m}")
    if kind.has_pole_in(grid.a, grid.b):
        raise InputError(f"u(x) = 1/(x + {kind.alpha}) has a pole inside [{grid.a}, {grid.b}]")


def assemble_system_1d(grid: SampledGrid1D, m: int, n: int, kind: CoeffKind) -> Tuple[np.ndarray, np.ndarray]:
    """Least-squares rows of I1 for i = m n .. N.

    Unknowns are ordered (p_1..p_m, q_1..q_{m+1}); the q block is omitted
    for constant coefficients.
    """
    f = grid.values
    i = np.arange(m * n, grid.N + 1)
    lagged = f[_lag_indices(m, n, i)]
    if kind.is_constant:
        return lagged, f[i]
    u = kind.u(grid.x[i])
    A = np.hstack([lagged, u[:, None] * lagged, (-u * f[i])[:, None]])
    return A, f[i]


def fit_model_1d(grid: SampledGrid1D, m: int, n: int = 1, kind: CoeffKind = None,
                 ridge_p: float = 0.0, ridge_q: float = 0.0) -> Model1D:
    """Fit a linear prediction model by (ridge-regularized) least squares.

    Args:
        grid (SampledGrid1D): Uniformly sampled data.
        m (int): Model order.
        n (int, optional): Stride; the model lag is ``d = n h``. Defaults to 1.
        kind (CoeffKind, optional): Coefficient variation. Defaults to constant.
        ridge_p (float, optional): Penalty on ``||P||^2``. Defaults to 0.
        ridge_q (float, optional): Penalty on ``||Q||^2``. Defaults to 0.

    Returns:
        Model1D: The fitted model, with ``diagnostics`` holding I1 and the rank.
    """
    kind = kind or CoeffKind()
    _check_fit_inputs(grid, m, n, kind)
    if ridge_p < 0 or ridge_q < 0:
        raise InputError("ridge parameters must be nonnegative")

    A, b = assemble_system_1d(grid, m, n, kind)
    unknowns = A.shape[1]
    if ridge_p > 0 or ridge_q > 0:
        # unequal ridges: scale columns so a unit ridge applies, then unscale
        weights = np.full(unknowns, np.sqrt(ridge_p))
        weights[m:] = np.sqrt(ridge_q)
        penalized = weights > 0
        scaled = A.copy()
        scaled[:, penalized] /= weights[penalized]
        A_aug = np.vstack([scaled, np.eye(unknowns)[penalized]])
        b_aug = np.concatenate([b, np.zeros(penalized.sum())])
        result = solve_least_squares_full(A_aug, b_aug)
        x = result.x.copy()
        x[penalized] /= weights[penalized]
    else:
        result = solve_least_squares_full(A, b)
        x = result.x

    p = x[:m]
    q = x[m:] if not kind.is_constant else np.zeros(m + 1)
    objective = float(np.sum((A @ x - b) ** 2))
    degenerate = not np.any(grid.values)
    diagnostics = FitDiagnostics(
        objective=objective, rows=A.shape[0], unknowns=unknowns, rank=result.rank,
        rank_deficient=result.rank_deficient, degenerate=degenerate,
    )
    if diagnostics.rank_deficient:
        logger.warning(f"rank-deficient model system (rank {result.rank} < {unknowns}); using minimum-norm coefficients")
    logger.info(f"fitted 1-D model m={m} n={n} u={kind.type}: I1={objective:.3e}")
    return Model1D(m=m, n=n, u=kind, p=p.tolist(), q=q.tolist(), diagnostics=diagnostics)


def model_residual_1d(grid: SampledGrid1D, model: Model1D) -> float:
    """The objective I1 of ``model`` on ``grid`` (no ridge terms)."""
    _check_fit_inputs(grid, model.m, model.n, model.u)
    A, b = assemble_system_1d(grid, model.m, model.n, model.u)
    x = model.p_array if model.u.is_constant else np.concatenate([model.p_array, model.q_array])
    return float(np.sum((A @ x - b) ** 2))


def coefficient_functions(model: Model1D, x) -> Tuple[np.ndarray, np.ndarray]:
    """Effective coefficients at ``x``: lag weights ``p_k + q_k u(x)`` (shape (len(x), m))
    and the leading factor ``1 + q_{m+1} u(x)``."""
    u = model.u.u(np.atleast_1d(x))
    q = model.q_array
    weights = model.p_array[None, :] + q[None, :-1] * u[:, None]
    lead = 1.0 + q[-1] * u
    return weights, lead


def continue_sequence(model: Model1D, values, count: int) -> np.ndarray:
    """Append ``count`` values to ``values`` by the constant-coefficient recurrence."""
    if not model.u.is_constant:
        raise InputError("continue_sequence requires a constant-coefficient model")
    seq = np.asarray(values, dtype=float)
    span = model.span
    if seq.size < span:
        raise InputError(f"need at least {span} starting values, got {seq.size}")
    out = np.concatenate([seq, np.empty(count)])
    lags = (model.m - np.arange(1, model.m + 1) + 1) * model.n
    p = model.p_array
    for i in range(seq.size, out.size):
        out[i] = p @ out[i - lags]
        if not np.isfinite(out[i]):
            raise PropagationOverflowError("recurrence overflowed", i)
    return out

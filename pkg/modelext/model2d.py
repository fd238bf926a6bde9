import logging
from typing import List, Tuple

import numpy as np

from .errors import InputError
from .grid_io import SampledGrid2D
from .models import FitDiagnostics, Model2D
from .numerics import solve_least_squares_full

logger = logging.getLogger("modelext.model2d")


def window_placements(shape: Tuple[int, int], m: int, n: int) -> Tuple[int, int]:
    """Number of full-window placements along each axis."""
    reach = (m - 1) * n
    return max(shape[0] - reach, 0), max(shape[1] - reach, 0)


def window_slices(values: np.ndarray, m: int, n: int) -> List[List[np.ndarray]]:
    """``out[k][l]`` is the array of ``values[i + k n, j + l n]`` over all placements (0-based k, l)."""
    pi, pj = window_placements(values.shape, m, n)
    return [[values[k * n: k * n + pi, l * n: l * n + pj] for l in range(m)] for k in range(m)]


def window_residuals(values: np.ndarray, P: np.ndarray, n: int) -> np.ndarray:
    """``sum_{k,l} P[k,l] values[i + k n, j + l n]`` for every full-window placement."""
    m = P.shape[0]
    slices = window_slices(values, m, n)
    pi, pj = window_placements(values.shape, m, n)
    out = np.zeros((pi, pj))
    for k in range(m):
        for l in range(m):
            if P[k, l] != 0.0:
                out += P[k, l] * slices[k][l]
    return out


def fit_model_2d(grid: SampledGrid2D, m: int, n: int = 1, ridge: float = 0.0) -> Model2D:
    """Fit an m x m model with ``P[m,m] = 1`` by least squares over all full windows.

    Args:
        grid (SampledGrid2D): The data.
        m (int): Model size, at least 2.
        n (int, optional): Stride between window entries. Defaults to 1.
        ridge (float, optional): Ridge penalty on the free coefficients. Defaults to 0.

    Returns:
        Model2D: The fitted model; ``diagnostics`` carries I2, rank and degeneracy flags.
    """
    if m < 2 or n < 1:
        raise InputError(f"need m >= 2 and n >= 1, got m={m}, n={n}")
    pi, pj = window_placements(grid.shape, m, n)
    rows = pi * pj
    unknowns = m * m - 1
    if rows < unknowns:
        raise InputError(f"{rows} window placements cannot determine {unknowns} coefficients")

    slices = window_slices(grid.values, m, n)
    columns = [slices[k][l].ravel() for k in range(m) for l in range(m) if (k, l) != (m - 1, m - 1)]
    A = np.column_stack(columns)
    b = -slices[m - 1][m - 1].ravel()
    result = solve_least_squares_full(A, b, ridge)

    P = np.append(result.x, 1.0).reshape(m, m)
    objective = float(np.sum((A @ result.x - b) ** 2))
    degenerate = not np.any(grid.values)
    if degenerate:
        logger.warning("all-zero data: every model fits; returning the minimum-norm model")
    elif result.rank_deficient:
        logger.warning(f"rank-deficient 2-D model system (rank {result.rank} < {unknowns})")
    logger.info(f"fitted 2-D model m={m} n={n}: I2={objective:.3e}")
    diagnostics = FitDiagnostics(
        objective=objective, rows=rows, unknowns=unknowns, rank=result.rank,
        rank_deficient=result.rank_deficient, degenerate=degenerate,
    )
    return Model2D(m=m, n=n, P=P.tolist(), diagnostics=diagnostics)


def model_residual_2d(grid: SampledGrid2D, model: Model2D) -> float:
    """The objective I2 of ``model`` on ``grid``."""
    return float(np.sum(window_residuals(grid.values, model.array, model.n) ** 2))

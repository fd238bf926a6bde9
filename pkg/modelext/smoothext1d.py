import logging
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .errors import InputError, PropagationOverflowError, SingularPivotError
from .grid_io import SampledGrid1D, node_count
from .model1d import coefficient_functions
from .models import ExtensionRange1D, Model1D, SmoothExtensionDiagnostics
from .numerics import difference_matrix, solve_least_squares_full

logger = logging.getLogger("modelext.smoothext1d")

_PIVOT_TOL = 1e-12


class SequenceParametrization(NamedTuple):
    """``g = T @ c`` spans every sequence on [n0, n1] satisfying the model.

    Columns are propagated from unit seeds on indices
    ``anchor .. anchor + m n - 1``.
    """
    T: np.ndarray
    n0: int
    anchor: int
    condition: float

    @property
    def free_count(self) -> int:
        return self.T.shape[1]


def parametrize_sequences(model: Model1D, a: float, h: float, rng: ExtensionRange1D,
                          anchor: Optional[int] = None) -> SequenceParametrization:
    """Propagate unit seeds through the model, forward to ``n1`` and backward to ``n0``.

    Forward steps divide by ``1 + q_{m+1} u(x_i)`` and backward steps by
    ``p_1 + q_1 u(x_i)``; a pivot below 1e-12 times the largest coefficient of
    its model row raises ``SingularPivotError``.
    """
    span = model.span
    anchor = rng.n0 if anchor is None else anchor
    if not rng.n0 <= anchor <= rng.n1 - span + 1:
        raise InputError(f"seed block [{anchor}, {anchor + span - 1}] must lie inside [{rng.n0}, {rng.n1}]")

    indices = np.arange(rng.n0, rng.n1 + 1)
    weights, lead = coefficient_functions(model, a + h * indices)
    lags = (model.m - np.arange(1, model.m + 1) + 1) * model.n
    row_scale = np.maximum(np.abs(lead), np.abs(weights).max(axis=1))
    T = np.zeros((indices.size, span))
    start = anchor - rng.n0
    T[start:start + span] = np.eye(span)

    with np.errstate(over="ignore", invalid="ignore"):
        for r in range(start + span, indices.size):
            if abs(lead[r]) < _PIVOT_TOL * row_scale[r]:
                raise SingularPivotError("vanishing forward pivot 1 + q_{m+1} u(x_i)", int(indices[r]))
            T[r] = weights[r] @ T[r - lags] / lead[r]
            if not np.all(np.isfinite(T[r])):
                raise PropagationOverflowError("forward propagation overflowed", int(indices[r]))

        # backward: the model row at r + m n solves for its oldest lag r
        for r in range(start - 1, -1, -1):
            i = r + span
            pivot = weights[i, 0]
            if abs(pivot) < _PIVOT_TOL * row_scale[i]:
                raise SingularPivotError("vanishing backward pivot p_1 + q_1 u(x_i)", int(indices[r]))
            rest = weights[i, 1:] @ T[i - lags[1:]] if model.m > 1 else 0.0
            T[r] = (lead[i] * T[i] - rest) / pivot
            if not np.all(np.isfinite(T[r])):
                raise PropagationOverflowError("backward propagation overflowed", int(indices[r]))

    col_norms = np.linalg.norm(T, axis=0)
    condition = float(np.linalg.cond(T / col_norms)) if T.size else 0.0
    logger.debug(f"parametrization: {span} columns over [{rng.n0}, {rng.n1}], cond {condition:.2e}")
    return SequenceParametrization(T=T, n0=rng.n0, anchor=anchor, condition=condition)


def model_identity_residual(g, model: Model1D, a: float, h: float, n0: int = 0) -> float:
    """Largest relative violation of the model over all applicable indices of ``g``."""
    g = np.asarray(g, dtype=float)
    span = model.span
    if g.size <= span:
        return 0.0
    idx = np.arange(span, g.size)
    weights, lead = coefficient_functions(model, a + h * (idx + n0))
    lags = (model.m - np.arange(1, model.m + 1) + 1) * model.n
    lagged = g[idx[:, None] - lags[None, :]]
    residual = lead * g[idx] - np.sum(weights * lagged, axis=1)
    scale = np.max(np.abs(g)) * (np.max(np.abs(lead)) + np.max(np.sum(np.abs(weights), axis=1)))
    return float(np.max(np.abs(residual)) / scale) if scale > 0 else 0.0


def smoothness_energy(g, p: int = 2) -> float:
    """S_p: sum of squared p-th forward differences."""
    g = np.asarray(g, dtype=float)
    if p < 1 or g.size <= p:
        raise InputError(f"need len(g) > p >= 1, got len {g.size}, p={p}")
    return float(np.sum(np.diff(g, p) ** 2))


def data_energy(g, grid: SampledGrid1D, n0: int = 0) -> float:
    """E: squared distance to the data on indices 0..N; ``g[0]`` sits at index ``n0``."""
    g = np.asarray(g, dtype=float)
    start = -n0
    if start < 0 or start + grid.N + 1 > g.size:
        raise InputError("sequence does not cover the data indices")
    return float(np.sum((grid.values - g[start:start + grid.N + 1]) ** 2))


def default_range(grid: SampledGrid1D) -> ExtensionRange1D:
    """The data window followed by an extension of equal length."""
    return ExtensionRange1D(n0=0, n1=2 * grid.N)


def index_range(grid: SampledGrid1D, lo: float, hi: float) -> ExtensionRange1D:
    """x-range ``[lo, hi]`` on the data lattice as indices relative to ``grid.a``."""
    if lo > grid.a or hi < grid.b:
        raise InputError(f"range [{lo}, {hi}] must contain the data window [{grid.a}, {grid.b}]")
    n0 = -node_count(lo, grid.a, grid.h) if lo < grid.a else 0
    n1 = node_count(grid.a, hi, grid.h)
    return ExtensionRange1D(n0=n0, n1=n1)


def extend_smooth_1d(grid: SampledGrid1D, model: Model1D, rng: Optional[ExtensionRange1D] = None,
                     p: int = 2, mu: Optional[float] = None,
                     anchor: Optional[int] = None) -> Tuple[SampledGrid1D, SmoothExtensionDiagnostics]:
    """Minimize ``F_p(g) = S_p(g) + mu E(g)`` over sequences satisfying the model.

    Args:
        grid (SampledGrid1D): The data.
        model (Model1D): Model the extension must satisfy exactly.
        rng (ExtensionRange1D, optional): Index range; defaults to [0, 2N].
        p (int, optional): Difference order of the smoothness term. Defaults to 2.
        mu (float, optional): Data weight; defaults to ``h**2``.
        anchor (int, optional): First index of the free seed block. Defaults to ``n0``.

    Returns:
        Tuple[SampledGrid1D, SmoothExtensionDiagnostics]: The extension over
        ``[a + n0 h, a + n1 h]`` and the attained energies.
    """
    rng = rng or default_range(grid)
    try:
        rng.check(grid.N)
    except ValueError as e:
        raise InputError(str(e)) from e
    mu = grid.h ** 2 if mu is None else mu
    if not mu > 0:
        raise InputError(f"mu must be positive, got {mu}")
    if model.u.has_pole_in(grid.a + rng.n0 * grid.h, grid.a + rng.n1 * grid.h):
        raise InputError("rational coefficient pole inside the extension range")

    param = parametrize_sequences(model, grid.a, grid.h, rng, anchor=anchor)
    col_norms = np.linalg.norm(param.T, axis=0)
    col_norms[col_norms == 0] = 1.0
    T = param.T / col_norms

    data_rows = T[-rng.n0: -rng.n0 + grid.N + 1]
    D = difference_matrix(rng.size, p)
    A = np.vstack([np.sqrt(mu) * data_rows, D @ T])
    b = np.concatenate([np.sqrt(mu) * grid.values, np.zeros(D.shape[0])])
    result = solve_least_squares_full(A, b)
    if result.rank_deficient:
        logger.warning(f"stacked system rank {result.rank} < {T.shape[1]}; using minimum-norm solution")

    g = T @ result.x
    S = smoothness_energy(g, p)
    E = data_energy(g, grid, rng.n0)
    diagnostics = SmoothExtensionDiagnostics(
        S=S, E=E, F=S + mu * E, mu=mu, rank=result.rank, rank_deficient=result.rank_deficient,
        condition=param.condition,
        model_residual=model_identity_residual(g, model, grid.a, grid.h, rng.n0),
        unknowns=T.shape[1],
    )
    logger.info(f"smooth 1-D extension over [{rng.n0}, {rng.n1}]: F={diagnostics.F:.4e}")
    return SampledGrid1D(a=grid.a + rng.n0 * grid.h, h=grid.h, values=g), diagnostics

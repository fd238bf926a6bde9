"""Model-splines: cubic B-spline combinations whose coefficients satisfy a model.

If the coefficient sequence (or array) of ``sum_i c_i B(x/d - i)`` satisfies a
constant-coefficient model, so does the spline itself, with lags measured in
units of the knot mesh ``d``. Bases are generated by seeding free
coefficients with unit vectors and completing the rest by the recurrence.
"""
import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .config import DEFAULTS
from .errors import InputError, PropagationOverflowError, SingularPivotError
from .grid_io import SampledGrid1D, SampledGrid2D, node_count
from .model1d import continue_sequence, fit_model_1d
from .models import Model1D, Model2D, SplineFitDiagnostics
from .numerics import bspline_design_matrix, solve_least_squares_full

logger = logging.getLogger("modelext.modelspline")

FIRST = -1  # index of the first B-spline coefficient
_BACKWARD_PIVOT_TOL = 1e-10
POOR_CONDITION = 1e10

STRATEGIES = ("fit-then-propagate", "global-band")


def coefficient_count(length: float, d: float) -> int:
    """Coefficients ``-1 .. K-2`` needed to cover ``[0, length]`` with knot mesh ``d``."""
    return int(math.ceil(length / d - 1e-9)) + 3


def _stride_one(model: Model1D) -> Model1D:
    if not model.u.is_constant:
        raise InputError("model-splines need a constant-coefficient model")
    return Model1D(m=model.m, n=1, p=model.p)


def model_lag_mismatch(model: Union[Model1D, Model2D], h: float, d: float) -> bool:
    """True when a strided model (``n > 1``) was fitted at a lag ``n h`` other than ``d``."""
    return model.n > 1 and abs(model.n * h - d) > 1e-9 * d


def warn_if_ill_conditioned(condition: float) -> None:
    if condition > POOR_CONDITION:
        logger.warning(f"model-spline basis is poorly conditioned on the data (cond {condition:.2e}); "
                       "coefficients may be unreliable")


# ---------------------------------------------------------------- 1-D

class ModelSplineBasis1D(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: Model1D
    d: float = Field(gt=0)
    origin: float = 0.0
    K: int
    sequences: np.ndarray  # (m, K): coefficients of S_j on indices -1..K-2
    offsets: Tuple[float, ...] = ()

    @property
    def shifts(self) -> Tuple[float, ...]:
        return (0.0,) + tuple(self.offsets)

    @property
    def size(self) -> int:
        return self.sequences.shape[0] * len(self.shifts)

    def evaluate(self, x) -> np.ndarray:
        """Basis functions at ``x``, columns ordered shift-major then j."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t = (x - self.origin) / self.d
        blocks = [bspline_design_matrix(t - tau, FIRST, self.K) @ self.sequences.T for tau in self.shifts]
        return np.hstack(blocks)


class ModelSpline1D:
    """A fitted model-spline: one coefficient sequence per knot shift."""

    def __init__(self, model: Model1D, d: float, origin: float, components: List[Tuple[float, int, np.ndarray]],
                 diagnostics: Optional[SplineFitDiagnostics] = None):
        self.model = model
        self.d = d
        self.origin = origin
        self.components = components  # (shift, first index, coefficients)
        self.diagnostics = diagnostics

    def __call__(self, x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        t = (x_arr - self.origin) / self.d
        out = np.zeros(x_arr.size)
        for tau, first, coeffs in self.components:
            out += bspline_design_matrix(t - tau, first, coeffs.size) @ coeffs
        return out if np.ndim(x) else float(out[0])

    @property
    def valid_window(self) -> Tuple[float, float]:
        """x-range where every overlapping B-spline has a defined coefficient."""
        lo = max(tau + first + 1 for tau, first, _ in self.components)
        hi = min(tau + first + c.size - 2 for tau, first, c in self.components)
        return self.origin + lo * self.d, self.origin + hi * self.d


def build_spline_basis_1d(model: Model1D, K: int, d: float = 1.0, origin: float = 0.0,
                          offsets: Sequence[float] = ()) -> ModelSplineBasis1D:
    """Seed ``c_{-1..m-2}`` with unit vectors and propagate ``c_{i+m+1} = sum_k p_k c_{i+k}``."""
    recurrence = _stride_one(model)
    m = model.m
    if K < m + 2:
        raise InputError(f"need K >= m + 2 = {m + 2} coefficients, got {K}")
    for tau in offsets:
        if not 0.0 < tau < 1.0:
            raise InputError(f"augmentation offsets must lie in (0, 1), got {tau}")
    sequences = np.vstack([continue_sequence(recurrence, seed, K - m) for seed in np.eye(m)])
    logger.debug(f"1-D model-spline basis: m={m}, K={K}, {len(offsets)} augmentation shift(s)")
    return ModelSplineBasis1D(model=model, d=d, origin=origin, K=K, sequences=sequences, offsets=tuple(offsets))


def fit_model_spline_1d(grid: SampledGrid1D, basis: ModelSplineBasis1D) -> ModelSpline1D:
    """Least-squares model-spline approximation of the data (no smoothing parameter).

    Lags of the basis recurrence are in units of the knot mesh, so a model
    fitted to the samples at stride ``n`` belongs with ``d = n h``. A model
    fitted to clean samples of the same family keeps the basis well
    conditioned; ``diagnostics.condition`` reports how well.
    """
    if grid.values.size < basis.size:
        raise InputError(f"{grid.values.size} nodes cannot determine {basis.size} basis coefficients")
    if model_lag_mismatch(basis.model, grid.h, basis.d):
        logger.warning(f"model lag {basis.model.n} x {grid.h} differs from the knot mesh {basis.d}; "
                       "the spline recurrence runs in units of the mesh")
    V = basis.evaluate(grid.x)
    result = solve_least_squares_full(V, grid.values)
    if result.rank_deficient:
        if not basis.offsets:
            raise InputError(f"degenerate basis on the data window: rank {result.rank} < {basis.size}")
        logger.warning(f"augmented basis is rank-deficient ({result.rank} < {basis.size}); using minimum norm")

    m = basis.sequences.shape[0]
    weights = result.x.reshape(len(basis.shifts), m)
    components = [(tau, FIRST, w @ basis.sequences) for tau, w in zip(basis.shifts, weights)]
    rms = float(np.sqrt(np.mean((V @ result.x - grid.values) ** 2)))
    warn_if_ill_conditioned(result.condition)
    diagnostics = SplineFitDiagnostics(basis_size=basis.size, rank=result.rank,
                                       rank_deficient=result.rank_deficient, rms=rms, condition=result.condition)
    return ModelSpline1D(basis.model, basis.d, basis.origin, components, diagnostics)


def _extend_sequence(model: Model1D, first: int, coeffs: np.ndarray, new_first: int, new_last: int):
    """Extend coefficients on ``[first, first+len-1]`` to ``[new_first, new_last]``."""
    recurrence = _stride_one(model)
    m = model.m
    p = recurrence.p_array
    last = first + coeffs.size - 1
    if new_last > last:
        coeffs = continue_sequence(recurrence, coeffs, new_last - last)
    if new_first < first:
        if abs(p[0]) <= _BACKWARD_PIVOT_TOL:
            raise SingularPivotError("backward extension needs |p_1| > 1e-10", new_first)
        back = np.concatenate([np.zeros(first - new_first), coeffs])
        for r in range(first - new_first - 1, -1, -1):
            # c_{r+m} = p_1 c_r + sum_{k>=2} p_k c_{r+k-1}
            back[r] = (back[r + m] - p[1:] @ back[r + 1: r + m]) / p[0]
            if not np.isfinite(back[r]):
                raise PropagationOverflowError("backward coefficient propagation overflowed", r + new_first)
        coeffs, first = back, new_first
    return first, coeffs


def extend_model_spline_1d(fitted: ModelSpline1D, lo: float, hi: float, h: float) -> SampledGrid1D:
    """Propagate the coefficients to cover ``[lo, hi]`` and sample the spline there."""
    N = node_count(lo, hi, h)
    components = []
    for tau, first, coeffs in fitted.components:
        t_lo = (lo - fitted.origin) / fitted.d - tau
        t_hi = (hi - fitted.origin) / fitted.d - tau
        need_first = min(first, int(math.floor(t_lo)) - 1)
        need_last = max(first + coeffs.size - 1, int(math.floor(t_hi)) + 2)
        components.append((tau, *_extend_sequence(fitted.model, first, coeffs, need_first, need_last)))
    extended = ModelSpline1D(fitted.model, fitted.d, fitted.origin, components, fitted.diagnostics)
    x = lo + h * np.arange(N + 1)
    return SampledGrid1D(a=lo, h=h, values=extended(x))


def extract_coefficients_1d(g: Callable, origin: float, d: float, first: int, count: int,
                            samples_per_knot: int = 8) -> np.ndarray:
    """Least-squares B-spline coefficients of ``g`` on indices ``first .. first+count-1``.

    Samples cover the full support of every B-spline in the range, so a
    spline with exactly these coefficients is recovered to round-off.
    """
    t = np.linspace(first - 1.9, first + count, samples_per_knot * (count + 3))
    B = bspline_design_matrix(t, first, count).toarray()
    return solve_least_squares_full(B, np.asarray(g(origin + d * t), dtype=float)).x


# ---------------------------------------------------------------- 2-D

def free_band(m: int, K: int) -> List[Tuple[int, int]]:
    """Indices ``(i, j)`` in ``[-1, K-2]^2`` with ``min(i, j) <= m - 3`` (the m-1 free layers)."""
    idx = range(FIRST, K - 1)
    return [(i, j) for i in idx for j in idx if min(i, j) <= m - 3]


def complete_coefficients(arrays: np.ndarray, model: Model2D) -> np.ndarray:
    """Fill every position outside the free band by the corner-solved recurrence.

    ``arrays`` has shape ``(count, K1, K2)`` with position 0 = index -1; band
    entries are read, all others are overwritten in lexicographic order.
    """
    m = model.m
    P = model.array.copy()
    P[-1, -1] = 0.0
    _, k1, k2 = arrays.shape
    with np.errstate(over="ignore", invalid="ignore"):
        for r in range(m - 1, k1):
            for s in range(m - 1, k2):
                window = arrays[:, r - m + 1: r + 1, s - m + 1: s + 1]
                arrays[:, r, s] = -np.einsum("bkl,kl->b", window, P)
            if not np.all(np.isfinite(arrays[:, r, :])):
                raise PropagationOverflowError("coefficient completion overflowed", r + FIRST)
    return arrays


class ModelSplineBasis2D(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: Model2D
    d: float = Field(gt=0)
    origin: Tuple[float, float] = (0.0, 0.0)
    K: int
    band: List[Tuple[int, int]]
    arrays: np.ndarray  # (#L, K, K)

    @property
    def size(self) -> int:
        return len(self.band)

    def evaluate_grid(self, x, y) -> np.ndarray:
        """Basis functions on the tensor grid ``x x y``, shape ``(len(x) * len(y), #L)``."""
        Bx = bspline_design_matrix((np.asarray(x) - self.origin[0]) / self.d, FIRST, self.K).toarray()
        By = bspline_design_matrix((np.asarray(y) - self.origin[1]) / self.d, FIRST, self.K).toarray()
        values = np.einsum("xi,bij,yj->xyb", Bx, self.arrays, By)
        return values.reshape(-1, self.size)


def build_spline_basis_2d(model: Model2D, K: int, d: float = 1.0,
                          origin: Tuple[float, float] = (0.0, 0.0)) -> ModelSplineBasis2D:
    m = model.m
    if K < m + 2:
        raise InputError(f"need K >= m + 2 = {m + 2} coefficients per axis, got {K}")
    band = free_band(m, K)
    arrays = np.zeros((len(band), K, K))
    for b, (i, j) in enumerate(band):
        arrays[b, i - FIRST, j - FIRST] = 1.0
    complete_coefficients(arrays, model)
    logger.debug(f"2-D model-spline basis: m={m}, K={K}, size {len(band)}")
    return ModelSplineBasis2D(model=model, d=d, origin=origin, K=K, band=band, arrays=arrays)


class ModelSpline2D:
    """Tensor-product cubic spline with coefficients on ``[-1, K1-2] x [-1, K2-2]``."""

    def __init__(self, model: Model2D, d: float, origin: Tuple[float, float], coeffs: np.ndarray,
                 diagnostics: Optional[SplineFitDiagnostics] = None):
        self.model = model
        self.d = d
        self.origin = origin
        self.coeffs = coeffs
        self.diagnostics = diagnostics

    def __call__(self, x, y):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        y_arr = np.atleast_1d(np.asarray(y, dtype=float))
        Bx = bspline_design_matrix((x_arr - self.origin[0]) / self.d, FIRST, self.coeffs.shape[0])
        By = bspline_design_matrix((y_arr - self.origin[1]) / self.d, FIRST, self.coeffs.shape[1])
        out = np.asarray((Bx @ self.coeffs) * By.toarray()).sum(axis=1)
        return out if np.ndim(x) else float(out[0])

    def grid(self, x, y) -> np.ndarray:
        Bx = bspline_design_matrix((np.asarray(x) - self.origin[0]) / self.d, FIRST, self.coeffs.shape[0])
        By = bspline_design_matrix((np.asarray(y) - self.origin[1]) / self.d, FIRST, self.coeffs.shape[1])
        return np.asarray(Bx @ (By @ self.coeffs.T).T)

    @property
    def valid_window(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        k1, k2 = self.coeffs.shape
        return ((self.origin[0], self.origin[0] + (k1 - 3) * self.d),
                (self.origin[1], self.origin[1] + (k2 - 3) * self.d))


def band_penalty(basis: ModelSplineBasis2D) -> np.ndarray:
    """Second differences of the free-band values along each band line.

    Rows act on basis weights (the weight of a basis member is its band
    seed value). Band values that vary linearly along every line cost nothing.
    """
    position = {ij: b for b, ij in enumerate(basis.band)}
    layers = range(FIRST, basis.model.m - 2)
    lines = [[(i, j) for j in range(FIRST, basis.K - 1)] for i in layers]
    lines += [[(i, j) for i in range(FIRST, basis.K - 1)] for j in layers]
    rows = []
    for line in lines:
        for a, b, c in zip(line, line[1:], line[2:]):
            row = np.zeros(basis.size)
            row[[position[a], position[b], position[c]]] += (1.0, -2.0, 1.0)
            rows.append(row)
    return np.array(rows)


def fit_model_spline_2d(grid: SampledGrid2D, basis: ModelSplineBasis2D, ridge: float = 0.0) -> ModelSpline2D:
    """Least-squares model-spline surface; a positive ``ridge`` adds the band penalty.

    The ridge is relative to the mean squared column norm of the data matrix.
    """
    nodes = grid.values.size
    if ridge == 0.0 and nodes < basis.size:
        raise InputError(f"{nodes} nodes cannot determine {basis.size} basis coefficients without a ridge")
    if ridge < 0:
        raise InputError(f"ridge must be nonnegative, got {ridge}")
    if model_lag_mismatch(basis.model, grid.h, basis.d):
        logger.warning(f"model lag {basis.model.n} x {grid.h} differs from the knot mesh {basis.d}")
    V = basis.evaluate_grid(grid.x, grid.y)
    f = grid.values.ravel()
    if ridge > 0:
        scale = float(np.sum(V ** 2) / max(basis.size, 1))
        R = band_penalty(basis)
        result = solve_least_squares_full(np.vstack([V, np.sqrt(ridge * scale) * R]),
                                          np.concatenate([f, np.zeros(R.shape[0])]))
    else:
        result = solve_least_squares_full(V, f)
    if result.rank_deficient:
        logger.warning(f"model-spline system rank {result.rank} < {basis.size}")
    coeffs = np.tensordot(result.x, basis.arrays, axes=1)
    rms = float(np.sqrt(np.mean((V @ result.x - f) ** 2)))
    warn_if_ill_conditioned(result.condition)
    diagnostics = SplineFitDiagnostics(basis_size=basis.size, rank=result.rank,
                                       rank_deficient=result.rank_deficient, rms=rms, condition=result.condition)
    return ModelSpline2D(basis.model, basis.d, basis.origin, coeffs, diagnostics)


def _continue_band_line(line: np.ndarray, extra: int, order: int, ridge: float) -> np.ndarray:
    """Continue one band line by a constant stride-1 model fitted to it."""
    probe = SampledGrid1D(a=0.0, h=1.0, values=line)
    model = fit_model_1d(probe, order, 1, ridge_p=ridge * float(np.sum(line ** 2)))
    return continue_sequence(model, line, extra)


def propagate_forward_2d(fitted: ModelSpline2D, K_new: int, band_ridge: float = DEFAULTS.band_ridge) -> ModelSpline2D:
    """Enlarge the coefficient square to ``K_new`` per axis, keeping the origin.

    Free-band lines are continued by a fitted 1-D recurrence of order
    ``min(m-1, (K-1)//3)``; all other coefficients follow from the 2-D model.
    """
    m = fitted.model.m
    k1, k2 = fitted.coeffs.shape
    if K_new < max(k1, k2):
        raise InputError("forward propagation cannot shrink the coefficient range")
    order = max(1, min(m - 1, (min(k1, k2) - 1) // 3))
    out = np.zeros((K_new, K_new))
    out[:k1, :k2] = fitted.coeffs
    for s in range(m - 1):
        out[:, s] = _continue_band_line(fitted.coeffs[:, s], K_new - k1, order, band_ridge)
        out[s, :] = _continue_band_line(fitted.coeffs[s, :], K_new - k2, order, band_ridge)
    complete_coefficients(out[None], fitted.model)
    return ModelSpline2D(fitted.model, fitted.d, fitted.origin, out, fitted.diagnostics)


def spline_extend_2d(grid: SampledGrid2D, model: Model2D, d: float, lo: float, hi: float,
                     strategy: str = "fit-then-propagate",
                     ridge: float = 1e-8) -> Tuple[SampledGrid2D, ModelSpline2D]:
    """Fit model-splines to the data and sample the extension on ``[lo, hi]^2``.

    Args:
        grid (SampledGrid2D): The data.
        model (Model2D): Constant-coefficient model in coefficient index space.
        d (float): Knot mesh.
        lo (float): Lower corner of the target square.
        hi (float): Upper corner of the target square.
        strategy (str, optional): "fit-then-propagate" (forward extension only) or
            "global-band" (basis over the whole target, ridge-regularized). Defaults to
            "fit-then-propagate".
        ridge (float, optional): Relative ridge for "global-band". Defaults to 1e-8.

    Returns:
        Tuple[SampledGrid2D, ModelSpline2D]: Samples on the target lattice (data mesh)
        and the fitted spline.
    """
    if strategy not in STRATEGIES:
        raise InputError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    N = node_count(lo, hi, grid.h)
    target = lo + grid.h * np.arange(N + 1)
    nx, ny = grid.shape
    data_hi = max(grid.x[-1], grid.y[-1])

    if strategy == "fit-then-propagate":
        if lo < min(grid.x0, grid.y0) - 1e-12:
            raise InputError("fit-then-propagate only extends forward; use strategy 'global-band' "
                             "for backward or mixed-direction extension")
        K = coefficient_count(data_hi - min(grid.x0, grid.y0), d)
        basis = build_spline_basis_2d(model, K, d, (grid.x0, grid.y0))
        fitted = fit_model_spline_2d(grid, basis)
        K_new = max(K, coefficient_count(hi - min(grid.x0, grid.y0), d))
        extended = propagate_forward_2d(fitted, K_new)
    else:
        K = coefficient_count(hi - lo, d)
        basis = build_spline_basis_2d(model, K, d, (lo, lo))
        fitted = fit_model_spline_2d(grid, basis, ridge=ridge)
        fitted.diagnostics.strategy = strategy
        extended = fitted

    logger.info(f"model-spline extension ({strategy}): basis size {basis.size}, data RMS {fitted.diagnostics.rms:.3e}")
    values = extended.grid(target, target)
    return SampledGrid2D(x0=lo, y0=lo, h=grid.h, values=values), fitted


def extract_coefficients_2d(g: Callable, origin: Tuple[float, float], d: float, count: Tuple[int, int],
                            samples_per_knot: int = 6) -> np.ndarray:
    """Least-squares tensor B-spline coefficients of ``g(x, y)`` on ``[-1, K-2]`` per axis."""
    ts = [np.linspace(FIRST - 1.9, FIRST + k, samples_per_knot * (k + 3)) for k in count]
    Bs = [bspline_design_matrix(t, FIRST, k).toarray() for t, k in zip(ts, count)]
    X, Y = np.meshgrid(origin[0] + d * ts[0], origin[1] + d * ts[1], indexing="ij")
    G = np.asarray(g(X.ravel(), Y.ravel()), dtype=float).reshape(X.shape)
    left = np.linalg.lstsq(Bs[0], G, rcond=None)[0]
    return np.linalg.lstsq(Bs[1], left.T, rcond=None)[0].T


# ---------------------------------------------------------------- identity checks

def verify_model_identity(g: Callable, model: Union[Model1D, Model2D], points, d: Optional[float] = None) -> float:
    """Largest absolute model residual of ``g`` over the sample points.

    1-D: ``g(x + m d) - sum_k p_k g(x + (k-1) d)``.
    2-D: ``sum_{k,l} P[k,l] g(x + k d, y + l d)`` with 0-based k, l.
    """
    d = d if d is not None else getattr(g, "d", 1.0)
    window = getattr(g, "valid_window", None)
    pts = np.asarray(points, dtype=float)

    if isinstance(model, Model1D):
        recurrence = _stride_one(model)
        x = np.atleast_1d(pts)
        if window is not None and (x.min() < window[0] - 1e-12 or x.max() + model.m * d > window[1] + 1e-12):
            raise InputError(f"sample points leave the valid window {window}")
        residual = g(x + model.m * d)
        for k, pk in enumerate(recurrence.p_array):
            residual = residual - pk * g(x + k * d)
        return float(np.max(np.abs(residual)))

    pts = np.atleast_2d(pts)
    x, y = pts[:, 0], pts[:, 1]
    reach = (model.m - 1) * d
    if window is not None:
        (x_lo, x_hi), (y_lo, y_hi) = window
        if x.min() < x_lo - 1e-12 or x.max() + reach > x_hi + 1e-12 \
                or y.min() < y_lo - 1e-12 or y.max() + reach > y_hi + 1e-12:
            raise InputError(f"sample points leave the valid window {window}")
    residual = np.zeros(x.size)
    P = model.array
    for k in range(model.m):
        for l in range(model.m):
            if P[k, l] != 0.0:
                residual += P[k, l] * g(x + k * d, y + l * d)
    return float(np.max(np.abs(residual)))

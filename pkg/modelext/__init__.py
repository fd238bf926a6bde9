from typing import Optional, Union

import numpy as np
import pandas as pd
import polars as pl

from .blend import blend_extend, blend_models
from .config import Settings, configure_logging, load_settings
from .errors import (
    ConvergenceError, GridFormatError, InputError, ModelExtError, NumericalError, PropagationOverflowError,
    SingularPivotError,
)
from .grid_io import (
    SampledGrid1D, SampledGrid2D, eval_test_function, read_grid_1d, read_grid_2d, read_model, sample_1d,
    sample_2d, sample_function_1d, sample_function_2d, write_grid_1d, write_grid_2d, write_model,
)
from .model1d import fit_model_1d, model_residual_1d
from .model2d import fit_model_2d, model_residual_2d
from .models import BlendSpec, CoeffKind, ExtensionRange1D, Model1D, Model2D, NoiseSpec
from .modelspline import (
    build_spline_basis_1d, build_spline_basis_2d, extend_model_spline_1d, fit_model_spline_1d,
    fit_model_spline_2d, spline_extend_2d, verify_model_identity,
)
from .prony1d import prony_extend, prony_fit
from .smoothext1d import extend_smooth_1d, index_range
from .smoothext2d import ExtensionDomain2D, extend_smooth_2d

__version__ = "0.1.0"
__all__ = [
    "BlendSpec", "CoeffKind", "ConvergenceError", "ExtensionDomain2D", "ExtensionRange1D", "GridFormatError",
    "InputError", "Model1D", "Model2D", "ModelExtError", "NoiseSpec", "NumericalError", "PropagationOverflowError",
    "SampledGrid1D", "SampledGrid2D", "Settings", "SingularPivotError", "blend_extend", "blend_models",
    "build_spline_basis_1d", "build_spline_basis_2d", "configure_logging", "eval_test_function",
    "extend_model_spline_1d", "extend_smooth_1d", "extend_smooth_2d", "fit_model_1d", "fit_model_2d",
    "fit_model_spline_1d", "fit_model_spline_2d", "load_settings", "model_residual_1d", "model_residual_2d",
    "prony_extend", "prony_fit", "read_grid_1d", "read_grid_2d", "read_model", "sample_1d", "sample_2d",
    "sample_function_1d", "sample_function_2d", "spline_extend_2d", "verify_model_identity", "write_grid_1d",
    "write_grid_2d", "write_model",
]


def _as_series(grid: SampledGrid1D, name: Optional[str]) -> pd.Series:
    return pd.Series(grid.values, index=pd.Index(grid.x, name="x"), name=name)


@pd.api.extensions.register_series_accessor("linpred")
class LinearPredictionAccessor:
    """``series.linpred``: extend a uniformly indexed Series.

    The index holds the sample positions ``x``; it must be uniformly increasing.
    """

    def __init__(self, pandas_obj: pd.Series):
        self._obj = pandas_obj

    def to_grid(self) -> SampledGrid1D:
        frame = pd.DataFrame({"x": np.asarray(self._obj.index, dtype=float), "value": self._obj.to_numpy(dtype=float)})
        return SampledGrid1D.from_frame(frame)

    def fit(self, m: int, n: int = 1, kind: Union[str, CoeffKind] = "const") -> Model1D:
        kind = CoeffKind.parse(kind) if isinstance(kind, str) else kind
        return fit_model_1d(self.to_grid(), m, n, kind)

    def extend_prony(self, m: int, n: int, lo: float, hi: float) -> pd.Series:
        """
        Extends the series by an exponential sum fitted through a constant model.

        Args:
            m (int): Model order.
            n (int): Model stride in samples.
            lo (float): Start of the output range.
            hi (float): End of the output range.

        Returns:
            pd.Series: Values on ``[lo, hi]`` at the series' mesh.
        """
        _, extension = prony_extend(self.to_grid(), m, n, lo, hi)
        return _as_series(extension, self._obj.name)

    def extend_smooth(self, m: int, n: int, lo: float, hi: float, p: int = 2, mu: Optional[float] = None,
                      kind: Union[str, CoeffKind] = "const") -> pd.Series:
        """
        Fits a model and returns the smoothest sequence satisfying it that stays close to the data.

        Args:
            m (int): Model order.
            n (int): Model stride in samples.
            lo (float): Start of the output range, at most the first index value.
            hi (float): End of the output range, at least the last index value.
            p (int, optional): Difference order of the smoothness term. Defaults to 2.
            mu (float, optional): Data weight. Defaults to the squared mesh.
            kind (Union[str, CoeffKind], optional): Coefficient variation. Defaults to "const".

        Returns:
            pd.Series: Values on ``[lo, hi]`` at the series' mesh.
        """
        grid = self.to_grid()
        model = self.fit(m, n, kind)
        extension, _ = extend_smooth_1d(grid, model, rng=index_range(grid, lo, hi), p=p, mu=mu)
        return _as_series(extension, self._obj.name)


def _register_polars_namespace():
    @pl.api.register_dataframe_namespace("linpred")
    class PolarsLinearPrediction:
        """``frame.linpred`` for polars frames with columns ``x`` and ``value``."""

        def __init__(self, polars_obj: pl.DataFrame):
            self._obj = polars_obj

        def to_grid(self) -> SampledGrid1D:
            return SampledGrid1D.from_frame(self._obj)

        def extend_prony(self, m: int, n: int, lo: float, hi: float) -> pl.DataFrame:
            _, extension = prony_extend(self.to_grid(), m, n, lo, hi)
            return extension.to_frame("polars")


_register_polars_namespace()

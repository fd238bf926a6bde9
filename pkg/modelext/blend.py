"""Morph one behavior into another by blending two constant-coefficient models."""
import logging
from typing import Optional, Tuple

import numpy as np

from .grid_io import SampledGrid1D
from .models import BlendSpec, CoeffKind, ExtensionRange1D, Model1D, SmoothExtensionDiagnostics
from .smoothext1d import extend_smooth_1d

logger = logging.getLogger("modelext.blend")


def blend_models(spec: BlendSpec) -> Model1D:
    """Linear-kind model whose coefficients ``p_k + q_k x`` run from the start
    model at ``x_start`` to the end model at ``x_end``; ``q_{m+1} = 0``."""
    p_start = spec.model_start.p_array
    p_end = spec.model_end.p_array
    q = (p_end - p_start) / (spec.x_end - spec.x_start)
    p = p_start - q * spec.x_start
    logger.debug(f"blended m={spec.model_start.m} over [{spec.x_start}, {spec.x_end}], max slope {np.max(np.abs(q)):.3e}")
    return Model1D(
        m=spec.model_start.m, n=spec.model_start.n, u=CoeffKind(type="linear"),
        p=p.tolist(), q=np.append(q, 0.0).tolist(),
    )


def blend_extend(grid: SampledGrid1D, spec: BlendSpec, p: int = 2, mu: Optional[float] = None,
                 rng: Optional[ExtensionRange1D] = None) -> Tuple[SampledGrid1D, SmoothExtensionDiagnostics]:
    """Smooth approximation-extension under the blended model.

    Args:
        grid (SampledGrid1D): The data.
        spec (BlendSpec): The two models and the transition interval.
        p (int, optional): Difference order of the smoothness term. Defaults to 2.
        mu (float, optional): Data weight; defaults to ``h**2``.
        rng (ExtensionRange1D, optional): Index range; defaults to [0, 2N].

    Returns:
        Tuple[SampledGrid1D, SmoothExtensionDiagnostics]: As ``extend_smooth_1d``.
    """
    return extend_smooth_1d(grid, blend_models(spec), rng=rng, p=p, mu=mu)

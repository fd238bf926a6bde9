import pytest
import numpy as np

from modelext.blend import blend_extend, blend_models
from modelext.grid_io import sample_function_1d
from modelext.model1d import coefficient_functions
from modelext.models import BlendSpec, Model1D
from modelext.smoothext1d import extend_smooth_1d


@pytest.fixture
def oscillation_to_decay():
    start = Model1D(m=2, n=2, p=[-1.0, 2.0 * np.cos(0.2)])
    end = Model1D(m=2, n=2, p=[-0.8, 1.7])
    return BlendSpec(model_start=start, model_end=end, x_start=2.0, x_end=6.0)


def test_blended_coefficients_hit_both_endpoints(oscillation_to_decay):
    model = blend_models(oscillation_to_decay)
    assert model.u.type == "linear"
    assert model.q[-1] == 0.0
    weights, lead = coefficient_functions(model, [2.0, 6.0])
    np.testing.assert_allclose(weights[0], oscillation_to_decay.model_start.p, atol=1e-14)
    np.testing.assert_allclose(weights[1], oscillation_to_decay.model_end.p, atol=1e-14)
    np.testing.assert_array_equal(lead, 1.0)


def test_identical_models_reduce_to_constant_extension():
    grid = sample_function_1d(lambda x: np.cos(2.0 * x), 0.0, 4.0, 0.1)
    model = Model1D(m=2, n=1, p=[-1.0, 2.0 * np.cos(0.2)])
    spec = BlendSpec(model_start=model, model_end=model, x_start=0.0, x_end=8.0)
    assert not np.any(blend_models(spec).q)
    blended, _ = blend_extend(grid, spec, mu=1.0)
    plain, _ = extend_smooth_1d(grid, model, mu=1.0)
    np.testing.assert_allclose(blended.values, plain.values, rtol=1e-10, atol=1e-12)


def test_blend_of_zero_data_is_zero(zero_grid, oscillation_to_decay):
    extension, diagnostics = blend_extend(zero_grid, oscillation_to_decay)
    np.testing.assert_allclose(extension.values, 0.0, atol=1e-14)
    assert diagnostics.model_residual < 1e-12


def test_blend_extension_keeps_blended_identity(oscillation_to_decay):
    grid = sample_function_1d(lambda x: np.cos(x), 0.0, 4.0, 0.1)
    extension, diagnostics = blend_extend(grid, oscillation_to_decay, mu=0.1)
    assert extension.b == pytest.approx(8.0)
    assert diagnostics.model_residual < 1e-10


def test_blend_spec_validation():
    two = Model1D(m=2, p=[-1.0, 2.0])
    with pytest.raises(ValueError):
        BlendSpec(model_start=two, model_end=Model1D(m=1, p=[1.0]), x_start=0.0, x_end=1.0)
    with pytest.raises(ValueError):
        BlendSpec(model_start=two, model_end=two, x_start=1.0, x_end=1.0)

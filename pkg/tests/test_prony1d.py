import pytest
import numpy as np

from modelext.errors import InputError, PropagationOverflowError
from modelext.grid_io import sample_function_1d
from modelext.model1d import fit_model_1d
from modelext.models import BasisTerm, CoeffKind, ExponentialModel, Model1D
from modelext.prony1d import (
    build_real_basis, characteristic_roots, eval_exponential, extend_exponential, fit_exponential_sum,
    prony_extend, prony_fit,
)


def test_characteristic_roots_of_known_model():
    model = Model1D(m=2, p=[-0.77, 1.8])
    roots = np.sort(characteristic_roots(model).real)
    np.testing.assert_allclose(roots, [0.7, 1.1], atol=1e-12)


def test_characteristic_roots_need_constant_kind():
    model = Model1D(m=1, u=CoeffKind(type="linear"), p=[1.0], q=[1.0, 0.0])
    with pytest.raises(InputError):
        characteristic_roots(model)


def test_exact_recovery_of_two_exponentials(two_exponentials):
    """Test roots and extension for 2*(1.1)^x - 0.5*(0.7)^x"""
    fitted, extension = prony_extend(two_exponentials, 2, 10, 10.0, 20.0)
    np.testing.assert_allclose(np.sort(fitted.roots.real), [0.7, 1.1], atol=1e-8)
    truth = 2.0 * 1.1 ** extension.x - 0.5 * 0.7 ** extension.x
    np.testing.assert_allclose(extension.values, truth, rtol=1e-6)


def test_oscillation_uses_real_and_imaginary_parts():
    """Test that cos(x) gives one conjugate pair and is reproduced off the data"""
    grid = sample_function_1d(np.cos, 0.0, 6.0, 0.05)
    model = fit_model_1d(grid, 2, 10)
    fitted = prony_fit(grid, model)
    assert sorted(term.part for term in fitted.basis) == ["im", "re"]
    x = np.linspace(6.0, 12.0, 50)
    np.testing.assert_allclose(eval_exponential(fitted, x), np.cos(x), atol=1e-6)


def test_repeated_root_gives_polynomial_factor():
    grid = sample_function_1d(lambda x: (1.0 + x) * 0.9 ** x, 0.0, 5.0, 0.1)
    basis = build_real_basis([0.9, 0.9], grid)
    assert [term.power for term in basis] == [0, 1]
    fitted = fit_exponential_sum(grid, basis)
    assert eval_exponential(fitted, 7.0) == pytest.approx(8.0 * 0.9 ** 7.0, rel=1e-10)


def test_zero_root_is_dropped_and_flagged():
    grid = sample_function_1d(lambda x: 0.5 ** x, 0.0, 3.0, 0.1)
    basis = build_real_basis([0.0, 0.5], grid)
    assert len(basis) == 1
    assert any("zero root" in flag for flag in basis.flags)


def test_dependent_members_are_pruned():
    """Test that two roots giving identical columns on the nodes keep one member"""
    grid = sample_function_1d(lambda x: 2.0 ** x, 0.0, 3.0, 1.0)
    basis = build_real_basis([2.0, 2.0 + 1e-3], grid, cluster_tol=1e-6, prune_tol=1e-2)
    assert len(basis) == 1
    assert any("dependent" in flag for flag in basis.flags)


def test_negative_real_root_is_real_part():
    """Test that a negative root contributes Re(lambda^t), i.e. |lambda|^t cos(pi t)"""
    term = BasisTerm(root=(-0.5, 0.0))
    model = ExponentialModel(lambdas=[(-0.5, 0.0)], basis=[term], coeffs=[1.0])
    t = np.array([0.0, 1.0, 2.0, 0.5])
    expected = 0.5 ** t * np.cos(np.pi * t)
    np.testing.assert_allclose(eval_exponential(model, t), expected, atol=1e-15)


def test_empty_basis_rejected():
    grid = sample_function_1d(lambda x: 0.0 * x, 0.0, 1.0, 0.1)
    basis = build_real_basis([0.0], grid)
    with pytest.raises(InputError):
        fit_exponential_sum(grid, basis)


def test_overflow_is_reported():
    model = ExponentialModel(lambdas=[(1e10, 0.0)], basis=[BasisTerm(root=(1e10, 0.0))], coeffs=[1.0])
    with pytest.raises(PropagationOverflowError):
        eval_exponential(model, 1e3)


def test_eval_scalar_and_extend_grid():
    model = ExponentialModel(lambdas=[(2.0, 0.0)], basis=[BasisTerm(root=(2.0, 0.0))], coeffs=[3.0], d=0.5)
    assert eval_exponential(model, 1.0) == pytest.approx(12.0)
    grid = extend_exponential(model, 0.0, 1.0, 0.5)
    np.testing.assert_allclose(grid.values, [3.0, 6.0, 12.0])

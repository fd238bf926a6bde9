import pytest
import numpy as np
import scipy.linalg

from modelext.errors import ConvergenceError, InputError
from modelext.grid_io import SampledGrid2D, sample_function_2d
from modelext.models import Model2D
from modelext.smoothext2d import (
    ExtensionDomain2D, assemble_kkt, augmented_preconditioner, constraint_matrix, extend_smooth_2d, q_energy,
    q_operator,
)


def brute_force_minimizer(grid, model, domain, mu):
    """Dense null-space minimization of S + mu E under every window constraint."""
    C = constraint_matrix(domain.shape, model).toarray()
    D = q_operator(domain.shape).toarray()
    Z = scipy.linalg.null_space(C)
    nx, ny = grid.shape
    I, J = np.meshgrid(np.arange(nx) + domain.ox, np.arange(ny) + domain.oy, indexing="ij")
    W = np.eye(domain.nodes)[(I * domain.K + J).ravel()]
    f = grid.values.ravel()
    A = np.vstack([D @ Z, np.sqrt(mu) * W @ Z])
    b = np.concatenate([np.zeros(D.shape[0]), np.sqrt(mu) * f])
    g = Z @ np.linalg.lstsq(A, b, rcond=None)[0]
    return g, float(np.sum((D @ g) ** 2) + mu * np.sum((W @ g - f) ** 2))


@pytest.fixture
def small_problem():
    grid = sample_function_2d(lambda x, y: np.cos(x + 0.5 * y) + 0.1 * x * y, 0.0, 1.0, 0.25)
    model = Model2D(m=2, n=1, P=[[0.3, -0.8], [-0.6, 1.0]])
    domain = ExtensionDomain2D.around(grid, -0.5, 1.5)
    return grid, model, domain


def test_q_energy_vanishes_on_affine():
    i, j = np.meshgrid(np.arange(6.0), np.arange(7.0), indexing="ij")
    assert q_energy(2.0 + 3.0 * i - 0.5 * j) == pytest.approx(0.0, abs=1e-12)


def test_q_energy_of_product_grid():
    """Test that g = i j contributes exactly 1 per interior node"""
    i, j = np.meshgrid(np.arange(6.0), np.arange(6.0), indexing="ij")
    assert q_energy(i * j) == pytest.approx(16.0, abs=1e-12)


def test_q_energy_rejects_small_arrays():
    with pytest.raises(InputError):
        q_energy(np.ones((2, 5)))


def test_q_operator_reproduces_energy(rng):
    g = rng.standard_normal((7, 5))
    D = q_operator(g.shape)
    assert np.sum((D @ g.ravel()) ** 2) == pytest.approx(q_energy(g), rel=1e-12)


def test_constraint_rows_count():
    model = Model2D(m=3, n=2, P=np.eye(3).tolist())
    C = constraint_matrix((11, 11), model)
    assert C.shape == ((11 - 4) ** 2, 121)


def test_domain_around_data():
    grid = SampledGrid2D(x0=0.0, y0=0.0, h=0.1, values=np.zeros((41, 41)))
    domain = ExtensionDomain2D.around(grid, -2.0, 6.0)
    assert (domain.K, domain.ox, domain.oy) == (81, 20, 20)
    with pytest.raises(InputError):
        ExtensionDomain2D.around(grid, 1.0, 6.0)
    with pytest.raises(InputError):
        ExtensionDomain2D.around(grid, -2.05, 6.0)


def test_kkt_system_layout(small_problem):
    grid, model, domain = small_problem
    system = assemble_kkt(grid, model, domain, 100.0)
    assert system.nodes == 81
    assert system.constraints == 64
    assert system.matrix.shape == (145, 145)
    assert abs(system.matrix - system.matrix.T).max() == 0.0


def test_constant_data_window_sum_model(constant_grid_2d, window_sum_model):
    domain = ExtensionDomain2D.around(constant_grid_2d, -0.5, 1.5)
    extension, diagnostics = extend_smooth_2d(constant_grid_2d, window_sum_model, domain, rtol=1e-11)
    np.testing.assert_allclose(extension.values, 1.5, atol=1e-6)
    assert diagnostics.model_residual <= 1e-6


def test_zero_data_gives_zero(window_sum_model):
    grid = SampledGrid2D(x0=0.0, y0=0.0, h=1.0, values=np.zeros((4, 4)))
    extension, diagnostics = extend_smooth_2d(grid, window_sum_model, ExtensionDomain2D.around(grid, -1.0, 4.0))
    np.testing.assert_array_equal(extension.values, 0.0)
    assert diagnostics.iterations == 0


def test_direct_solver_matches_brute_force(small_problem):
    """Test the KKT solution against a dense null-space minimizer on a 9x9 lattice"""
    grid, model, domain = small_problem
    extension, diagnostics = extend_smooth_2d(grid, model, domain, mu=100.0, solver="direct")
    g, objective = brute_force_minimizer(grid, model, domain, 100.0)
    assert diagnostics.F == pytest.approx(objective, rel=1e-8)
    assert np.linalg.norm(extension.values.ravel() - g) <= 1e-6 * np.linalg.norm(g)


def test_minres_matches_brute_force(small_problem):
    grid, model, domain = small_problem
    extension, diagnostics = extend_smooth_2d(grid, model, domain, mu=100.0, rtol=1e-11)
    g, objective = brute_force_minimizer(grid, model, domain, 100.0)
    assert diagnostics.F == pytest.approx(objective, rel=1e-6)
    assert np.linalg.norm(extension.values.ravel() - g) <= 1e-5 * np.linalg.norm(g)
    assert diagnostics.iterations > 0
    assert diagnostics.model_residual <= 1e-6


def test_separable_data_in_model_is_kept(separable_grid, separable_model):
    """Test that in-model data is approximated closely on the data square"""
    domain = ExtensionDomain2D.around(separable_grid, 0.0, 1.5)
    extension, diagnostics = extend_smooth_2d(separable_grid, separable_model, domain, mu=1e8, solver="direct")
    inner = extension.values[:11, :11]
    np.testing.assert_allclose(inner, separable_grid.values, rtol=1e-3)
    assert diagnostics.model_residual <= 1e-8


def test_iteration_cap_raises(small_problem):
    grid, model, domain = small_problem
    with pytest.raises(ConvergenceError):
        extend_smooth_2d(grid, model, domain, rtol=1e-14, max_iter=1)


def test_default_tolerances_are_met(small_problem):
    """Test that the reported solver residual and window residual respect their bounds"""
    grid, model, domain = small_problem
    _, diagnostics = extend_smooth_2d(grid, model, domain)
    assert diagnostics.solver_residual <= 1e-8
    assert diagnostics.model_residual <= 1e-6


def test_unreachable_constraint_bound_raises(small_problem):
    grid, model, domain = small_problem
    with pytest.raises(ConvergenceError) as excinfo:
        extend_smooth_2d(grid, model, domain, constraint_tol=1e-30)
    assert "model constraints" in str(excinfo.value)


def test_augmented_preconditioner_spectrum(small_problem):
    """Test that the preconditioned KKT matrix has eigenvalue 1 per node and the rest in (-1, 0)"""
    grid, model, domain = small_problem
    system = assemble_kkt(grid, model, domain, 100.0)
    size = system.matrix.shape[0]
    M = augmented_preconditioner(system).matmat(np.eye(size))
    np.testing.assert_allclose(M, M.T, atol=1e-8 * np.abs(M).max())
    eig = np.linalg.eigvals(M @ system.matrix.toarray()).real
    ones = np.abs(eig - 1.0) < 1e-6
    assert ones.sum() == system.nodes
    assert np.all(eig[~ones] < 0.0)
    assert np.all(eig[~ones] > -1.0 - 1e-8)


def test_transposed_data_gives_transposed_extension(small_problem):
    grid, model, domain = small_problem
    extension, _ = extend_smooth_2d(grid, model, domain, solver="direct")
    flipped = SampledGrid2D(x0=grid.y0, y0=grid.x0, h=grid.h, values=grid.values.T)
    flipped_model = Model2D(m=model.m, n=model.n, P=model.array.T.tolist())
    transposed, _ = extend_smooth_2d(flipped, flipped_model, ExtensionDomain2D.around(flipped, -0.5, 1.5),
                                     solver="direct")
    np.testing.assert_allclose(transposed.values, extension.values.T, atol=1e-10)


def test_unknown_solver(small_problem):
    grid, model, domain = small_problem
    with pytest.raises(InputError):
        extend_smooth_2d(grid, model, domain, solver="cholesky")

"""Bivariate approximation-extension.

Minimizes ``F(g) = S(g) + mu E(g)`` over lattice functions on the target
square subject to the model holding at every full window, through the
equality-constrained KKT system

    [ H  C^T ] [g]   [mu W^T f]
    [ C   0  ] [l] = [   0    ]

with ``H = D^T D + mu W^T W`` (``||D g||^2 = S(g)``), solved by MINRES under an
augmented-Lagrangian block preconditioner.
"""
import logging
from typing import NamedTuple, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, Field
from scipy.sparse.linalg import LinearOperator, splu, spsolve

from .config import DEFAULTS
from .errors import ConvergenceError, InputError
from .grid_io import SampledGrid2D, node_count
from .model2d import window_placements
from .models import Model2D, SmoothExtensionDiagnostics
from .numerics import solve_symmetric_indefinite, sparse_symmetric

logger = logging.getLogger("modelext.smoothext2d")

AUGMENTATION = 1e3
_POLISH_ROUNDS = 3
_RTOL_FLOOR = 1e-14


class ExtensionDomain2D(BaseModel):
    """Target lattice ``lo + (i, j) h`` with the data block at offset ``(ox, oy)``."""
    lo: float
    hi: float
    h: float = Field(gt=0)
    K: int = Field(ge=3)
    ox: int = Field(ge=0)
    oy: int = Field(ge=0)

    @classmethod
    def around(cls, grid: SampledGrid2D, lo: float, hi: float) -> "ExtensionDomain2D":
        K = node_count(lo, hi, grid.h) + 1
        offsets = []
        for origin in (grid.x0, grid.y0):
            ratio = (origin - lo) / grid.h
            offset = int(round(ratio))
            if abs(ratio - offset) > 1e-9 * max(1.0, abs(ratio)):
                raise InputError(f"data origin {origin} is not on the target lattice from {lo} with mesh {grid.h}")
            offsets.append(offset)
        ox, oy = offsets
        nx, ny = grid.shape
        if ox < 0 or oy < 0 or ox + nx > K or oy + ny > K:
            raise InputError(f"target square [{lo}, {hi}]^2 does not contain the data")
        return cls(lo=lo, hi=hi, h=grid.h, K=K, ox=ox, oy=oy)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.K, self.K

    @property
    def nodes(self) -> int:
        return self.K * self.K


class KktSystem(NamedTuple):
    matrix: sp.csr_matrix
    rhs: np.ndarray
    D: sp.csr_matrix
    C: sp.csr_matrix
    data_index: np.ndarray  # flat target indices of the data nodes (row-major data order)
    mu: float

    @property
    def nodes(self) -> int:
        return self.D.shape[1]

    @property
    def constraints(self) -> int:
        return self.C.shape[0]


def _dxy(g: np.ndarray) -> np.ndarray:
    """``Dxy[s-1, t-1] = g[s,t] - g[s-1,t] - g[s,t-1] + g[s-1,t-1]`` for s, t >= 1."""
    return g[1:, 1:] - g[:-1, 1:] - g[1:, :-1] + g[:-1, :-1]


def q_energy(g) -> float:
    """S(g): sum of Qg over interior nodes."""
    g = np.asarray(g, dtype=float)
    if g.ndim != 2 or min(g.shape) < 3:
        raise InputError(f"Q-energy needs an array of at least 3x3, got shape {g.shape}")
    dxx = g[:-2, 1:-1] - 2 * g[1:-1, 1:-1] + g[2:, 1:-1]
    dyy = g[1:-1, :-2] - 2 * g[1:-1, 1:-1] + g[1:-1, 2:]
    dxy = _dxy(g)
    cross = dxy[:-1, :-1] ** 2 + dxy[1:, :-1] ** 2 + dxy[:-1, 1:] ** 2 + dxy[1:, 1:] ** 2
    return float(np.sum(dxx ** 2) + np.sum(dyy ** 2) + 0.25 * np.sum(cross))


def q_operator(shape: Tuple[int, int]) -> sp.csr_matrix:
    """Sparse ``D`` with ``||D g.ravel()||^2 == q_energy(g)`` (row-major nodes)."""
    kx, ky = shape
    if min(kx, ky) < 3:
        raise InputError(f"Q-operator needs a lattice of at least 3x3, got {shape}")
    node = np.arange(kx * ky).reshape(kx, ky)
    I, J = np.meshgrid(np.arange(1, kx - 1), np.arange(1, ky - 1), indexing="ij")
    I, J = I.ravel(), J.ravel()
    count = I.size

    rows, cols, vals = [], [], []
    offset = 0

    def add(stencil, weight):
        nonlocal offset
        for (di, dj), coeff in stencil:
            rows.append(offset + np.arange(count))
            cols.append(node[I + di, J + dj])
            vals.append(np.full(count, weight * coeff))
        offset += count

    add([((-1, 0), 1.0), ((0, 0), -2.0), ((1, 0), 1.0)], 1.0)
    add([((0, -1), 1.0), ((0, 0), -2.0), ((0, 1), 1.0)], 1.0)
    for a in (0, 1):
        for b in (0, 1):
            add([((a, b), 1.0), ((a - 1, b), -1.0), ((a, b - 1), -1.0), ((a - 1, b - 1), 1.0)], 0.5)

    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(offset, kx * ky),
    )


def constraint_matrix(shape: Tuple[int, int], model: Model2D) -> sp.csr_matrix:
    """One row per full model window on the lattice, row-major placements."""
    m, n = model.m, model.n
    P = model.array
    pi, pj = window_placements(shape, m, n)
    count = pi * pj
    if count < 1:
        raise InputError(f"no full {m}x{m} window (stride {n}) fits a {shape[0]}x{shape[1]} lattice")
    I, J = np.meshgrid(np.arange(pi), np.arange(pj), indexing="ij")
    I, J = I.ravel(), J.ravel()
    rows, cols, vals = [], [], []
    for k in range(m):
        for l in range(m):
            if P[k, l] == 0.0:
                continue
            rows.append(np.arange(count))
            cols.append((I + k * n) * shape[1] + (J + l * n))
            vals.append(np.full(count, P[k, l]))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(count, shape[0] * shape[1]),
    )


def assemble_kkt(grid: SampledGrid2D, model: Model2D, domain: ExtensionDomain2D, mu: float) -> KktSystem:
    if not mu > 0:
        raise InputError(f"mu must be positive, got {mu}")
    if abs(domain.h - grid.h) > 1e-12 * grid.h:
        raise InputError(f"domain mesh {domain.h} differs from data mesh {grid.h}")

    D = q_operator(domain.shape)
    C = constraint_matrix(domain.shape, model)
    nx, ny = grid.shape
    I, J = np.meshgrid(np.arange(nx) + domain.ox, np.arange(ny) + domain.oy, indexing="ij")
    data_index = (I * domain.K + J).ravel()

    mask = np.zeros(domain.nodes)
    mask[data_index] = 1.0
    H = (D.T @ D + mu * sp.diags(mask)).tocsr()
    rhs = np.zeros(domain.nodes + C.shape[0])
    rhs[data_index] = mu * grid.values.ravel()

    # upper triangle: triu(H) and the C^T block right of it
    upper_H = sp.triu(H).tocoo()
    coupling = C.tocoo()
    matrix = sparse_symmetric(
        domain.nodes + C.shape[0],
        np.concatenate([upper_H.row, coupling.col]),
        np.concatenate([upper_H.col, domain.nodes + coupling.row]),
        np.concatenate([upper_H.data, coupling.data]),
    )
    logger.debug(f"KKT system: {domain.nodes} nodes + {C.shape[0]} constraints, nnz {matrix.nnz}")
    return KktSystem(matrix=matrix, rhs=rhs, D=D, C=C, data_index=data_index, mu=mu)


def _diagonal_scaling(system: KktSystem) -> np.ndarray:
    nodes = system.nodes
    diag = system.matrix.diagonal()[:nodes]
    node_scale = 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0))
    scaled_C = system.C @ sp.diags(node_scale)
    row_norms = np.sqrt(np.asarray(scaled_C.multiply(scaled_C).sum(axis=1)).ravel())
    mult_scale = 1.0 / np.where(row_norms > 0, row_norms, 1.0)
    return np.concatenate([node_scale, mult_scale])


def augmented_preconditioner(system: KktSystem, gamma: float = AUGMENTATION) -> LinearOperator:
    """SPD block preconditioner ``S diag((H~ + gamma C~^T C~)^-1, gamma I) S``.

    ``H~``, ``C~`` are the diagonally scaled blocks. The preconditioned KKT
    matrix has eigenvalue 1 with multiplicity the node count; the remaining
    one per constraint lie in ``(-1, 0)`` and cluster at -1 as ``gamma`` grows.
    """
    nodes = system.nodes
    scale = _diagonal_scaling(system)
    S_nodes = sp.diags(scale[:nodes])
    H = system.matrix[:nodes, :nodes]
    C = sp.diags(scale[nodes:]) @ system.C @ S_nodes
    augmented = (S_nodes @ H @ S_nodes + gamma * (C.T @ C)).tocsc()
    lu = splu(augmented, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})

    def apply(r):
        y = scale * np.ravel(r)
        return scale * np.concatenate([lu.solve(y[:nodes]), gamma * y[nodes:]])

    size = system.matrix.shape[0]
    return LinearOperator((size, size), matvec=apply, dtype=float)


def _constraint_residual(system: KktSystem, model: Model2D, g: np.ndarray) -> float:
    scale = np.sum(np.abs(model.array)) * np.max(np.abs(g), initial=0.0)
    return float(np.max(np.abs(system.C @ g), initial=0.0) / scale) if scale > 0 else 0.0


def extend_smooth_2d(
    grid: SampledGrid2D, model: Model2D, domain: ExtensionDomain2D, mu: float = 100.0,
    rtol: float = DEFAULTS.rtol, max_iter: Optional[int] = None, solver: str = "minres",
    constraint_tol: float = DEFAULTS.constraint_tol,
) -> Tuple[SampledGrid2D, SmoothExtensionDiagnostics]:
    """Approximate the data and extend it over the target square.

    Args:
        grid (SampledGrid2D): The data on the inner square.
        model (Model2D): Model imposed on every full window of the target lattice.
        domain (ExtensionDomain2D): The target lattice.
        mu (float, optional): Data weight. Defaults to 100.
        rtol (float, optional): Relative residual target ``||K x - b|| / ||b||``. Defaults to 1e-8.
        max_iter (int, optional): Iteration cap over all MINRES runs; defaults to 10 x unknowns.
        solver (str, optional): "minres" (preconditioned) or "direct" (sparse LU). Defaults to "minres".
        constraint_tol (float, optional): Bound on the relative window residual. Defaults to 1e-6.

    Returns:
        Tuple[SampledGrid2D, SmoothExtensionDiagnostics]: The extension and its energies,
        iterations and residuals.

    Raises:
        ConvergenceError: MINRES missed ``rtol`` or the constraints miss ``constraint_tol``.
    """
    if solver not in ("minres", "direct"):
        raise InputError(f"unknown solver {solver!r}; expected 'minres' or 'direct'")
    system = assemble_kkt(grid, model, domain, mu)
    nodes = system.nodes
    if max_iter is None:
        max_iter = DEFAULTS.max_iter_factor * system.matrix.shape[0]

    if solver == "minres":
        preconditioner = augmented_preconditioner(system)
        result = solve_symmetric_indefinite(system.matrix, system.rhs, rtol=rtol, max_iter=max_iter,
                                            preconditioner=preconditioner)
        target = rtol
        for _ in range(_POLISH_ROUNDS):
            if not result.converged:
                break
            violation = _constraint_residual(system, model, result.x[:nodes])
            if violation <= constraint_tol:
                break
            target = max(target * min(1e-2, 0.1 * constraint_tol / violation), _RTOL_FLOOR)
            logger.debug(f"constraints at {violation:.2e}, re-solving to residual {target:.1e}")
            spent = result.iterations
            polished = solve_symmetric_indefinite(system.matrix, system.rhs, rtol=target, max_iter=max_iter - spent,
                                                  preconditioner=preconditioner, x0=result.x)
            # restarts only accept improvements, so the user rtol still holds
            result = polished._replace(iterations=polished.iterations + spent, converged=polished.residual <= rtol)
        if not result.converged:
            raise ConvergenceError("MINRES did not converge on the KKT system", result.residual, result.iterations)
        x, iterations = result.x, result.iterations
    else:
        scale = _diagonal_scaling(system)
        S = sp.diags(scale)
        scaled = (S @ system.matrix @ S).tocsc()
        x, iterations = scale * spsolve(scaled, scale * system.rhs), 0

    g = x[:nodes]
    rhs_norm = np.linalg.norm(system.rhs)
    solver_residual = float(np.linalg.norm(system.matrix @ x - system.rhs) / rhs_norm) if rhs_norm > 0 else 0.0
    constraint_residual = _constraint_residual(system, model, g)
    if not np.all(np.isfinite(g)) or constraint_residual > constraint_tol:
        raise ConvergenceError(
            f"model constraints hold only to {constraint_residual:.2e} relative (bound {constraint_tol:.1e})",
            solver_residual, iterations,
        )

    values = g.reshape(domain.shape)
    S_value = float(np.sum((system.D @ g) ** 2))
    E_value = float(np.sum((grid.values.ravel() - g[system.data_index]) ** 2))
    diagnostics = SmoothExtensionDiagnostics(
        S=S_value, E=E_value, F=S_value + mu * E_value, mu=mu,
        model_residual=constraint_residual, iterations=iterations, solver_residual=solver_residual,
        unknowns=system.matrix.shape[0], constraints=system.constraints,
    )
    logger.info(f"2-D extension on {domain.K}x{domain.K}: F={diagnostics.F:.4e}, {iterations} iterations")
    return SampledGrid2D(x0=domain.lo, y0=domain.lo, h=domain.h, values=values), diagnostics

"""Constant-coefficient extension by exponential sums.

1. fit a constant-coefficient model, 2. take the roots of its
characteristic polynomial, 3. least-squares fit a real combination of the
corresponding powers and evaluate it anywhere.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .config import DEFAULTS
from .errors import InputError, PropagationOverflowError
from .grid_io import SampledGrid1D, node_count
from .model1d import fit_model_1d
from .models import BasisTerm, ExponentialModel, Model1D
from .numerics import cluster_roots, polynomial_roots, solve_least_squares_full

logger = logging.getLogger("modelext.prony1d")

# log of the largest magnitude we allow |lambda|^t to reach
_MAX_LOG = np.log(np.finfo(float).max) - 1.0


def characteristic_roots(model: Model1D) -> np.ndarray:
    """Roots of ``sum_k p_k z^(k-1) - z^m``; powers are per model lag ``d = n h``."""
    if not model.u.is_constant:
        raise InputError("characteristic roots are only defined for constant coefficients")
    return polynomial_roots(np.concatenate([model.p_array, [-1.0]]))


class RealBasis(list):
    """Basis descriptors plus the root bookkeeping they came from."""

    def __init__(self, terms, lambdas, clusters, flags):
        super().__init__(terms)
        self.lambdas = lambdas
        self.clusters = clusters
        self.flags = flags


def _term_values(term: BasisTerm, t: np.ndarray) -> np.ndarray:
    lam = term.root_complex
    log_lam = np.log(lam + 0j)
    if np.any(t * log_lam.real > _MAX_LOG):
        bad = t[np.argmax(t * log_lam.real > _MAX_LOG)]
        raise PropagationOverflowError(f"|{lam:.6g}|^t overflows", float(bad))
    powered = np.exp(t * log_lam)
    part = powered.real if term.part == "re" else powered.imag
    return t ** term.power * part if term.power else part


def evaluation_matrix(terms: Sequence[BasisTerm], t: np.ndarray) -> np.ndarray:
    return np.column_stack([_term_values(term, t) for term in terms]) if terms else np.empty((t.size, 0))


def build_real_basis(lambdas, grid: SampledGrid1D, d: float = 1.0,
                     cluster_tol: float = DEFAULTS.cluster_tol,
                     prune_tol: float = DEFAULTS.prune_tol,
                     domain: Optional[Tuple[float, float]] = None) -> RealBasis:
    """Real basis functions for the given roots, pruned on the data nodes.

    Real roots give ``Re lambda^t``; a conjugate pair gives ``Re`` and ``Im``
    of ``lambda^t`` for its upper member; a cluster of multiplicity r gives
    ``t^j lambda^t``, j < r. Here ``t = (x - a) / d`` and powers use the
    principal logarithm. Members that are numerically dependent on the data
    nodes (pivoted QR diagonal below ``prune_tol`` relative) are dropped.
    """
    roots = np.asarray(lambdas, dtype=complex)
    labels = cluster_roots(roots, cluster_tol)
    flags: List[str] = []
    terms: List[BasisTerm] = []

    for label in sorted(set(labels)):
        members = roots[[i for i, lab in enumerate(labels) if lab == label]]
        lam = members.mean()
        if abs(lam) < cluster_tol:
            flags.append(f"zero root dropped (multiplicity {members.size}): lambda^t vanishes for t > 0")
            logger.warning(flags[-1])
            continue
        real = abs(lam.imag) <= 1e-10 * max(1.0, abs(lam))
        if not real and lam.imag < 0:
            continue  # represented by its conjugate
        root = (float(lam.real), 0.0 if real else float(lam.imag))
        for power in range(members.size):
            terms.append(BasisTerm(root=root, power=power, part="re"))
            if not real:
                terms.append(BasisTerm(root=root, power=power, part="im"))

    t = (grid.x - grid.a) / d
    if domain is not None:
        t_check = (np.asarray(domain, dtype=float) - grid.a) / d
        evaluation_matrix(terms, t_check)

    if terms:
        V = evaluation_matrix(terms, t)
        _, R, perm = scipy.linalg.qr(V, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        keep = diag > prune_tol * diag[0] if diag.size and diag[0] > 0 else np.zeros(len(terms), bool)
        kept = sorted(perm[: int(np.sum(keep))])
        if len(kept) < len(terms):
            flags.append(f"dropped {len(terms) - len(kept)} dependent basis member(s)")
            logger.warning(flags[-1])
        terms = [terms[k] for k in kept]

    lambda_pairs = [(float(r.real), float(r.imag)) for r in roots]
    return RealBasis(terms, lambda_pairs, labels, flags)


def fit_exponential_sum(grid: SampledGrid1D, basis: RealBasis, d: float = 1.0) -> ExponentialModel:
    """Least-squares coefficients of the basis against the grid values."""
    if not len(basis):
        raise InputError("basis is empty after pruning")
    if grid.values.size < len(basis):
        raise InputError(f"{grid.values.size} nodes cannot determine {len(basis)} basis coefficients")
    t = (grid.x - grid.a) / d
    V = evaluation_matrix(basis, t)
    result = solve_least_squares_full(V, grid.values)
    if result.rank_deficient:
        raise InputError(f"degenerate basis: rank {result.rank} < {len(basis)}")
    return ExponentialModel(
        lambdas=basis.lambdas, clusters=basis.clusters, basis=list(basis), coeffs=result.x.tolist(),
        origin=grid.a, d=d, flags=basis.flags,
    )


def eval_exponential(model: ExponentialModel, x):
    t = (np.atleast_1d(np.asarray(x, dtype=float)) - model.origin) / model.d
    try:
        values = evaluation_matrix(model.basis, t) @ np.asarray(model.coeffs)
    except PropagationOverflowError as e:
        raise PropagationOverflowError("exponential sum overflows", model.origin + e.where * model.d) from None
    return values if np.ndim(x) else float(values[0])


def extend_exponential(model: ExponentialModel, lo: float, hi: float, h: float) -> SampledGrid1D:
    N = node_count(lo, hi, h)
    x = lo + h * np.arange(N + 1)
    return SampledGrid1D(a=lo, h=h, values=eval_exponential(model, x))


def prony_fit(grid: SampledGrid1D, model: Model1D, **kwargs) -> ExponentialModel:
    d = model.n * grid.h
    roots = characteristic_roots(model)
    basis = build_real_basis(roots, grid, d=d, **kwargs)
    fitted = fit_exponential_sum(grid, basis, d=d)
    logger.info(f"exponential fit with {len(basis)} basis functions, d={d}")
    return fitted


def prony_extend(grid: SampledGrid1D, m: int, n: int, lo: float, hi: float,
                 h: Optional[float] = None) -> Tuple[ExponentialModel, SampledGrid1D]:
    """Fit a constant model, reconstruct the exponential sum and sample it on [lo, hi]."""
    model = fit_model_1d(grid, m, n)
    fitted = prony_fit(grid, model)
    return fitted, extend_exponential(fitted, lo, hi, h or grid.h)

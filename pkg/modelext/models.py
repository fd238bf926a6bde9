from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from .errors import InputError


class CoeffKind(BaseModel):
    """Variation of the model coefficients: ``p_k + q_k u(x)``."""
    type: Literal["const", "linear", "rational"] = "const"
    alpha: float = 1.0  # only used by "rational": u(x) = 1/(x + alpha)

    @property
    def is_constant(self) -> bool:
        return self.type == "const"

    def u(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.type == "const":
            return np.zeros_like(x)
        if self.type == "linear":
            return x.copy()
        return 1.0 / (x + self.alpha)

    def has_pole_in(self, lo: float, hi: float) -> bool:
        return self.type == "rational" and lo <= -self.alpha <= hi

    @classmethod
    def parse(cls, text: str) -> "CoeffKind":
        """Parse ``const``, ``linear`` or ``rational[:alpha]``."""
        name, _, alpha = text.partition(":")
        name = name.strip().lower()
        if name not in ("const", "linear", "rational"):
            raise InputError(f"unknown coefficient kind {text!r}; expected const, linear or rational[:alpha]")
        if name == "rational" and alpha:
            try:
                shift = float(alpha)
            except ValueError:
                raise InputError(f"rational shift must be a number, got {alpha!r}") from None
            return cls(type="rational", alpha=shift)
        return cls(type=name)


class FitDiagnostics(BaseModel):
    objective: float  # I1 or I2 at the returned coefficients
    rows: int
    unknowns: int
    rank: int
    rank_deficient: bool = False
    degenerate: bool = False


class Model1D(BaseModel):
    """Linear prediction model
    ``[1 + q_{m+1} u(x_i)] f_i = sum_k [p_k + q_k u(x_i)] f_{i-(m-k+1)n}``.
    """
    kind: Literal["model1d"] = "model1d"
    m: int = Field(ge=1)
    n: int = Field(1, ge=1)
    u: CoeffKind = Field(default_factory=CoeffKind)
    p: List[float]
    q: List[float] = Field(default_factory=list)
    diagnostics: Optional[FitDiagnostics] = Field(None, exclude=True)

    @model_validator(mode="after")
    def _check_shapes(self):
        if len(self.p) != self.m:
            raise ValueError(f"p must have m={self.m} entries, got {len(self.p)}")
        if not self.q:
            self.q = [0.0] * (self.m + 1)
        if len(self.q) != self.m + 1:
            raise ValueError(f"q must have m+1={self.m + 1} entries, got {len(self.q)}")
        if self.u.is_constant and any(v != 0.0 for v in self.q):
            raise ValueError("a constant-coefficient model must have q == 0")
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.q))):
            raise ValueError("model coefficients must be finite")
        return self

    @property
    def p_array(self) -> np.ndarray:
        return np.asarray(self.p, dtype=float)

    @property
    def q_array(self) -> np.ndarray:
        return np.asarray(self.q, dtype=float)

    @property
    def span(self) -> int:
        """Index distance between the predicted value and its oldest lag."""
        return self.m * self.n


class Model2D(BaseModel):
    """Bivariate model ``sum_{k,l} P[k,l] f_{i+(k-1)n, j+(l-1)n} = 0`` with ``P[m,m] = 1``."""
    kind: Literal["model2d"] = "model2d"
    m: int = Field(ge=2)
    n: int = Field(1, ge=1)
    P: List[List[float]]
    diagnostics: Optional[FitDiagnostics] = Field(None, exclude=True)

    @model_validator(mode="after")
    def _check_shape(self):
        arr = np.asarray(self.P, dtype=float)
        if arr.shape != (self.m, self.m):
            raise ValueError(f"P must be {self.m}x{self.m}, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("P entries must be finite")
        if arr[-1, -1] != 1.0:
            raise ValueError("P must be normalized with P[m,m] = 1")
        return self

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.P, dtype=float)

    def transposed(self) -> "Model2D":
        return Model2D(m=self.m, n=self.n, P=self.array.T.tolist())


class BasisTerm(BaseModel):
    """One real basis function ``t^power * Re|Im(root^t)``."""
    root: Tuple[float, float]
    power: int = 0
    part: Literal["re", "im"] = "re"

    @property
    def root_complex(self) -> complex:
        return complex(self.root[0], self.root[1])


class ExponentialModel(BaseModel):
    kind: Literal["expsum"] = "expsum"
    lambdas: List[Tuple[float, float]]
    clusters: List[int] = Field(default_factory=list)
    basis: List[BasisTerm]
    coeffs: List[float] = Field(default_factory=list)
    origin: float = 0.0
    d: float = Field(1.0, gt=0)
    flags: List[str] = Field(default_factory=list)

    @field_validator("coeffs")
    @classmethod
    def _finite(cls, v):
        if not np.all(np.isfinite(v)):
            raise ValueError("coefficients must be finite")
        return v

    @property
    def roots(self) -> np.ndarray:
        return np.array([complex(re, im) for re, im in self.lambdas])


class NoiseSpec(BaseModel):
    amplitude: float = Field(0.0, ge=0)
    seed: int = Field(0, ge=0, lt=2 ** 64)


class ExtensionRange1D(BaseModel):
    n0: int = Field(0, le=0)
    n1: int = Field(ge=0)

    def check(self, N: int) -> None:
        if self.n1 < N:
            raise ValueError(f"extension range end n1={self.n1} must cover the data (N={N})")

    @property
    def size(self) -> int:
        return self.n1 - self.n0 + 1


class BlendSpec(BaseModel):
    model_start: Model1D
    model_end: Model1D
    x_start: float
    x_end: float

    @model_validator(mode="after")
    def _check_pair(self):
        for model in (self.model_start, self.model_end):
            if not model.u.is_constant:
                raise ValueError("only constant-coefficient models can be blended")
        if self.model_start.m != self.model_end.m:
            raise ValueError(f"model orders differ: {self.model_start.m} != {self.model_end.m}")
        if self.model_start.n != self.model_end.n:
            raise ValueError(f"model strides differ: {self.model_start.n} != {self.model_end.n}")
        if not self.x_end > self.x_start:
            raise ValueError("x_end must be greater than x_start")
        return self


class SmoothExtensionDiagnostics(BaseModel):
    S: float  # smoothness energy (S_p in 1-D, Q-energy in 2-D)
    E: float
    F: float
    mu: float
    rank: int = 0
    rank_deficient: bool = False
    condition: float = 0.0
    model_residual: float = 0.0
    iterations: int = 0
    solver_residual: float = 0.0
    unknowns: int = 0
    constraints: int = 0

    def report(self) -> Dict[str, float]:
        return self.model_dump()


class SplineFitDiagnostics(BaseModel):
    basis_size: int
    rank: int
    rank_deficient: bool = False
    rms: float = 0.0
    condition: float = 0.0  # sigma_max / sigma_min of the least-squares matrix
    strategy: str = "fit-then-propagate"

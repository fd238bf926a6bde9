"""Sample grids, the f1-f4 test functions, seeded noise and file formats."""
import json
import logging
from pathlib import Path
from typing import Annotated, Callable, Optional, Tuple, Union

import numpy as np
import pandas as pd
import polars as pl
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, field_validator

from .errors import GridFormatError, InputError
from .models import ExponentialModel, Model1D, Model2D, NoiseSpec

logger = logging.getLogger("modelext.grid_io")

ModelFile = Annotated[Union[Model1D, Model2D, ExponentialModel], Field(discriminator="kind")]
_model_adapter = TypeAdapter(ModelFile)

TEST_FUNCTIONS_1D = ("f1", "f2")
TEST_FUNCTIONS_2D = ("f3", "f4")

# splitmix64 constants
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = 0xFFFFFFFFFFFFFFFF


class SampledGrid1D(BaseModel):
    """Values ``values[k]`` at ``x = a + k h``, ``k = 0..N``."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    a: float
    h: float = Field(gt=0)
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _coerce(cls, v):
        arr = np.array(v, dtype=float)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError(f"1-D grid needs at least 2 values, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("grid values must be finite")
        return arr

    @property
    def N(self) -> int:
        return self.values.size - 1

    @property
    def b(self) -> float:
        return self.a + self.N * self.h

    @property
    def x(self) -> np.ndarray:
        return self.a + self.h * np.arange(self.values.size)

    @classmethod
    def from_frame(cls, df: Union[pd.DataFrame, pl.DataFrame]) -> "SampledGrid1D":
        """Build a grid from a pandas or polars frame with columns ``x`` and ``value``."""
        if isinstance(df, pl.DataFrame):
            df = df.to_pandas()
        missing = {"x", "value"} - set(df.columns)
        if missing:
            raise InputError(f"frame is missing columns: {sorted(missing)}")
        x = df["x"].to_numpy(dtype=float)
        if x.size < 2:
            raise InputError("a grid needs at least two nodes")
        h = (x[-1] - x[0]) / (x.size - 1)
        if h <= 0 or not np.allclose(np.diff(x), h, rtol=1e-9, atol=1e-12 * max(1.0, abs(x).max())):
            raise InputError("x column must be uniformly increasing")
        return cls(a=float(x[0]), h=float(h), values=df["value"].to_numpy(dtype=float))

    def to_frame(self, backend: str = "pandas") -> Union[pd.DataFrame, pl.DataFrame]:
        df = pd.DataFrame({"x": self.x, "value": self.values})
        if backend == "polars":
            return pl.from_pandas(df)
        return df


class SampledGrid2D(BaseModel):
    """Values ``values[i, j]`` at ``(x0 + i h, y0 + j h)``."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x0: float
    y0: float
    h: float = Field(gt=0)
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _coerce(cls, v):
        arr = np.array(v, dtype=float)
        if arr.ndim != 2 or min(arr.shape) < 2:
            raise ValueError(f"2-D grid needs at least 2x2 values, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("grid values must be finite")
        return arr

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.values.shape[0])

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.h * np.arange(self.values.shape[1])


def _f1(x):
    return 0.8 ** x - np.cos(x) + 2 * np.sin(2 * x) + 1 / (x + 1)


def _f2(x):
    return 5 * np.cos(2 * x) / (x ** 2 + 1) + x ** 1.5 * np.sin(x)


def _f3(x, y):
    return 0.4 * np.cos(4 * (x + y)) + 0.6 * y * np.sin(3 * (x - y)) - (x - 2) ** 2


def _f4(x, y):
    return x ** 2 - y ** 3 + 2 + x - y + 20 * np.exp(-(x - 2) ** 2)


def eval_test_function(name: str, x, y=None):
    """Evaluate one of the test functions f1-f4 (vectorized)."""
    x = np.asarray(x, dtype=float)
    if name in TEST_FUNCTIONS_1D:
        if y is not None:
            raise InputError(f"{name} is univariate; y must not be given")
        if name == "f2" and np.any(x < 0):
            raise InputError("f2 is undefined for x < 0 (x^1.5)")
        out = _f1(x) if name == "f1" else _f2(x)
    elif name in TEST_FUNCTIONS_2D:
        if y is None:
            raise InputError(f"{name} is bivariate; y is required")
        y = np.asarray(y, dtype=float)
        out = _f3(x, y) if name == "f3" else _f4(x, y)
    else:
        raise InputError(f"unknown test function {name!r}; expected one of f1, f2, f3, f4")
    return out if np.ndim(out) else float(out)


def splitmix64(seed: int, count: int) -> np.ndarray:
    """First ``count`` outputs of splitmix64 started at ``seed``, as uint64."""
    out = np.empty(count, dtype=np.uint64)
    state = seed & _MASK
    for k in range(count):
        state = (state + _GOLDEN) & _MASK
        z = state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        out[k] = z ^ (z >> 31)
    return out


def noise_stream(noise: NoiseSpec, count: int) -> np.ndarray:
    """Uniform noise on ``[-amplitude, amplitude]``; a pure function of (seed, index)."""
    if noise.amplitude == 0.0:
        return np.zeros(count)
    u = (splitmix64(noise.seed, count) >> np.uint64(11)).astype(float) / float(1 << 53)
    return noise.amplitude * (2.0 * u - 1.0)


def node_count(a: float, b: float, h: float) -> int:
    """Number of intervals ``N = (b - a) / h``; rejects non-integral meshes."""
    if not b > a:
        raise InputError(f"need b > a, got a={a}, b={b}")
    if not h > 0:
        raise InputError(f"mesh size must be positive, got {h}")
    ratio = (b - a) / h
    N = int(round(ratio))
    if N < 1 or abs(ratio - N) > max(0.5 * np.spacing(ratio), 1e-9 * ratio):
        raise InputError(f"(b - a) / h = {ratio!r} is not an integer")
    return N


def sample_function_1d(func: Callable, a: float, b: float, h: float,
                       noise: Optional[NoiseSpec] = None) -> SampledGrid1D:
    noise = noise or NoiseSpec()
    N = node_count(a, b, h)
    x = a + h * np.arange(N + 1)
    values = np.asarray(func(x), dtype=float) + noise_stream(noise, N + 1)
    return SampledGrid1D(a=a, h=h, values=values)


def sample_1d(name: str, a: float, b: float, h: float, noise: Optional[NoiseSpec] = None) -> SampledGrid1D:
    if name not in TEST_FUNCTIONS_1D:
        raise InputError(f"{name} is not a univariate test function")
    if name == "f2" and a < 0:
        raise InputError("f2 cannot be sampled below 0")
    return sample_function_1d(lambda x: eval_test_function(name, x), a, b, h, noise)


def sample_function_2d(func: Callable, a: float, b: float, h: float,
                       noise: Optional[NoiseSpec] = None) -> SampledGrid2D:
    """Sample ``func(x, y)`` on the square ``[a, b]^2``; noise runs in row-major node order."""
    noise = noise or NoiseSpec()
    N = node_count(a, b, h)
    x = a + h * np.arange(N + 1)
    X, Y = np.meshgrid(x, x, indexing="ij")
    values = np.asarray(func(X, Y), dtype=float) + noise_stream(noise, (N + 1) ** 2).reshape(N + 1, N + 1)
    return SampledGrid2D(x0=a, y0=a, h=h, values=values)


def sample_2d(name: str, a: float, b: float, h: float, noise: Optional[NoiseSpec] = None) -> SampledGrid2D:
    if name not in TEST_FUNCTIONS_2D:
        raise InputError(f"{name} is not a bivariate test function")
    return sample_function_2d(lambda x, y: eval_test_function(name, x, y), a, b, h, noise)


def write_grid_1d(grid: SampledGrid1D, path: Union[str, Path]) -> None:
    grid.to_frame().to_csv(path, index=False, float_format="%.17g")


def read_grid_1d(path: Union[str, Path]) -> SampledGrid1D:
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip()
    if header.replace(" ", "") != "x,value":
        raise GridFormatError(f"expected header 'x,value', got {header!r}", line=1)
    try:
        df = pd.read_csv(path, dtype=float, float_precision="round_trip")
    except ValueError as e:
        raise GridFormatError(f"non-numeric cell: {e}") from e
    if df.shape[1] != 2:
        raise GridFormatError(f"expected 2 columns, got {df.shape[1]}")
    if df.isna().any().any():
        bad = int(np.nonzero(df.isna().any(axis=1).to_numpy())[0][0])
        raise GridFormatError("missing cell", line=bad + 2)
    return SampledGrid1D.from_frame(df)


def write_grid_2d(grid: SampledGrid2D, path: Union[str, Path]) -> None:
    nx, ny = grid.shape
    lines = [f"# grid2d x0={grid.x0!r} y0={grid.y0!r} h={grid.h!r} nx={nx} ny={ny}"]
    for j in range(ny):
        lines.append(",".join(repr(float(v)) for v in grid.values[:, j]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_header_2d(line: str) -> dict:
    parts = line.split()
    if len(parts) < 2 or parts[0] != "#" or parts[1] != "grid2d":
        raise GridFormatError("expected '# grid2d ...' header", line=1)
    fields = {}
    for item in parts[2:]:
        key, sep, value = item.partition("=")
        if not sep:
            raise GridFormatError(f"malformed header field {item!r}", line=1)
        fields[key] = value
    missing = {"x0", "y0", "h", "nx", "ny"} - set(fields)
    if missing:
        raise GridFormatError(f"header is missing {sorted(missing)}", line=1)
    try:
        return {
            "x0": float(fields["x0"]), "y0": float(fields["y0"]), "h": float(fields["h"]),
            "nx": int(fields["nx"]), "ny": int(fields["ny"]),
        }
    except ValueError as e:
        raise GridFormatError(f"malformed header value: {e}", line=1) from e


def read_grid_2d(path: Union[str, Path]) -> SampledGrid2D:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise GridFormatError("empty file", line=1)
    header = _parse_header_2d(lines[0])
    nx, ny = header["nx"], header["ny"]
    rows = [line for line in enumerate(lines[1:], start=2) if line[1].strip()]
    if len(rows) != ny:
        raise GridFormatError(f"expected {ny} data rows, found {len(rows)}")
    values = np.empty((nx, ny))
    for j, (lineno, text) in enumerate(rows):
        cells = text.split(",")
        if len(cells) != nx:
            raise GridFormatError(f"ragged row: expected {nx} values, got {len(cells)}", line=lineno)
        try:
            values[:, j] = [float(c) for c in cells]
        except ValueError as e:
            raise GridFormatError(f"non-numeric cell: {e}", line=lineno) from e
    try:
        return SampledGrid2D(x0=header["x0"], y0=header["y0"], h=header["h"], values=values)
    except ValidationError as e:
        raise GridFormatError(str(e)) from e


def write_model(model: Union[Model1D, Model2D, ExponentialModel], path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(model.model_dump(), indent=2) + "\n", encoding="utf-8")


def read_model(path: Union[str, Path]) -> Union[Model1D, Model2D, ExponentialModel]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return _model_adapter.validate_json(text)
    except ValidationError as e:
        raise InputError(f"invalid model file {path}: {e}") from e

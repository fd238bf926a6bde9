"""Command-line entry point: ``modelext <subcommand> ...``.

Every subcommand writes its result to ``--output`` and a sidecar
``<output>.report.txt`` of ``key = value`` lines. Exit codes: 0 success,
2 bad input, 3 numerical failure.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from .blend import blend_extend
from .config import Settings, configure_logging, load_settings
from .errors import InputError, ModelExtError
from .grid_io import (
    node_count, read_grid_1d, read_grid_2d, read_model, sample_1d,
    sample_2d, write_grid_1d, write_grid_2d, write_model, TEST_FUNCTIONS_1D, TEST_FUNCTIONS_2D,
)
from .model1d import fit_model_1d
from .model2d import fit_model_2d
from .models import BlendSpec, CoeffKind, Model1D, Model2D, NoiseSpec
from .modelspline import (
    STRATEGIES, build_spline_basis_1d, build_spline_basis_2d, coefficient_count, extend_model_spline_1d,
    fit_model_spline_1d, spline_extend_2d,
)
from .prony1d import eval_exponential, extend_exponential, prony_fit
from .smoothext1d import extend_smooth_1d, index_range
from .smoothext2d import ExtensionDomain2D, extend_smooth_2d

logger = logging.getLogger("modelext.cli")


def parse_range(text: str) -> Tuple[float, float]:
    lo, sep, hi = text.partition(":")
    try:
        if not sep:
            raise ValueError
        bounds = float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo:hi', got {text!r}") from None
    if not bounds[1] > bounds[0]:
        raise argparse.ArgumentTypeError(f"range {text!r} must have hi > lo")
    return bounds


def parse_offsets(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated offsets, got {text!r}") from None


def report_path(output) -> Path:
    return Path(str(output) + ".report.txt")


def write_report(output, entries: Dict[str, object]) -> Path:
    path = report_path(output)
    lines = []
    for key, value in entries.items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug(f"wrote report {path}")
    return path


def _format_roots(roots) -> str:
    return " ".join(f"{complex(r).real:.12g}{complex(r).imag:+.12g}j" for r in roots)


def _read_model_of(path, cls):
    model = read_model(path)
    if not isinstance(model, cls):
        raise InputError(f"{path} holds a {model.kind} model; expected {cls.__name__}")
    return model


# ---------------------------------------------------------------- subcommands

def cmd_gen(args, settings: Settings) -> Dict[str, object]:
    noise = NoiseSpec(amplitude=args.noise, seed=args.seed if args.seed is not None else settings.seed)
    if args.function in TEST_FUNCTIONS_1D:
        grid = sample_1d(args.function, args.a, args.b, args.h, noise)
        write_grid_1d(grid, args.output)
        nodes = grid.values.size
    elif args.function in TEST_FUNCTIONS_2D:
        grid = sample_2d(args.function, args.a, args.b, args.h, noise)
        write_grid_2d(grid, args.output)
        nodes = grid.values.size
    else:
        raise InputError(f"unknown test function {args.function!r}")
    return {"function": args.function, "nodes": nodes, "noise": noise.amplitude, "seed": noise.seed}


def cmd_fit1d(args, settings: Settings) -> Dict[str, object]:
    grid = read_grid_1d(args.input)
    model = fit_model_1d(grid, args.m, args.n, CoeffKind.parse(args.u), args.ridge_p, args.ridge_q)
    write_model(model, args.output)
    diag = model.diagnostics
    return {"I1": diag.objective, "rows": diag.rows, "unknowns": diag.unknowns, "rank": diag.rank,
            "rank_deficient": diag.rank_deficient, "degenerate": diag.degenerate}


def cmd_prony(args, settings: Settings) -> Dict[str, object]:
    grid = read_grid_1d(args.input)
    if args.model:
        model = _read_model_of(args.model, Model1D)
    elif args.m:
        model = fit_model_1d(grid, args.m, args.n)
    else:
        raise InputError("prony needs --model or --m/--n")
    fitted = prony_fit(grid, model, cluster_tol=settings.cluster_tol, prune_tol=settings.prune_tol)
    lo, hi = args.range
    extension = extend_exponential(fitted, lo, hi, args.h or grid.h)
    write_grid_1d(extension, args.output)
    rms = float(np.sqrt(np.mean((eval_exponential(fitted, grid.x) - grid.values) ** 2)))
    return {"roots": _format_roots(fitted.roots), "basis_size": len(fitted.basis), "data_rms": rms,
            "flags": "; ".join(fitted.flags) or "none"}


def cmd_extend1d(args, settings: Settings) -> Dict[str, object]:
    grid = read_grid_1d(args.input)
    model = _read_model_of(args.model, Model1D)
    rng = index_range(grid, *args.range) if args.range else None
    extension, diag = extend_smooth_1d(grid, model, rng=rng, p=args.p, mu=args.mu, anchor=args.anchor)
    write_grid_1d(extension, args.output)
    report = {"S_p": diag.S, "E": diag.E, "F": diag.F, "p": args.p}
    report.update({k: v for k, v in diag.report().items() if k not in ("S", "E", "F")})
    return report


def cmd_blend(args, settings: Settings) -> Dict[str, object]:
    grid = read_grid_1d(args.input)
    spec = BlendSpec(
        model_start=_read_model_of(args.model_start, Model1D), model_end=_read_model_of(args.model_end, Model1D),
        x_start=args.x_start, x_end=args.x_end,
    )
    rng = index_range(grid, *args.range) if args.range else None
    extension, diag = blend_extend(grid, spec, p=args.p, mu=args.mu, rng=rng)
    write_grid_1d(extension, args.output)
    return {"S_p": diag.S, "E": diag.E, "F": diag.F, "mu": diag.mu, "model_residual": diag.model_residual}


def cmd_fit2d(args, settings: Settings) -> Dict[str, object]:
    grid = read_grid_2d(args.input)
    model = fit_model_2d(grid, args.m, args.n, args.ridge)
    write_model(model, args.output)
    diag = model.diagnostics
    return {"I2": diag.objective, "rows": diag.rows, "unknowns": diag.unknowns, "rank": diag.rank,
            "rank_deficient": diag.rank_deficient, "degenerate": diag.degenerate}


def cmd_extend2d(args, settings: Settings) -> Dict[str, object]:
    grid = read_grid_2d(args.input)
    if args.model:
        model = _read_model_of(args.model, Model2D)
    elif args.m:
        model = fit_model_2d(grid, args.m, args.n)
    else:
        raise InputError("extend2d needs --model or --m/--n")
    domain = ExtensionDomain2D.around(grid, *args.domain)
    rtol = args.rtol if args.rtol is not None else settings.rtol
    extension, diag = extend_smooth_2d(grid, model, domain, mu=args.mu, rtol=rtol, max_iter=args.max_iter,
                                       solver=args.solver, constraint_tol=settings.constraint_tol)
    write_grid_2d(extension, args.output)
    return {"S": diag.S, "E": diag.E, "F": diag.F, "mu": diag.mu, "iterations": diag.iterations,
            "solver_residual": diag.solver_residual, "constraint_residual": diag.model_residual,
            "unknowns": diag.unknowns, "constraints": diag.constraints}


def cmd_splinebasis(args, settings: Settings) -> Dict[str, object]:
    model = read_model(args.model)
    d = args.mesh
    step = args.h or d / 8
    if isinstance(model, Model1D):
        basis = build_spline_basis_1d(model, args.K, d, args.origin, args.offsets or ())
        x = args.origin + step * np.arange(node_count(0.0, (args.K - 3) * d, step) + 1)
        columns = {"x": x}
        columns.update({f"S{j + 1}": col for j, col in enumerate(basis.evaluate(x).T)})
        pd.DataFrame(columns).to_csv(args.output, index=False, float_format="%.17g")
    elif isinstance(model, Model2D):
        basis = build_spline_basis_2d(model, args.K, d, (args.origin, args.origin))
        x = args.origin + step * np.arange(node_count(0.0, (args.K - 3) * d, step) + 1)
        X, Y = np.meshgrid(x, x, indexing="ij")
        columns = {"x": X.ravel(), "y": Y.ravel()}
        columns.update({f"S{i}_{j}": col for (i, j), col in zip(basis.band, basis.evaluate_grid(x, x).T)})
        pd.DataFrame(columns).to_csv(args.output, index=False, float_format="%.17g")
    else:
        raise InputError("splinebasis needs a model1d or model2d file")
    return {"basis_size": basis.size, "K": args.K, "mesh": d}


def cmd_splinefit(args, settings: Settings) -> Dict[str, object]:
    model = read_model(args.model)
    d = args.mesh
    if isinstance(model, Model1D):
        grid = read_grid_1d(args.input)
        K = coefficient_count(grid.b - grid.a, d)
        basis = build_spline_basis_1d(model, K, d, grid.a, args.offsets or ())
        fitted = fit_model_spline_1d(grid, basis)
        lo, hi = args.range or (grid.a, grid.b)
        write_grid_1d(extend_model_spline_1d(fitted, lo, hi, grid.h), args.output)
    elif isinstance(model, Model2D):
        grid = read_grid_2d(args.input)
        lo, hi = args.range or (min(grid.x0, grid.y0), max(grid.x[-1], grid.y[-1]))
        ridge = args.ridge if args.ridge is not None else 1e-8
        extension, fitted = spline_extend_2d(grid, model, d, lo, hi, args.strategy, ridge)
        write_grid_2d(extension, args.output)
    else:
        raise InputError("splinefit needs a model1d or model2d file")
    diag = fitted.diagnostics
    return {"basis_size": diag.basis_size, "rank": diag.rank, "rank_deficient": diag.rank_deficient,
            "data_rms": diag.rms, "condition": diag.condition,
            "strategy": args.strategy if isinstance(model, Model2D) else "propagate"}


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modelext", description="Fit linear prediction models and extend data.")
    parser.add_argument("--log-level", default=None, help="Logging level (defaults to MODELEXT_LOG_LEVEL or WARNING).")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--output", "-o", required=True, help="Output file.")
        return p

    p = command("gen", cmd_gen, "Sample a test function.")
    p.add_argument("--function", required=True, choices=TEST_FUNCTIONS_1D + TEST_FUNCTIONS_2D)
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--noise", type=float, default=0.0, help="Uniform noise amplitude.")
    p.add_argument("--seed", type=int, default=None, help="Noise seed (default 0).")

    p = command("fit1d", cmd_fit1d, "Fit a univariate model.")
    p.add_argument("--input", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--u", default="const", help="const, linear or rational[:alpha].")
    p.add_argument("--ridge-p", type=float, default=0.0)
    p.add_argument("--ridge-q", type=float, default=0.0)

    p = command("prony", cmd_prony, "Exponential-sum extension.")
    p.add_argument("--input", required=True)
    p.add_argument("--model", help="Model file; otherwise fit with --m/--n.")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--range", type=parse_range, required=True, help="Extension range lo:hi.")
    p.add_argument("--h", type=float, default=None, help="Output mesh (defaults to the data mesh).")

    p = command("extend1d", cmd_extend1d, "Smooth univariate approximation-extension.")
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--range", type=parse_range, default=None, help="Extension range lo:hi on the data lattice.")
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--anchor", type=int, default=None)

    p = command("fit2d", cmd_fit2d, "Fit a bivariate model.")
    p.add_argument("--input", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--ridge", type=float, default=0.0)

    p = command("extend2d", cmd_extend2d, "Smooth bivariate approximation-extension.")
    p.add_argument("--input", required=True)
    p.add_argument("--model", help="Model file; otherwise fit with --m/--n.")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--domain", type=parse_range, required=True, help="Target square lo:hi.")
    p.add_argument("--mu", type=float, default=100.0)
    p.add_argument("--rtol", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--solver", choices=("minres", "direct"), default="minres")

    p = command("splinebasis", cmd_splinebasis, "Sample model-spline basis functions.")
    p.add_argument("--model", required=True)
    p.add_argument("--mesh", type=float, default=1.0, help="Knot mesh d.")
    p.add_argument("--K", type=int, required=True, help="Coefficients per axis.")
    p.add_argument("--origin", type=float, default=0.0)
    p.add_argument("--h", type=float, default=None, help="Sampling mesh (defaults to d/8).")
    p.add_argument("--offsets", type=parse_offsets, default=None, help="Fractional knot shifts, e.g. 0.5.")

    p = command("splinefit", cmd_splinefit, "Model-spline approximation-extension.")
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--mesh", type=float, default=1.0, help="Knot mesh d.")
    p.add_argument("--range", type=parse_range, default=None, help="Target range lo:hi (square in 2-D).")
    p.add_argument("--strategy", choices=STRATEGIES, default="fit-then-propagate")
    p.add_argument("--ridge", type=float, default=None)
    p.add_argument("--offsets", type=parse_offsets, default=None)

    p = command("blend", cmd_blend, "Extension under a blend of two models.")
    p.add_argument("--input", required=True)
    p.add_argument("--model-start", required=True)
    p.add_argument("--model-end", required=True)
    p.add_argument("--x-start", type=float, required=True)
    p.add_argument("--x-end", type=float, required=True)
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--range", type=parse_range, default=None)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings()
        configure_logging(args.log_level or settings.log_level)
        report = args.func(args, settings)
        write_report(args.output, {"status": "ok", **report})
    except ModelExtError as e:
        return _fail(args.output, e, e.exit_code)
    except (ValidationError, OSError) as e:
        return _fail(args.output, e, 2)
    logger.info(f"{args.command} wrote {args.output}")
    return 0


def _fail(output, error: Exception, code: int) -> int:
    message = str(error).replace('"', "'").replace("\n", " ")
    logger.error(f"{type(error).__name__}: {message}")
    print(f'error code={code} type={type(error).__name__} message="{message}"', file=sys.stderr)
    try:
        write_report(output, {"status": "error", "code": code, "type": type(error).__name__, "message": message})
    except OSError:
        logger.warning(f"could not write report next to {output}")
    return code


if __name__ == "__main__":
    sys.exit(main())

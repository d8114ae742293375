"""Command-line entry point: forward, invert, converge, diagnose, make-synthetic."""

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from stefan_control.config.solver_config import SolverConfig
from stefan_control.errors import (
    ExpressionDomainError,
    ExpressionSyntaxError,
    InfeasibleGeometryError,
    ProblemConfigError,
    ReportWriteError,
    StepSolveError,
    UnknownIdentifierError,
)
from stefan_control.numerics.control import DiscreteControl, lift_Pn, sample_Qn
from stefan_control.numerics.energy import energy_report
from stefan_control.numerics.functional import discrete_cost, weak_residual
from stefan_control.numerics.state import DiscreteState, identity_terms, run_forward
from stefan_control.numerics.tridiag import stability_threshold
from stefan_control.problem.expression import parse_expression
from stefan_control.problem.loader import LoadedProblem, load_problem
from stefan_control.services.optimizer_service import OptOptions, minimize
from stefan_control.services.report_service import RunResults, read_control_csv, write_report
from stefan_control.services.sweep_service import SweepRequest, convergence_order, sweep_job_service
from stefan_control.services.synthetic_service import make_synthetic
from stefan_control.utils.logger import get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
CONFIG_ERRORS = (
    ProblemConfigError,
    ExpressionSyntaxError,
    UnknownIdentifierError,
    InfeasibleGeometryError,
    ReportWriteError,
    FileNotFoundError,
    ValueError,
)
SOLVER_ERRORS = (StepSolveError, ExpressionDomainError)


def _parse_n_list(text: str) -> list[int]:
    try:
        values = [int(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from e
    if not values or any(n < 1 for n in values):
        raise argparse.ArgumentTypeError("n values must be positive")
    return values


def _solver_config(args) -> SolverConfig:
    return SolverConfig.from_env().with_overrides(c_h=args.c_h, max_workers=args.workers)


def _opt_options(args) -> OptOptions:
    return OptOptions(
        method=args.method,
        max_iters=args.max_iters,
        fd_step=args.fd_step,
        tol_cost=args.tol_cost,
        seed=args.seed,
        free=args.free,
        max_workers=args.workers or 1,
    )


def _problem_control(loaded: LoadedProblem, n: int, args) -> DiscreteControl:
    """--control CSV, else the problem's [control], else s = s0 and g = 0."""
    p = loaded.problem
    if getattr(args, "control", None):
        return read_control_csv(args.control, p.T)
    if loaded.control_s is not None:
        return sample_Qn(loaded.control_s, loaded.control_g, n, p.T)
    return sample_Qn(lambda t: p.s0, lambda t: 0.0, n, p.T)


def _manifest(command: str, loaded: LoadedProblem, args, config: SolverConfig, st: DiscreteState | None = None) -> dict:
    options = {
        key: str(value) if isinstance(value, Path) else value
        for key, value in vars(args).items()
        if key not in ("handler", "out")
    }
    digest = hashlib.sha256(loaded.raw)
    digest.update(json.dumps(options, sort_keys=True, default=str).encode("utf-8"))
    manifest = {
        "command": command,
        "config_hash": digest.hexdigest(),
        "problem": str(loaded.path) if loaded.path else None,
        "options": options,
        "tau0": stability_threshold(loaded.problem, config),
        "seed": getattr(args, "seed", None),
        "noise": getattr(args, "noise", None),
    }
    if st is not None:
        manifest.update(
            n=st.n,
            tau=st.tau,
            N=st.grid.N,
            h=st.grid.h,
            levels=[int(m) for m in st.grid.level_sizes],
        )
    return manifest


def cmd_forward(args) -> int:
    loaded = load_problem(args.problem)
    config = _solver_config(args)
    v = _problem_control(loaded, args.n, args)
    st = run_forward(loaded.problem, v, config=config)
    cost = discrete_cost(st)
    logger.info(f"Forward solve n={st.n}: cost {cost.total:.6e}")
    results = RunResults(
        manifest=_manifest("forward", loaded, args, config, st),
        state=st,
        cost=cost,
        energy=energy_report(st),
        control=v,
        binary_state=args.binary,
        dump_grid=args.dump_grid,
    )
    write_report(results, args.out)
    return EXIT_OK


def cmd_invert(args) -> int:
    loaded = load_problem(args.problem)
    p = loaded.problem
    config = _solver_config(args)
    if args.init:
        v0 = read_control_csv(args.init, p.T)
    else:
        s = loaded.control_s if loaded.control_s is not None and args.free == "g" else (lambda t: p.s0)
        v0 = sample_Qn(s, lambda t: 0.0, args.n, p.T)
    result = minimize(p, v0, _opt_options(args), config)
    st = run_forward(p, result.best, config=config)
    results = RunResults(
        manifest={**_manifest("invert", loaded, args, config, st), "status": result.status, "evals": result.evals},
        cost=result.final,
        state=st,
        opt_result=result,
        control=result.best,
    )
    write_report(results, args.out)
    return EXIT_OK if result.status != "solver_failure" else EXIT_SOLVER


def cmd_converge(args) -> int:
    loaded = load_problem(args.problem)
    config = _solver_config(args)
    request = SweepRequest(
        problem=loaded.problem,
        control_for=lambda n: _problem_control(loaded, n, args),
        manufactured=loaded.manufactured,
        config=config,
    )
    if args.optimize:
        rows = sweep_job_service.run_optimized_sweep(request, args.n, _opt_options(args))
    else:
        rows = sweep_job_service.run_sweep(request, args.n, max_workers=args.workers or 1)

    manifest = _manifest("converge", loaded, args, config)
    manifest["grids"] = [{"n": row.n, "tau": row.tau, "h": row.h, "N": row.N} for row in rows]
    if loaded.manufactured is not None:
        steps = [row.h for row in rows]
        manifest["front_error_order_h"] = convergence_order(steps, [row.front_error for row in rows])
        manifest["node_error_order_h"] = convergence_order(steps, [row.node_error for row in rows])
        logger.info(f"Measured order in h: front {manifest['front_error_order_h']:.3f}")
    write_report(RunResults(manifest=manifest, sweep=rows), args.out)
    return EXIT_OK


def identity_diagnostics(st: DiscreteState, samples: int, seed: int) -> list[float]:
    """Per layer k, the largest |sum of identity terms| / sum |terms| over random test vectors."""
    rng = np.random.default_rng(seed)
    worst = []
    for k in range(1, st.n + 1):
        m = st.grid.boundary_index(k)
        ratios = []
        for _ in range(samples):
            terms = identity_terms(st, k, rng.standard_normal(m + 1))
            scale = float(np.sum(np.abs(terms)))
            ratios.append(abs(float(np.sum(terms))) / scale if scale > 0 else 0.0)
        worst.append(max(ratios))
    return worst


def cmd_diagnose(args) -> int:
    loaded = load_problem(args.problem)
    p = loaded.problem
    config = _solver_config(args)
    v = _problem_control(loaded, args.n, args)
    st = run_forward(p, v, config=config)
    per_layer = identity_diagnostics(st, args.samples, args.seed)
    source = args.test_function or f"({p.T!r} - t) * cos(x)"
    test_function = parse_expression(source)
    diagnostics = {
        "n": st.n,
        "identity_max_relative": max(per_layer),
        "identity_per_layer": per_layer,
        "test_function": source,
        "weak_residual": weak_residual(st, p, lift_Pn(v), test_function),
    }
    write_report(RunResults(manifest=_manifest("diagnose", loaded, args, config, st), diagnostics=diagnostics), args.out)
    return EXIT_OK


def cmd_make_synthetic(args) -> int:
    loaded = load_problem(args.problem)
    if loaded.control_s is None and not args.control:
        raise ProblemConfigError("make-synthetic needs a [control] section or --control")
    config = _solver_config(args)
    v = _problem_control(loaded, args.n, args)
    data = make_synthetic(loaded.problem, v, noise=args.noise, seed=args.seed, config=config)
    results = RunResults(
        manifest=_manifest("make-synthetic", loaded, args, config, data.state),
        synthetic=data,
        control=v,
    )
    write_report(results, args.out)
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser, n_default: int | None = 16) -> None:
    parser.add_argument("--problem", required=True, type=Path, help="Problem TOML file")
    parser.add_argument("--out", default=Path("out"), type=Path, help="Output directory")
    if n_default is not None:
        parser.add_argument("--n", type=int, default=n_default, help="Number of time steps")
    parser.add_argument("--c-h", dest="c_h", type=float, default=None, help="Spatial step factor h = c_h sqrt(tau)")
    parser.add_argument("--workers", type=int, default=None, help="Thread pool size")


def _add_optimizer(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--method", choices=["fd_gradient", "pattern_search", "lbfgs"], default="fd_gradient")
    parser.add_argument("--max-iters", type=int, default=100)
    parser.add_argument("--fd-step", type=float, default=1e-6)
    parser.add_argument("--tol-cost", type=float, default=1e-10)
    parser.add_argument("--free", choices=["g", "s", "both"], default="both", help="Which control components move")
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stefan-control", description="Inverse one-phase Stefan problem solver")
    sub = parser.add_subparsers(dest="command", required=True)

    forward = sub.add_parser("forward", help="Solve the discrete direct problem for one control")
    _add_common(forward)
    forward.add_argument("--control", type=Path, help="Control CSV k,s_k,g_k")
    forward.add_argument("--binary", action="store_true", help="Also write state.bin")
    forward.add_argument("--dump-grid", action="store_true", help="Also write grid.csv and levels.csv")
    forward.set_defaults(handler=cmd_forward)

    invert = sub.add_parser("invert", help="Minimize the discrete cost over the control set")
    _add_common(invert)
    _add_optimizer(invert)
    invert.add_argument("--init", type=Path, help="Initial control CSV")
    invert.set_defaults(handler=cmd_invert)

    converge = sub.add_parser("converge", help="Refinement sweep over a list of n")
    _add_common(converge, n_default=None)
    converge.add_argument("--n", type=_parse_n_list, default=[8, 16, 32, 64], help="Comma-separated n values")
    converge.add_argument("--optimize", action="store_true", help="Minimize at each n with warm starts")
    _add_optimizer(converge)
    converge.set_defaults(handler=cmd_converge)

    diagnose = sub.add_parser("diagnose", help="Summation-identity and weak-form residuals")
    _add_common(diagnose)
    diagnose.add_argument("--control", type=Path, help="Control CSV k,s_k,g_k")
    diagnose.add_argument("--samples", type=int, default=20, help="Random test vectors per layer")
    diagnose.add_argument("--seed", type=int, default=0)
    diagnose.add_argument("--test-function", default=None, help="Expression in x, t vanishing at t = T")
    diagnose.set_defaults(handler=cmd_diagnose)

    synthetic = sub.add_parser("make-synthetic", help="Measurement CSVs from a forward solve plus noise")
    _add_common(synthetic)
    synthetic.add_argument("--control", type=Path, help="Control CSV k,s_k,g_k")
    synthetic.add_argument("--noise", type=float, default=0.0, help="Noise level relative to max |series|")
    synthetic.add_argument("--seed", type=int, default=0)
    synthetic.set_defaults(handler=cmd_make_synthetic)
    return parser


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG

    try:
        return args.handler(args)
    except SOLVER_ERRORS as e:
        logger.error(f"{args.command} failed in the solver: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except CONFIG_ERRORS as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv: list[str] | None = None) -> int:
    return run_cli(argv)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line harness: one-shot integration plus the benchmark sweeps.

Subcommands:

* ``integrate`` - run one configuration and print the result.
* ``accuracy`` / ``scaling`` / ``idle`` - run a sweep, write CSV plus a
  JSON manifest, and (unless ``--no-plot``) render a summary figure next
  to the CSV.

Exit codes: 0 on success, 2 for an invalid sweep definition, 3 when
``--strict`` is set and any run was terminated by a guard instead of the
tolerance.
"""

from __future__ import annotations

import argparse
import sys

from .distributed import BACKENDS, RedistributionConfig, run_distributed
from .driver import DriverConfig
from .experiments import (
    ACCURACY_COLUMNS,
    IDLE_COLUMNS,
    SCALING_COLUMNS,
    ExperimentSpec,
    SpecError,
    run_accuracy_sweep,
    run_idle_breakdown,
    run_scaling_sweep,
    write_manifest,
    write_rows,
)
from .integrands import FUNCTION_IDS, make_integrand
from .regions import HyperRect

EXIT_OK = 0
EXIT_BAD_SPEC = 2
EXIT_GUARD_TRIPPED = 3


def _parse_function_list(text: str) -> tuple[str, ...]:
    ids = tuple(tok.strip() for tok in text.split(",") if tok.strip())
    bad = [i for i in ids if i not in FUNCTION_IDS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown function ids {bad}; valid: {list(FUNCTION_IDS)}")
    return ids


def _parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _parse_tol_exp_range(text: str) -> tuple[float, ...]:
    """``A`` or ``A:B`` or ``A:B:STEP`` exponents k, giving tau = 10^-k."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            ks = [int(parts[0])]
        elif len(parts) == 2:
            ks = list(range(int(parts[0]), int(parts[1]) + 1))
        elif len(parts) == 3:
            ks = list(range(int(parts[0]), int(parts[1]) + 1, int(parts[2])))
        else:
            raise ValueError("too many ':'")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad exponent range {text!r}: {exc}") from exc
    if not ks:
        raise argparse.ArgumentTypeError(f"empty exponent range {text!r}")
    return tuple(10.0**-k for k in ks)


def _add_common(p: argparse.ArgumentParser, multi: bool) -> None:
    if multi:
        p.add_argument("--function", type=_parse_function_list, required=True,
                       help="comma-separated ids from f1..f7")
        p.add_argument("--dim", type=_parse_int_list, required=True,
                       help="comma-separated dimensions")
        p.add_argument("--tol-exp-range", type=_parse_tol_exp_range, required=True,
                       help="tolerance exponents k (tau=10^-k): A, A:B or A:B:STEP")
        p.add_argument("--workers", type=_parse_int_list, default=(1,),
                       help="comma-separated worker counts (default 1)")
        p.add_argument("--repetitions", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="CSV output path")
        plot = p.add_mutually_exclusive_group()
        plot.add_argument("--plot", dest="plot", action="store_true", default=True,
                          help="render a summary figure next to the CSV (default)")
        plot.add_argument("--no-plot", dest="plot", action="store_false")
    else:
        p.add_argument("--function", choices=FUNCTION_IDS, required=True)
        p.add_argument("--dim", type=int, required=True)
        p.add_argument("--tol", type=float, required=True, help="relative tolerance")
        p.add_argument("--workers", type=int, default=1)
    p.add_argument("--rule", choices=("gm", "gk-tensor"), default="gm")
    p.add_argument("--backend", choices=BACKENDS, default="deterministic_sim")
    p.add_argument("--cap", type=int, default=512, help="max regions per message")
    p.add_argument("--init-per-rank", type=int, default=8,
                   help="initial subdomains per worker")
    p.add_argument("--max-iterations", type=int, default=1000)
    p.add_argument("--strict", action="store_true",
                   help="exit 3 if any run was stopped by a guard")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hcub",
        description="Adaptive multidimensional cubature benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("integrate", help="run one configuration"), multi=False)
    _add_common(sub.add_parser("accuracy", help="accuracy vs tolerance sweep"), multi=True)
    _add_common(sub.add_parser("scaling", help="worker-count scaling sweep"), multi=True)
    _add_common(sub.add_parser("idle", help="per-rank compute/idle breakdown"), multi=True)
    return parser


def _cmd_integrate(args) -> int:
    integrand = make_integrand(args.function, args.dim)
    cfg = DriverConfig(tau_rel=args.tol, rule=args.rule, max_iterations=args.max_iterations)
    rcfg = RedistributionConfig(cap=args.cap, initial_subdomains_per_rank=args.init_per_rank)
    try:
        run = run_distributed(
            integrand.evaluate,
            HyperRect.unit_cube(args.dim),
            cfg,
            rcfg,
            workers=args.workers,
            backend=args.backend,
        )
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_SPEC
    res = run.result
    exact = integrand.reference_value
    print(f"function            {args.function} (d={args.dim})")
    print(f"integral            {res.integral!r}")
    print(f"error estimate      {res.error!r}")
    print(f"reference           {exact!r}")
    print(f"relative error      {abs(res.integral - exact) / abs(exact):.3e}")
    print(f"converged           {res.converged}")
    print(f"termination         {res.termination_reason.value}")
    print(f"iterations          {res.iterations}")
    print(f"integrand evals     {res.total_f_evals}")
    print(f"peak regions        {res.peak_regions}")
    print(f"messages/regions out {run.messages_total}/{run.regions_transferred_total}")
    if args.strict and res.termination_reason.value != "tolerance":
        return EXIT_GUARD_TRIPPED
    return EXIT_OK


def _spec_from_args(args) -> ExperimentSpec:
    return ExperimentSpec(
        functions=args.function,
        dims=args.dim,
        tolerances=args.tol_exp_range,
        workers=args.workers,
        rule=args.rule,
        backend=args.backend,
        repetitions=args.repetitions,
        seed=args.seed,
        output_path=args.out,
        cap=args.cap,
        init_per_rank=args.init_per_rank,
        max_iterations=args.max_iterations,
    )


def _cmd_sweep(args, runner, columns, plotter) -> int:
    try:
        spec = _spec_from_args(args)
    except SpecError as exc:
        print(f"invalid sweep: {exc}", file=sys.stderr)
        return EXIT_BAD_SPEC
    rows = runner(spec)
    csv_path = write_rows(rows, columns, spec.output_path)
    manifest_path = write_manifest(spec, csv_path)
    print(f"wrote {csv_path} ({len(rows)} rows)")
    print(f"wrote {manifest_path}")
    if args.plot:
        from . import figures

        fig_path = plotter(rows, figures.figure_path_for(csv_path))
        print(f"wrote {fig_path}")
    guard_hit = any(
        str(r.get("termination_reason", "")) not in ("", "tolerance") for r in rows
    )
    if args.strict and guard_hit:
        return EXIT_GUARD_TRIPPED
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "integrate":
        return _cmd_integrate(args)
    from . import figures

    if args.command == "accuracy":
        return _cmd_sweep(args, run_accuracy_sweep, ACCURACY_COLUMNS, figures.plot_accuracy)
    if args.command == "scaling":
        return _cmd_sweep(args, run_scaling_sweep, SCALING_COLUMNS, figures.plot_scaling)
    return _cmd_sweep(args, run_idle_breakdown, IDLE_COLUMNS, figures.plot_idle)


if __name__ == "__main__":
    sys.exit(main())

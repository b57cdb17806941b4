"""``cpngmres`` command line: generate problems, solve, sweep, emit plot data.

Exit codes: 0 success, 1 usage or invalid configuration, 2 numerical failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import itertools
import math
import sys
from pathlib import Path

import numpy as np

from . import bench
from .kruskal import write_ktensor
from .problems import DenseProblemSpec, LaplacianSpec, gen_dense_problem, gen_laplacian, random_initial_guess
from .tensor import TensorFormatError, read_tns, write_tns
from .trace import read_trace_csv, write_trace_csv

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    return [int(v) for v in str(text).split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


def _add_run_options(p):
    p.add_argument("--rank", type=int, help="CP rank (defaults to R for dense problems)")
    p.add_argument("--tol-grad", type=float, default=1e-9, help="stop when ||g||/||T|| <= this")
    p.add_argument("--max-iters", type=int, default=2000)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cpngmres", description="CP decomposition by ALS, N-GMRES and N-CG")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-dense", help="write a collinear dense test tensor (.tns)")
    p.add_argument("--config", help="key=value file; flags override")
    p.add_argument("--s", type=int, default=20)
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--R", type=int, default=3)
    p.add_argument("--l1", type=float, default=0.0)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output .tns path")
    p.add_argument("--spec-out", help="also write the problem spec as key=value text")

    p = sub.add_parser("gen-laplacian", help="write a sparse Laplacian tensor (.tns)")
    p.add_argument("--config", help="key=value file; flags override")
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--s", type=int, default=4)
    p.add_argument("--out", help="output .tns path")

    p = sub.add_parser("solve", help="run one solver and write its trace and factorization")
    p.add_argument("--config", help="key=value file; flags override")
    p.add_argument("--method", choices=bench.METHODS, default="ngmres")
    p.add_argument("--problem", choices=("dense", "laplacian"), default="dense")
    p.add_argument("--tensor", help="read the tensor from a .tns file instead of generating it")
    p.add_argument("--s", type=int, default=20)
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--R", type=int, default=3)
    p.add_argument("--l1", type=float, default=0.0)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--seed", type=int, default=0, help="seeds the problem and the initial guess")
    p.add_argument("--window", type=int, default=20)
    _add_run_options(p)
    p.add_argument("--trace", help="trace CSV path")
    p.add_argument("--out", help="final ktensor path")
    p.add_argument("--deterministic", action="store_true",
                   help="write time_s as 0 so repeated runs give identical trace bytes")

    p = sub.add_parser("bench", help="seed sweep over a problem grid; writes an accuracy report CSV")
    p.add_argument("--config", help="key=value file; flags override")
    p.add_argument("--problem", choices=("dense", "laplacian"), default="dense")
    p.add_argument("--s", default="50", help="comma list")
    p.add_argument("--c", default="0.9", help="comma list")
    p.add_argument("--R", default="3", help="comma list")
    p.add_argument("--l1", default="0", help="comma list")
    p.add_argument("--l2", default="0", help="comma list")
    p.add_argument("--d", default="3", help="comma list")
    p.add_argument("--methods", default="als,ngmres,ncg", help="comma list")
    p.add_argument("--window", default="20", help="comma list of N-GMRES window sizes")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds per cell")
    p.add_argument("--seed", type=int, default=0, help="first seed")
    _add_run_options(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="report CSV path")
    p.add_argument("--trace-dir", help="also write every run's trace CSV here")

    p = sub.add_parser("plot", help="turn trace CSVs into long-format plot data")
    p.add_argument("traces", nargs="+", help="trace CSV files, optionally as label=path")
    p.add_argument("--out", help="plot data CSV path")
    p.add_argument("--svg", help="also render the standard panels (needs matplotlib)")
    return parser


_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def read_config(path) -> dict[str, str]:
    """Flat ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _apply_config(parser, argv):
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        cfg = read_config(args.config)
    except OSError as exc:
        raise IOError(f"cannot read config {args.config}: {exc}") from exc
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in cfg.items():
        if key not in actions or key in ("help", "config"):
            raise UsageError(f"{args.config}: unknown key {key!r} for {args.command}")
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() not in _BOOL:
                raise UsageError(f"{args.config}: {key} must be a boolean")
            defaults[key] = _BOOL[value.lower()]
        else:
            # argparse converts string defaults through the option's type
            defaults[key] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


# -- commands -------------------------------------------------------------------------


def _need(value, flag):
    if value is None:
        raise UsageError(f"{flag} is required")
    return value


def cmd_gen_dense(args) -> int:
    spec = DenseProblemSpec(args.s, args.c, args.R, args.l1, args.l2, args.seed)
    out = _need(args.out, "--out")
    tensor = gen_dense_problem(spec).tensor
    write_tns(tensor, out)
    if args.spec_out:
        Path(args.spec_out).write_text(spec.to_text())
    print(f"wrote {out}: dense {'x'.join(map(str, tensor.shape))}")
    return EXIT_OK


def cmd_gen_laplacian(args) -> int:
    spec = LaplacianSpec(args.d, args.s)
    out = _need(args.out, "--out")
    tensor = gen_laplacian(spec)
    write_tns(tensor, out)
    print(f"wrote {out}: sparse order {spec.order}, {tensor.nnz} nonzeros")
    return EXIT_OK


def cmd_solve(args) -> int:
    if args.tensor:
        tensor = read_tns(args.tensor)
        rank = _need(args.rank, "--rank")
    elif args.problem == "dense":
        tensor = gen_dense_problem(DenseProblemSpec(args.s, args.c, args.R, args.l1, args.l2, args.seed)).tensor
        rank = args.rank if args.rank is not None else args.R
    else:
        tensor = gen_laplacian(LaplacianSpec(args.d, args.s))
        rank = _need(args.rank, "--rank")
    if rank < 1:
        raise UsageError("--rank must be >= 1")

    k0 = random_initial_guess(tensor.shape, rank, args.seed)
    method = bench.MethodSpec(args.method, args.window)
    result = bench.run_method(tensor, k0, method, args.tol_grad, args.max_iters, args.seed)
    if result.trace is None:
        print(f"error: {method.label} failed: {result.stop_reason}", file=sys.stderr)
        return EXIT_NUMERICAL

    if args.trace:
        write_trace_csv(result.trace, args.trace, timing=not args.deterministic)
    if args.out:
        write_ktensor(result.ktensor, args.out)
    last = result.trace[-1]
    f_final, h_final = last.f, result.h_final
    print(f"method={method.label} iters={result.trace.iterations} f={f_final:.6e} h={h_final:.6e} "
          f"gnorm_rel={last.gnorm_rel:.6e} stop={result.stop_reason}")
    if not (math.isfinite(f_final) and math.isfinite(h_final)):
        return EXIT_NUMERICAL
    return EXIT_OK


def _bench_cells(args):
    if args.problem == "dense":
        grid = itertools.product(_int_list(args.s), _float_list(args.c), _int_list(args.R),
                                 _float_list(args.l1), _float_list(args.l2))
        for s, c, R, l1, l2 in grid:
            yield DenseProblemSpec(s, c, R, l1, l2), args.rank if args.rank is not None else R
    else:
        rank = _need(args.rank, "--rank")
        for d, s in itertools.product(_int_list(args.d), _int_list(args.s)):
            yield LaplacianSpec(d, s), rank


def cmd_bench(args) -> int:
    out = _need(args.out, "--out")
    if args.seeds < 1 or args.workers < 1:
        raise UsageError("--seeds and --workers must be >= 1")
    methods = []
    for name in (m.strip() for m in args.methods.split(",") if m.strip()):
        if name == "ngmres":
            methods += [bench.MethodSpec("ngmres", w) for w in _int_list(args.window)]
        else:
            methods.append(bench.MethodSpec(name))
    cells = list(_bench_cells(args))
    seeds = list(range(args.seed, args.seed + args.seeds))
    reports = bench.run_sweep(cells, methods, seeds, args.tol_grad, args.max_iters, args.workers)
    bench.write_report_csv(reports, out)

    if args.trace_dir:
        tdir = Path(args.trace_dir)
        tdir.mkdir(parents=True, exist_ok=True)
        for idx, report in enumerate(reports):
            for r in report.runs:
                if r.run.trace is not None:
                    write_trace_csv(r.run.trace, tdir / f"cell{idx}_{r.run.method.label}_seed{r.run.seed}.csv")

    failures = 0
    for report in reports:
        failures += sum(r.run.trace is None for r in report.runs)
        matched = report.matched_seeds()
        print(f"[{report.cell}] matched seeds: {len(matched)}/{len(seeds)}")
        for label in report.labels():
            cols = "  ".join(f"{t:.0e}: {report.median_iters(label, t):g} it / {report.median_time(label, t):.3g} s"
                             for t in bench.TARGETS)
            print(f"  {label:<14} {cols}")
    if failures:
        print(f"warning: {failures} run(s) failed; see stop_reason in {out}", file=sys.stderr)
    return EXIT_OK


def cmd_plot(args) -> int:
    out = _need(args.out, "--out")
    traces = {}
    for item in args.traces:
        label, _, path = item.rpartition("=")
        label = label or Path(path).stem
        traces[label] = read_trace_csv(path, method=label)
        if len(traces[label]) == 0:
            raise TensorFormatError(f"{path}: trace has no rows")
    bench.emit_plot_data(traces, out)
    if args.svg:
        try:
            bench.render_plot(traces, args.svg)
        except ImportError:
            raise UsageError("--svg needs matplotlib (pip install matplotlib)") from None
    print(f"wrote {out}")
    return EXIT_OK


COMMANDS = {
    "gen-dense": cmd_gen_dense,
    "gen-laplacian": cmd_gen_laplacian,
    "solve": cmd_solve,
    "bench": cmd_bench,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TensorFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Benchmark harness: run solvers over seeds, extract accuracy-to-target statistics, emit CSV."""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from .als import als_solve
from .kruskal import KruskalTensor, fit_h
from .ncg import NCGConfig, ncg_solve
from .ngmres import NGMRESConfig, ngmres_solve
from .problems import DenseProblemSpec, LaplacianSpec, gen_dense_problem, gen_laplacian, random_initial_guess
from .tensor import Tensor
from .trace import StopReason, Trace

TARGETS = (1e-3, 1e-6, 1e-10)
METHODS = ("als", "ngmres", "ncg")
H_MATCH_TOL = 1e-8

ProblemSpec = Union[DenseProblemSpec, LaplacianSpec]


@dataclass(frozen=True)
class MethodSpec:
    name: str
    window: int = 20

    def __post_init__(self):
        if self.name not in METHODS:
            raise ValueError(f"unknown method {self.name!r}; choose from {', '.join(METHODS)}")

    @property
    def label(self) -> str:
        return f"ngmres(w={self.window})" if self.name == "ngmres" else self.name


@dataclass
class RunResult:
    method: MethodSpec
    seed: int
    trace: Trace | None
    stop_reason: str
    h_final: float = math.nan
    ktensor: KruskalTensor | None = None
    wall_s: float = 0.0

    @property
    def converged(self) -> bool:
        return self.stop_reason == StopReason.GRAD_TOL.value


@dataclass
class Crossing:
    """Iterations and seconds until ``|h - h*| <= target``; ``None`` when never reached."""
    target: float
    iters: int | None
    time_s: float | None


@dataclass
class RunReport:
    run: RunResult
    h_star: float
    matched: bool
    crossings: list[Crossing]


@dataclass
class AccuracyReport:
    cell: str
    runs: list[RunReport] = field(default_factory=list)
    max_iters: int = 2000

    def matched_runs(self, label: str) -> list[RunReport]:
        return [r for r in self.runs if r.run.method.label == label and r.matched]

    def median_iters(self, label: str, target: float) -> float:
        """Median over matched seeds; a run that never reached the target counts as ``max_iters + 1``."""
        vals = []
        for r in self.matched_runs(label):
            c = _crossing(r, target)
            vals.append(c.iters if c.iters is not None else self.max_iters + 1)
        return float(np.median(vals)) if vals else math.nan

    def median_time(self, label: str, target: float) -> float:
        vals = []
        for r in self.matched_runs(label):
            c = _crossing(r, target)
            vals.append(c.time_s if c.time_s is not None else math.inf)
        return float(np.median(vals)) if vals else math.nan

    def matched_seeds(self) -> list[int]:
        return sorted({r.run.seed for r in self.runs if r.matched})

    def labels(self) -> list[str]:
        seen = []
        for r in self.runs:
            if r.run.method.label not in seen:
                seen.append(r.run.method.label)
        return seen


def _crossing(report: RunReport, target: float) -> Crossing:
    for c in report.crossings:
        if c.target == target:
            return c
    return crossings(report.run.trace, report.h_star, [target])[0]


def crossings(trace: Trace | None, h_star: float, targets: Sequence[float] = TARGETS) -> list[Crossing]:
    """First record index (and its cumulative time) with ``|h - h*| <= target``."""
    out = []
    for target in targets:
        hit = None
        if trace is not None and math.isfinite(h_star):
            hit = next((r for r in trace if abs(r.h - h_star) <= target), None)
        out.append(Crossing(target, hit.iter if hit else None, hit.time_s if hit else None))
    return out


def make_problem(spec: ProblemSpec, seed: int) -> Tensor:
    if isinstance(spec, DenseProblemSpec):
        return gen_dense_problem(replace(spec, seed=seed)).tensor
    return gen_laplacian(spec)


def run_method(tensor: Tensor, k0: KruskalTensor, method: MethodSpec, tol_grad: float = 1e-9,
               max_iters: int = 2000, seed: int = 0) -> RunResult:
    t0 = time.perf_counter()
    try:
        if method.name == "als":
            k, trace, reason = als_solve(tensor, k0, tol_grad, max_iters)
        elif method.name == "ngmres":
            k, trace, reason = ngmres_solve(
                tensor, k0, NGMRESConfig(window=method.window, tol_grad=tol_grad, max_iters=max_iters))
        else:
            k, trace, reason = ncg_solve(tensor, k0, NCGConfig(tol_grad=tol_grad, max_iters=max_iters))
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return RunResult(method, seed, None, f"Error: {exc}", wall_s=time.perf_counter() - t0)
    return RunResult(method, seed, trace, reason.value, fit_h(tensor, k), k, time.perf_counter() - t0)


def _run_seed(args):
    spec, rank, methods, seed, tol_grad, max_iters = args
    try:
        tensor = make_problem(spec, seed)
        k0 = random_initial_guess(tensor.shape, rank, seed)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return [RunResult(m, seed, None, f"Error: {exc}") for m in methods]
    runs = [run_method(tensor, k0, m, tol_grad, max_iters, seed) for m in methods]
    for r in runs:
        r.ktensor = None  # keep results small across processes
    return runs


def assess(runs: Sequence[RunResult], match_tol: float = H_MATCH_TOL,
           targets: Sequence[float] = TARGETS) -> list[RunReport]:
    """Attach ``h*`` and the same-stationary-point flag to the runs of one seed.

    A converged run's ``h*`` is its own final ``h``. The seed is matched when at
    least one run converged and all converged runs agree on ``h*`` within
    ``match_tol``; runs that did not converge are then measured against the
    converged runs' mean ``h*`` and count as not reaching targets they never hit.
    """
    conv = [r.h_final for r in runs if r.converged]
    matched = bool(conv) and max(conv) - min(conv) <= match_tol
    ref = float(np.mean(conv)) if conv else math.nan
    reports = []
    for r in runs:
        h_star = r.h_final if r.converged else ref
        reports.append(RunReport(r, h_star, matched and r.trace is not None, crossings(r.trace, h_star, targets)))
    return reports


def run_sweep(cells: Sequence[tuple[ProblemSpec, int]], methods: Sequence[MethodSpec], seeds: Sequence[int],
              tol_grad: float = 1e-9, max_iters: int = 2000, workers: int = 1) -> list[AccuracyReport]:
    """Run every ``(spec, rank)`` cell on every seed, optionally in worker processes.

    Every method starts from the same initial guess for a given seed. A run that
    raises is kept with an ``Error: ...`` stop reason and the sweep continues.
    """
    tasks = [(spec, rank, list(methods), s, tol_grad, max_iters) for spec, rank in cells for s in seeds]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_seed, tasks))
    else:
        results = [_run_seed(t) for t in tasks]
    reports = []
    for i, (spec, rank) in enumerate(cells):
        report = AccuracyReport(describe(spec, rank), max_iters=max_iters)
        for runs in results[i * len(seeds):(i + 1) * len(seeds)]:
            report.runs.extend(assess(runs))
        reports.append(report)
    return reports


def run_cell(spec: ProblemSpec, rank: int, methods: Sequence[MethodSpec], seeds: Sequence[int],
             tol_grad: float = 1e-9, max_iters: int = 2000, workers: int = 1) -> AccuracyReport:
    return run_sweep([(spec, rank)], methods, seeds, tol_grad, max_iters, workers)[0]


def describe(spec: ProblemSpec, rank: int) -> str:
    if isinstance(spec, DenseProblemSpec):
        return f"dense s={spec.s} c={spec.c} R={spec.R} l1={spec.l1} l2={spec.l2} rank={rank}"
    return f"laplacian d={spec.d} s={spec.s} N={spec.order} rank={rank}"


# -- output -------------------------------------------------------------------------


def _num(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, bool):
        return str(int(x))
    return str(x) if isinstance(x, int) else repr(float(x))


def report_rows(report: AccuracyReport, targets: Sequence[float] = TARGETS) -> list[dict]:
    rows = []
    for r in report.runs:
        run = r.run
        row = {
            "kind": "run", "cell": report.cell, "method": run.method.label, "seed": run.seed,
            "h_star": _num(r.h_star), "stop_reason": run.stop_reason, "matched": _num(r.matched),
            "final_gnorm_rel": _num(run.trace[-1].gnorm_rel if run.trace else None),
            "iters": _num(run.trace.iterations if run.trace else None), "n_seeds": "",
        }
        for c in r.crossings:
            row[f"it_{c.target:.0e}"] = _num(c.iters)
            row[f"time_{c.target:.0e}"] = _num(c.time_s)
        rows.append(row)
    n = len(report.matched_seeds())
    for label in report.labels():
        row = {"kind": "median", "cell": report.cell, "method": label, "seed": "", "h_star": "",
               "stop_reason": "", "matched": "", "final_gnorm_rel": "", "iters": "", "n_seeds": n}
        for t in targets:
            row[f"it_{t:.0e}"] = _num(report.median_iters(label, t))
            row[f"time_{t:.0e}"] = _num(report.median_time(label, t))
        rows.append(row)
    return rows


def write_report_csv(reports: Sequence[AccuracyReport], path, targets: Sequence[float] = TARGETS) -> None:
    fields = ["kind", "cell", "method", "seed", "h_star", "stop_reason", "matched", "final_gnorm_rel",
              "iters", "n_seeds"]
    for t in targets:
        fields += [f"it_{t:.0e}", f"time_{t:.0e}"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for report in reports:
            writer.writerows(report_rows(report, targets))


def emit_plot_data(traces: dict[str, Trace], path, h_star: dict[str, float] | None = None) -> None:
    """Long-format CSV ``series,iter,time_s,value`` with ``<label>:h_err`` and ``<label>:gnorm_rel`` series.

    ``h*`` defaults to each trace's final ``h``.
    """
    h_star = h_star or {}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["series", "iter", "time_s", "value"])
        for label, trace in traces.items():
            hs = h_star.get(label, trace[-1].h)
            for r in trace:
                writer.writerow([f"{label}:h_err", r.iter, _num(r.time_s), _num(abs(r.h - hs))])
            for r in trace:
                writer.writerow([f"{label}:gnorm_rel", r.iter, _num(r.time_s), _num(r.gnorm_rel)])


def render_plot(traces: dict[str, Trace], path) -> None:
    """Four log-scale panels (|h - h*| and gradient norm, against iteration and time)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(2, 2, figsize=(10, 8))
    for label, trace in traces.items():
        hs = trace[-1].h
        its, ts = trace.column("iter"), trace.column("time_s")
        herr = [max(abs(r.h - hs), 1e-17) for r in trace]
        gn = trace.column("gnorm_rel")
        axes[0, 0].semilogy(its, herr, label=label)
        axes[0, 1].semilogy(its, gn, label=label)
        axes[1, 0].semilogy(ts, herr, label=label)
        axes[1, 1].semilogy(ts, gn, label=label)
    for ax, (x, y) in zip(axes.flat, [("iteration", "|h - h*|"), ("iteration", "||g|| / ||T||"),
                                      ("time (s)", "|h - h*|"), ("time (s)", "||g|| / ||T||")]):
        ax.set_xlabel(x)
        ax.set_ylabel(y)
    axes[0, 0].legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)

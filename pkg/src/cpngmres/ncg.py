"""Nonlinear conjugate gradients with Polak-Ribière (PR+) updates."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kruskal import CPObjective, KruskalTensor, normalize_and_reorder, pack
from .linesearch import LineSearchParams, LineSearchStatus, more_thuente
from .tensor import Tensor
from .trace import StopReason, Trace, TraceRecord


@dataclass
class NCGConfig:
    tol_grad: float = 1e-9
    max_iters: int = 2000
    linesearch: LineSearchParams = field(default_factory=LineSearchParams)


def ncg_minimize(fg: Callable, u0, config: NCGConfig | None = None,
                 h_of: Callable[[float], float] | None = None, gnorm_scale: float = 1.0,
                 method: str = "ncg"):
    """Minimize ``f`` from ``u0``; returns ``(u, trace, stop_reason)``.

    Search directions are reset to steepest descent whenever the PR+ direction
    fails to descend. Two consecutive line-search stalls end the run.
    """
    config = config or NCGConfig()
    h_of = h_of or (lambda f: float("nan"))
    counts = {"f": 0}

    def evaluate(u):
        counts["f"] += 1
        return fg(u)

    t0 = time.perf_counter()
    u = np.asarray(u0, dtype=float)
    f, g = evaluate(u)
    trace = Trace(method)

    def record(it, beta=None, coef=None, status=None):
        trace.append(TraceRecord(
            iter=it, time_s=time.perf_counter() - t0, f=f, h=h_of(f),
            gnorm_rel=float(np.linalg.norm(g)) / gnorm_scale,
            fevals=counts["f"], gevals=counts["f"], precond_calls=0,
            beta=beta, cg_coef=coef, ls_status=status.value if status else None,
        ))
        return trace[-1].gnorm_rel

    if record(0) <= config.tol_grad:
        return u, trace, StopReason.GRAD_TOL

    d = -g
    reason = StopReason.MAX_ITERS
    stalls = 0
    for it in range(1, config.max_iters + 1):
        cache = {}

        def phi(step):
            fs, gs = evaluate(u + step * d)
            cache[step] = (fs, gs)
            return fs, float(gs @ d)

        res = more_thuente(phi, config.linesearch, f, float(g @ d))
        if res.step > 0:
            u = u + res.step * d
            f_new, g_new = cache[res.step]
        else:
            f_new, g_new = f, g

        coef = max(0.0, float(g_new @ (g_new - g)) / float(g @ g))
        d = -g_new + coef * d
        if float(d @ g_new) >= 0:
            d = -g_new
        f, g = f_new, g_new

        gn = record(it, res.step, coef, res.status)
        if gn <= config.tol_grad:
            reason = StopReason.GRAD_TOL
            break
        stalls = stalls + 1 if res.status == LineSearchStatus.STALL else 0
        if stalls >= 2:
            reason = StopReason.STALL
            break
    return u, trace, reason


def ncg_solve(tensor: Tensor, k0: KruskalTensor, config: NCGConfig | None = None):
    """N-CG on the CP objective. Factors are normalized only in the returned result."""
    problem = CPObjective(tensor, k0.rank)
    u0 = pack(normalize_and_reorder(k0))
    u, trace, reason = ncg_minimize(problem.fg, u0, config, h_of=problem.h, gnorm_scale=tensor.norm)
    return normalize_and_reorder(problem.ktensor(u)), trace, reason

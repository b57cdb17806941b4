"""Nonlinear GMRES optimization: one-step preconditioner, windowed recombination, line search.

The driver works on flat iterate vectors and is independent of the CP model;
:func:`ngmres_solve` wires it to ALS and the CP objective.
"""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .als import als_sweep
from .kruskal import CPObjective, KruskalTensor, normalize_and_reorder, pack
from .linesearch import LineSearchParams, LineSearchStatus, more_thuente
from .tensor import Tensor
from .trace import StopReason, Trace, TraceRecord


@dataclass
class NGMRESConfig:
    window: int = 20
    epsilon_reg: float = 1e-12
    tol_grad: float = 1e-9
    max_iters: int = 2000
    linesearch: LineSearchParams = field(default_factory=LineSearchParams)
    restart_on_ascent: bool = True
    # False: skip Step III and take the accelerated iterate itself (step 1)
    use_linesearch: bool = True

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.epsilon_reg < 0:
            raise ValueError("epsilon_reg must be >= 0")
        if not self.tol_grad > 0:
            raise ValueError("tol_grad must be positive")


class AccelWindow:
    """The last ``capacity`` accepted ``(iterate, gradient)`` pairs, oldest first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("window capacity must be >= 1")
        self.capacity = capacity
        self._items: deque = deque(maxlen=capacity)

    def append(self, u: np.ndarray, g: np.ndarray) -> None:
        self._items.append((u, g))

    def reset(self, u: np.ndarray, g: np.ndarray) -> None:
        self._items.clear()
        self._items.append((u, g))

    def iterates(self) -> list[np.ndarray]:
        return [u for u, _ in self._items]

    def gradients(self) -> list[np.ndarray]:
        return [g for _, g in self._items]

    def __len__(self):
        return len(self._items)


def accelerate(window: AccelWindow, u_bar, g_bar, epsilon_reg: float = 1e-12):
    """Recombine ``u_bar`` with the windowed iterates to minimize the linearized gradient.

    Solves ``(P'P + delta I) alpha = -P' g_bar`` with columns
    ``p_j = g_bar - g(u_j)`` and ``delta = epsilon_reg * max(diag(P'P))``, and
    returns ``u_hat = u_bar + sum_j alpha_j (u_bar - u_j)`` together with ``alpha``.
    """
    if len(window) == 0:
        raise ValueError("acceleration window is empty")
    u_bar = np.asarray(u_bar, dtype=float)
    g_bar = np.asarray(g_bar, dtype=float)
    U = np.column_stack(window.iterates())
    G = np.column_stack(window.gradients())
    if U.shape[0] != u_bar.size or G.shape[0] != g_bar.size:
        raise ValueError("window vectors and current iterate have different lengths")

    P = g_bar[:, None] - G
    normal = P.T @ P
    top = float(np.max(np.diag(normal)))
    delta = epsilon_reg * top if top > 0 else epsilon_reg
    if delta == 0:
        delta = np.finfo(float).tiny
    alpha = np.linalg.solve(normal + delta * np.eye(normal.shape[0]), -(P.T @ g_bar))
    u_hat = u_bar + (u_bar[:, None] - U) @ alpha
    return u_hat, alpha


@dataclass
class StepInfo:
    u: np.ndarray
    f: float
    g: np.ndarray
    u_bar: np.ndarray
    u_hat: np.ndarray
    restart: bool
    beta: float | None
    ls_status: LineSearchStatus | None
    f_bar: float


class NGMRES:
    """Stateful N-GMRES iteration over flat vectors.

    Parameters
    ----------
    fg : callable
        ``fg(u) -> (f, g)``.
    precondition : callable
        One-step update ``M(u)``.
    config : NGMRESConfig
    canonicalize : callable, optional
        ``canonicalize(u, g) -> (u', g')`` applied to every accepted iterate;
        must leave ``f`` unchanged and return the gradient at ``u'``.
    """

    def __init__(self, fg: Callable, precondition: Callable, config: NGMRESConfig | None = None,
                 canonicalize: Callable | None = None):
        self.fg = fg
        self.precondition = precondition
        self.config = config or NGMRESConfig()
        self.canonicalize = canonicalize
        self.window = AccelWindow(self.config.window)
        self.fevals = 0
        self.gevals = 0
        self.precond_calls = 0

    def _fg(self, u):
        self.fevals += 1
        self.gevals += 1
        return self.fg(u)

    def _canon(self, u, g):
        return self.canonicalize(u, g) if self.canonicalize is not None else (u, g)

    def start(self, u0):
        f, g = self._fg(np.asarray(u0, dtype=float))
        u, g = self._canon(np.asarray(u0, dtype=float), g)
        self.u, self.f, self.g = u, f, g
        self.window.reset(u, g)
        return f, g

    def step(self) -> StepInfo:
        cfg = self.config
        u_bar = np.asarray(self.precondition(self.u), dtype=float)
        self.precond_calls += 1
        f_bar, g_bar = self._fg(u_bar)

        u_hat, _ = accelerate(self.window, u_bar, g_bar, cfg.epsilon_reg)
        d = u_hat - u_bar
        slope = float(g_bar @ d)

        restart = False
        beta = None
        status = None
        if not cfg.use_linesearch:
            beta = 1.0
            u_new = u_hat
            f_new, g_new = self._fg(u_new)
        elif slope >= 0:
            # not a descent direction: keep the preconditioner's iterate
            restart = cfg.restart_on_ascent
            u_new, f_new, g_new = u_bar, f_bar, g_bar
        else:
            cache = {}

            def phi(step):
                fs, gs = self._fg(u_bar + step * d)
                cache[step] = (fs, gs)
                return fs, float(gs @ d)

            res = more_thuente(phi, cfg.linesearch, f_bar, slope)
            beta, status = res.step, res.status
            if beta == 0.0:
                u_new, f_new, g_new = u_bar, f_bar, g_bar
            else:
                u_new = u_bar + beta * d
                f_new, g_new = cache[beta]

        u_new, g_new = self._canon(u_new, g_new)
        if restart:
            self.window.reset(u_new, g_new)
        else:
            self.window.append(u_new, g_new)
        self.u, self.f, self.g = u_new, f_new, g_new
        return StepInfo(u_new, f_new, g_new, u_bar, u_hat, restart, beta, status, f_bar)


def ngmres_minimize(fg, precondition, u0, config: NGMRESConfig | None = None, canonicalize=None,
                    h_of: Callable[[float], float] | None = None, gnorm_scale: float = 1.0,
                    method: str = "ngmres"):
    """Run N-GMRES from ``u0`` until the scaled gradient norm reaches ``config.tol_grad``.

    Returns
    -------
    u_best : ndarray
        Lowest-objective iterate seen.
    trace : Trace
    stop_reason : StopReason
    """
    config = config or NGMRESConfig()
    driver = NGMRES(fg, precondition, config, canonicalize)
    h_of = h_of or (lambda f: float("nan"))
    t0 = time.perf_counter()
    f, g = driver.start(u0)
    trace = Trace(method)

    def record(it, f, g, restart=False, beta=None, status=None):
        trace.append(TraceRecord(
            iter=it, time_s=time.perf_counter() - t0, f=f, h=h_of(f),
            gnorm_rel=float(np.linalg.norm(g)) / gnorm_scale,
            fevals=driver.fevals, gevals=driver.gevals, precond_calls=driver.precond_calls,
            restart=restart, beta=beta, ls_status=status.value if status else None,
        ))
        return trace[-1].gnorm_rel

    best_f, best_u = f, driver.u
    if record(0, f, g) <= config.tol_grad:
        return best_u, trace, StopReason.GRAD_TOL

    reason = StopReason.MAX_ITERS
    stalls = 0
    for it in range(1, config.max_iters + 1):
        info = driver.step()
        if info.f < best_f:
            best_f, best_u = info.f, info.u
        gn = record(it, info.f, info.g, info.restart, info.beta, info.ls_status)
        if gn <= config.tol_grad:
            reason = StopReason.GRAD_TOL
            break
        stalls = stalls + 1 if info.ls_status == LineSearchStatus.STALL else 0
        if stalls >= 2:
            reason = StopReason.STALL
            break
    return best_u, trace, reason


def ngmres_solve(tensor: Tensor, k0: KruskalTensor, config: NGMRESConfig | None = None):
    """N-GMRES-accelerated ALS for the rank-``R`` CP approximation of ``tensor``.

    Returns ``(ktensor, trace, stop_reason)``; the returned factorization is the
    lowest-objective iterate visited.
    """
    problem = CPObjective(tensor, k0.rank)

    def precondition(u):
        return pack(als_sweep(tensor, problem.ktensor(u)))

    u0 = pack(normalize_and_reorder(k0))
    u, trace, reason = ngmres_minimize(
        problem.fg, precondition, u0, config, problem.canonicalize,
        h_of=problem.h, gnorm_scale=tensor.norm,
    )
    return problem.ktensor(u), trace, reason

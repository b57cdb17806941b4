"""Alternating least squares: one block Gauss-Seidel sweep, and a stand-alone ALS solver."""
from __future__ import annotations

import time

import numpy as np
from scipy import linalg

from .kruskal import CPObjective, KruskalTensor, normalize_and_reorder, pack
from .tensor import Tensor, mttkrp
from .trace import StopReason, Trace, TraceRecord


class SingularSystemError(np.linalg.LinAlgError):
    """ALS normal-equation matrix stayed singular after the ridge fallback."""


def _solve_block(gram: np.ndarray, rhs: np.ndarray, mode: int) -> np.ndarray:
    """Solve ``X @ gram = rhs`` for symmetric PSD ``gram`` via its transpose."""
    try:
        return linalg.cho_solve(linalg.cho_factor(gram), rhs.T).T
    except linalg.LinAlgError:
        pass
    ridge = 1e-12 * np.trace(gram)
    try:
        if not ridge > 0 or not np.isfinite(ridge):
            raise linalg.LinAlgError
        regularized = gram + ridge * np.eye(gram.shape[0])
        return linalg.cho_solve(linalg.cho_factor(regularized), rhs.T).T
    except linalg.LinAlgError:
        raise SingularSystemError(f"mode-{mode} Gram-Hadamard matrix is singular") from None


def als_sweep(tensor: Tensor, ktensor: KruskalTensor, normalize: bool = True) -> KruskalTensor:
    """Update each factor in mode order from ``A_n Gamma_n = T_(n) Phi_n``, then normalize.

    Later modes see the factors already updated in this sweep.
    """
    factors = [np.array(a) for a in ktensor.factors]
    grams = [a.T @ a for a in factors]
    for n in range(len(factors)):
        gamma = np.ones_like(grams[0])
        for m, g in enumerate(grams):
            if m != n:
                gamma = gamma * g
        gamma = 0.5 * (gamma + gamma.T)
        factors[n] = _solve_block(gamma, mttkrp(tensor, factors, n), n)
        grams[n] = factors[n].T @ factors[n]
    out = KruskalTensor(factors)
    return normalize_and_reorder(out) if normalize else out


def als_solve(tensor: Tensor, k0: KruskalTensor, tol_grad: float = 1e-9, max_iters: int = 2000):
    """Plain ALS from ``k0`` until ``||g|| / ||T|| <= tol_grad`` or ``max_iters`` sweeps.

    The trace's clock only counts the sweeps; the objective and gradient
    evaluated for the trace are diagnostics and are excluded from ``time_s``
    and from the evaluation counters.

    Returns
    -------
    ktensor : KruskalTensor
    trace : Trace
    stop_reason : StopReason
    """
    problem = CPObjective(tensor, k0.rank)
    k = normalize_and_reorder(k0)
    f, g = problem.fg(pack(k))
    problem.fevals = problem.gevals = 0
    trace = Trace("als")
    elapsed = 0.0
    trace.append(TraceRecord(0, 0.0, f, problem.h(f), problem.gnorm_rel(g), 0, 0, 0))

    reason = StopReason.MAX_ITERS
    if trace[-1].gnorm_rel <= tol_grad:
        reason = StopReason.GRAD_TOL
    else:
        for it in range(1, max_iters + 1):
            t0 = time.perf_counter()
            k = als_sweep(tensor, k)
            elapsed += time.perf_counter() - t0
            f, g = problem.fg(pack(k))
            problem.fevals = problem.gevals = 0
            trace.append(TraceRecord(it, elapsed, f, problem.h(f), problem.gnorm_rel(g), 0, 0, it))
            if trace[-1].gnorm_rel <= tol_grad:
                reason = StopReason.GRAD_TOL
                break
    return k, trace, reason

"""Moré-Thuente line search for the strong Wolfe conditions.

Follows the bracketing and safeguarded cubic/quadratic interpolation scheme of
Moré and Thuente, "Line search algorithms with guaranteed sufficient decrease",
ACM TOMS 20 (1994), in the form of the MINPACK-2 ``dcsrch``/``dcstep`` pair,
rewritten as a plain loop over a callable.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

_XTRAPL = 1.1
_XTRAPU = 4.0
_P66 = 0.66


class LineSearchStatus(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_EVALS = "MaxEvals"
    STALL = "NumericalStall"


class NotDescentError(ValueError):
    """The search direction is not a descent direction (``phi'(0) >= 0``)."""


@dataclass(frozen=True)
class LineSearchParams:
    ftol: float = 1e-4
    gtol: float = 1e-2
    initial_step: float = 1.0
    max_evals: int = 20
    step_min: float = 0.0
    step_max: float = 1e20
    # relative bracket width below which the search gives up
    xtol: float = 1e-15

    def __post_init__(self):
        if not 0 < self.ftol < self.gtol < 1:
            raise ValueError("need 0 < ftol < gtol < 1")
        if not self.initial_step > 0:
            raise ValueError("initial_step must be positive")
        if self.max_evals < 1:
            raise ValueError("max_evals must be >= 1")
        if not 0 <= self.step_min < self.step_max:
            raise ValueError("need 0 <= step_min < step_max")


@dataclass
class LineSearchResult:
    step: float
    status: LineSearchStatus
    evals: int
    f: float
    df: float


def _cstep(stx, fx, dx, sty, fy, dy, stp, fp, dp, brackt, stpmin, stpmax):
    """Safeguarded trial step and update of the interval of uncertainty.

    ``stx`` is the best step so far, ``sty`` the other endpoint, ``stp`` the
    current trial. Returns the updated ``(stx, fx, dx, sty, fy, dy, new_stp, brackt)``.
    """
    sgnd = math.copysign(1.0, dp) * math.copysign(1.0, dx) if dp != 0 and dx != 0 else 0.0

    def cubic_gamma(theta, d1, d2, clamp=False):
        s = max(abs(theta), abs(d1), abs(d2))
        disc = (theta / s) ** 2 - (d1 / s) * (d2 / s)
        if clamp:
            disc = max(0.0, disc)
        return s * math.sqrt(disc)

    if fp > fx:
        # higher value: minimizer bracketed between stx and stp
        theta = 3.0 * (fx - fp) / (stp - stx) + dx + dp
        gamma = cubic_gamma(theta, dx, dp)
        if stp < stx:
            gamma = -gamma
        p = (gamma - dx) + theta
        q = ((gamma - dx) + gamma) + dp
        stpc = stx + (p / q) * (stp - stx)
        stpq = stx + ((dx / ((fx - fp) / (stp - stx) + dx)) / 2.0) * (stp - stx)
        if abs(stpc - stx) < abs(stpq - stx):
            stpf = stpc
        else:
            stpf = stpc + (stpq - stpc) / 2.0
        brackt = True
    elif sgnd < 0.0:
        # lower value, derivatives of opposite sign: bracketed
        theta = 3.0 * (fx - fp) / (stp - stx) + dx + dp
        gamma = cubic_gamma(theta, dx, dp)
        if stp > stx:
            gamma = -gamma
        p = (gamma - dp) + theta
        q = ((gamma - dp) + gamma) + dx
        stpc = stp + (p / q) * (stx - stp)
        stpq = stp + (dp / (dp - dx)) * (stx - stp)
        stpf = stpc if abs(stpc - stp) > abs(stpq - stp) else stpq
        brackt = True
    elif abs(dp) < abs(dx):
        # lower value, same-sign derivatives, derivative magnitude decreasing
        theta = 3.0 * (fx - fp) / (stp - stx) + dx + dp
        gamma = cubic_gamma(theta, dx, dp, clamp=True)
        if stp > stx:
            gamma = -gamma
        p = (gamma - dp) + theta
        q = (gamma + (dx - dp)) + gamma
        r = p / q
        if r < 0.0 and gamma != 0.0:
            stpc = stp + r * (stx - stp)
        elif stp > stx:
            stpc = stpmax
        else:
            stpc = stpmin
        stpq = stp + (dp / (dp - dx)) * (stx - stp)
        if brackt:
            stpf = stpc if abs(stpc - stp) < abs(stpq - stp) else stpq
            if stp > stx:
                stpf = min(stp + _P66 * (sty - stp), stpf)
            else:
                stpf = max(stp + _P66 * (sty - stp), stpf)
        else:
            stpf = stpc if abs(stpc - stp) > abs(stpq - stp) else stpq
            stpf = min(stpmax, max(stpmin, stpf))
    else:
        # lower value, same-sign derivatives, derivative not decreasing
        if brackt:
            theta = 3.0 * (fp - fy) / (sty - stp) + dy + dp
            gamma = cubic_gamma(theta, dy, dp)
            if stp > sty:
                gamma = -gamma
            p = (gamma - dp) + theta
            q = ((gamma - dp) + gamma) + dy
            stpf = stp + (p / q) * (sty - stp)
        elif stp > stx:
            stpf = stpmax
        else:
            stpf = stpmin

    if fp > fx:
        sty, fy, dy = stp, fp, dp
    else:
        if sgnd < 0.0:
            sty, fy, dy = stx, fx, dx
        stx, fx, dx = stp, fp, dp
    return stx, fx, dx, sty, fy, dy, stpf, brackt


def more_thuente(
    phi: Callable[[float], tuple[float, float]],
    params: LineSearchParams | None = None,
    phi0: float | None = None,
    dphi0: float | None = None,
) -> LineSearchResult:
    """Find a step satisfying the strong Wolfe conditions along a descent ray.

    Parameters
    ----------
    phi : callable
        ``phi(step) -> (value, derivative)`` of the objective along the ray.
    params : LineSearchParams, optional
    phi0, dphi0 : float, optional
        Value and slope at step 0. Evaluated through ``phi`` when omitted; that
        evaluation is not counted in ``evals``.

    Returns
    -------
    LineSearchResult
        On ``Converged`` the step satisfies
        ``phi(step) <= phi0 + ftol*step*dphi0`` and ``|phi'(step)| <= gtol*|dphi0|``.
        Otherwise the evaluated step with the lowest value. If no trial
        improved on ``phi0`` the step is 0 and the status ``NumericalStall``.

    Raises
    ------
    NotDescentError
        If ``dphi0 >= 0``.
    """
    params = params or LineSearchParams()
    if phi0 is None or dphi0 is None:
        phi0, dphi0 = phi(0.0)
    if not dphi0 < 0:
        raise NotDescentError(f"phi'(0) = {dphi0} is not negative")

    ftol, gtol, xtol = params.ftol, params.gtol, params.xtol
    stpmin, stpmax = params.step_min, params.step_max
    finit, ginit = phi0, dphi0
    gtest = ftol * ginit

    best = (0.0, finit, ginit)
    stp = min(max(params.initial_step, stpmin), stpmax)
    brackt = False
    stage = 1
    width = stpmax - stpmin
    width1 = 2.0 * width
    stx, fx, gx = 0.0, finit, ginit
    sty, fy, gy = 0.0, finit, ginit
    stmin, stmax = 0.0, stp + _XTRAPU * stp

    def give_up(status):
        if best[0] == 0.0:
            status = LineSearchStatus.STALL
        return LineSearchResult(best[0], status, evals, best[1], best[2])

    evals = 0
    while True:
        f, g = phi(stp)
        evals += 1
        if math.isfinite(f) and f < best[1]:
            best = (stp, f, g)

        if not (math.isfinite(f) and math.isfinite(g)):
            # step overshot into overflow: retreat towards the best point
            if evals >= params.max_evals:
                return give_up(LineSearchStatus.MAX_EVALS)
            brackt = True
            sty, fy, gy = stp, math.inf, math.inf
            stmin, stmax = min(stx, stp), max(stx, stp)
            stp = stx + 0.5 * (stp - stx)
            continue

        ftest = finit + stp * gtest
        if f <= ftest and abs(g) <= -gtol * ginit:
            return LineSearchResult(stp, LineSearchStatus.CONVERGED, evals, f, g)

        stalled = (
            (brackt and (stp <= stmin or stp >= stmax))
            or (brackt and stmax - stmin <= xtol * stmax)
            or (stp == stpmax and f <= ftest and g <= gtest)
            or (stp == stpmin and (f > ftest or g >= gtest))
        )
        if stalled:
            return give_up(LineSearchStatus.STALL)
        if evals >= params.max_evals:
            return give_up(LineSearchStatus.MAX_EVALS)

        if stage == 1 and f <= ftest and g >= 0:
            stage = 2

        if stage == 1 and f <= fx and f > ftest:
            # modified function psi(a) = phi(a) - phi0 - a*gtest
            stx, fxm, gxm, sty, fym, gym, stp, brackt = _cstep(
                stx, fx - stx * gtest, gx - gtest,
                sty, fy - sty * gtest, gy - gtest,
                stp, f - stp * gtest, g - gtest,
                brackt, stmin, stmax,
            )
            fx, fy = fxm + stx * gtest, fym + sty * gtest
            gx, gy = gxm + gtest, gym + gtest
        else:
            stx, fx, gx, sty, fy, gy, stp, brackt = _cstep(
                stx, fx, gx, sty, fy, gy, stp, f, g, brackt, stmin, stmax
            )

        if brackt:
            if abs(sty - stx) >= _P66 * width1:
                stp = stx + 0.5 * (sty - stx)
            width1 = width
            width = abs(sty - stx)
            stmin, stmax = min(stx, sty), max(stx, sty)
        else:
            stmin = stp + _XTRAPL * (stp - stx)
            stmax = stp + _XTRAPU * (stp - stx)

        stp = min(max(stp, stpmin), stpmax)
        if not math.isfinite(stp):
            return give_up(LineSearchStatus.STALL)
        if brackt and (stp <= stmin or stp >= stmax or stmax - stmin <= xtol * stmax):
            stp = stx

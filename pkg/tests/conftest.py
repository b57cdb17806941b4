import numpy as np
import pytest
from hypothesis import settings

from cpngmres.tensor import DenseTensor, SparseTensor

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def full_oracle(factors):
    """Explicit sum of outer products, independent of the Khatri-Rao code path."""
    out = 0.0
    for r in range(factors[0].shape[1]):
        term = factors[0][:, r]
        for a in factors[1:]:
            term = np.multiply.outer(term, a[:, r])
        out = out + term
    return out


def objective_oracle(data, factors):
    resid = data - full_oracle(factors)
    return 0.5 * float(np.sum(resid**2))


def fd_gradient(fun, x, h=1e-5):
    """Central finite differences of a scalar function of a flat vector."""
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def random_dense(rng, shape):
    return DenseTensor(rng.standard_normal(shape))


def random_sparse(rng, shape, density=0.3):
    data = rng.standard_normal(shape) * (rng.random(shape) < density)
    data.flat[0] = 1.0  # never all-zero
    return SparseTensor.from_dense(DenseTensor(data))


def random_factors(rng, shape, rank):
    return [rng.standard_normal((s, rank)) for s in shape]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def random_spd(rng, n=5):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q @ np.diag(rng.uniform(0.5, 10.0, n)) @ q.T


def linear_ngmres_run(A, b, u0, iters, window=None):
    """N-GMRES on f = 0.5 u'Au - b'u with a Richardson preconditioner and unit steps.

    Returns the accepted iterates and, per iteration, ``(u_bar, u_hat)``.
    """
    from cpngmres.ngmres import NGMRES, NGMRESConfig

    omega = 1.0 / np.linalg.eigvalsh(A).max()
    fg = lambda u: (0.5 * u @ A @ u - b @ u, A @ u - b)
    precond = lambda u: u + omega * (b - A @ u)
    cfg = NGMRESConfig(window=window or iters + 1, use_linesearch=False, restart_on_ascent=False)
    drv = NGMRES(fg, precond, cfg)
    drv.start(u0)
    accepted, steps = [np.array(u0, dtype=float)], []
    for _ in range(iters):
        info = drv.step()
        steps.append((info.u_bar, info.u_hat))
        accepted.append(info.u)
    return accepted, steps, omega


def affine_min_residual(A, b, u_bar, previous):
    """Independent oracle: min ||A u - b|| over u in u_bar + span{u_bar - u_j}."""
    D = np.column_stack([u_bar - u for u in previous])
    r0 = A @ u_bar - b
    c, *_ = np.linalg.lstsq(A @ D, -r0, rcond=None)
    return float(np.linalg.norm(r0 + A @ D @ c))

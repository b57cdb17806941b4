import numpy as np
import pytest

from cpngmres.kruskal import CPObjective, fit_h, pack
from cpngmres.ngmres import NGMRES, AccelWindow, NGMRESConfig, accelerate, ngmres_minimize, ngmres_solve
from cpngmres.problems import DenseProblemSpec, gen_dense_problem, random_initial_guess
from cpngmres.trace import StopReason

from conftest import affine_min_residual, linear_ngmres_run, random_spd


def test_window_is_fifo_and_resets():
    w = AccelWindow(2)
    for k in range(3):
        w.append(np.full(2, k), np.full(2, -k))
    assert [u[0] for u in w.iterates()] == [1, 2]
    w.reset(np.zeros(2), np.ones(2))
    assert len(w) == 1
    with pytest.raises(ValueError):
        AccelWindow(0)


def test_accelerate_matches_lstsq(rng):
    n, m = 8, 3
    w = AccelWindow(5)
    for _ in range(m):
        w.append(rng.standard_normal(n), rng.standard_normal(n))
    u_bar, g_bar = rng.standard_normal(n), rng.standard_normal(n)
    u_hat, alpha = accelerate(w, u_bar, g_bar)
    P = g_bar[:, None] - np.column_stack(w.gradients())
    expected, *_ = np.linalg.lstsq(P, -g_bar, rcond=None)
    np.testing.assert_allclose(alpha, expected, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(u_hat, u_bar + (u_bar[:, None] - np.column_stack(w.iterates())) @ alpha)


def test_accelerate_regularizes_duplicate_columns(rng):
    w = AccelWindow(3)
    u, g = rng.standard_normal(4), rng.standard_normal(4)
    w.append(u, g)
    w.append(u, g)
    u_bar, g_bar = rng.standard_normal(4), rng.standard_normal(4)
    u_hat, alpha = accelerate(w, u_bar, g_bar)
    # only the combined coefficient is determined
    p = g_bar - g
    assert np.all(np.isfinite(alpha))
    assert alpha.sum() == pytest.approx(-(p @ g_bar) / (p @ p), rel=1e-8)


def test_accelerate_window_of_current_point_gives_zero_step(rng):
    # the only windowed pair equals (u_bar, g_bar): P = 0 and u_hat = u_bar
    w = AccelWindow(1)
    u, g = rng.standard_normal(4), rng.standard_normal(4)
    w.append(u, g)
    u_hat, alpha = accelerate(w, u, g)
    np.testing.assert_array_equal(u_hat, u)
    np.testing.assert_array_equal(alpha, [0.0])


@pytest.mark.parametrize("seed", range(5))
def test_linear_case_matches_affine_oracle(seed):
    rng = np.random.default_rng(seed)
    A, b = random_spd(rng), rng.standard_normal(5)
    accepted, steps, _ = linear_ngmres_run(A, b, rng.standard_normal(5), iters=4)
    for k, (u_bar, u_hat) in enumerate(steps):
        got = np.linalg.norm(A @ u_hat - b)
        assert abs(got - affine_min_residual(A, b, u_bar, accepted[: k + 1])) <= 1e-9


def test_unregularized_recombination_matches_oracle_through_termination():
    # with epsilon_reg = 0 the recombination solves the plain normal equations and
    # reproduces the oracle even at the iteration where the residual reaches zero
    for seed in range(10):
        rng = np.random.default_rng(seed)
        A, b, u0 = random_spd(rng), rng.standard_normal(5), rng.standard_normal(5)
        omega = 1.0 / np.linalg.eigvalsh(A).max()
        drv = NGMRES(lambda u: (0.5 * u @ A @ u - b @ u, A @ u - b), lambda u: u + omega * (b - A @ u),
                     NGMRESConfig(window=6, epsilon_reg=0.0, use_linesearch=False, restart_on_ascent=False))
        drv.start(u0)
        accepted = [u0]
        for _ in range(5):
            info = drv.step()
            got = np.linalg.norm(A @ info.u_hat - b)
            assert abs(got - affine_min_residual(A, b, info.u_bar, accepted)) <= 1e-9
            accepted.append(info.u)


def test_one_dimensional_linear_root():
    w = AccelWindow(1)
    w.append(np.array([0.0]), np.array([-4.0]))  # g(u) = 2u - 4
    u_hat, alpha = accelerate(w, np.array([1.0]), np.array([-2.0]))
    assert alpha[0] == pytest.approx(1.0, rel=1e-10)
    assert u_hat[0] == pytest.approx(2.0, rel=1e-10)


def test_regularized_system_residual(rng):
    w = AccelWindow(6)
    base = rng.standard_normal(30)
    for k in range(6):
        w.append(rng.standard_normal(30), base + 10.0 ** -k * rng.standard_normal(30))
    g_bar = base + 1e-7 * rng.standard_normal(30)
    _, alpha = accelerate(w, rng.standard_normal(30), g_bar)
    P = g_bar[:, None] - np.column_stack(w.gradients())
    M = P.T @ P
    M += 1e-12 * M.diagonal().max() * np.eye(6)
    rhs = -P.T @ g_bar
    assert np.linalg.norm(M @ alpha - rhs) <= 1e-8 * np.linalg.norm(rhs)


@pytest.mark.parametrize("seed", range(5))
def test_linear_case_is_krylov_minimal(seed):
    # with a Richardson preconditioner the accelerated iterates minimize the
    # residual over u0 + K_{k+1}(A, r0), as GMRES does
    rng = np.random.default_rng(100 + seed)
    A, b, u0 = random_spd(rng), rng.standard_normal(5), rng.standard_normal(5)
    accepted, steps, _ = linear_ngmres_run(A, b, u0, iters=4)
    r0 = b - A @ u0
    for k, (_, u_hat) in enumerate(steps):
        K = np.column_stack([np.linalg.matrix_power(A, j) @ r0 for j in range(k + 1)])
        Q, _ = np.linalg.qr(K)
        c, *_ = np.linalg.lstsq(A @ Q, r0, rcond=None)
        expected = np.linalg.norm(r0 - A @ Q @ c)
        assert np.linalg.norm(b - A @ u_hat) == pytest.approx(expected, rel=1e-6, abs=1e-10)


def test_restart_when_direction_ascends():
    # a preconditioner that lands exactly on the minimizer gives g_bar = 0, slope 0
    A = np.diag([1.0, 2.0])
    fg = lambda u: (0.5 * u @ A @ u, A @ u)
    drv = NGMRES(fg, lambda u: np.zeros(2), NGMRESConfig(window=5))
    drv.start(np.ones(2))
    info = drv.step()
    assert info.restart and info.beta is None
    assert len(drv.window) == 1
    np.testing.assert_array_equal(info.u, np.zeros(2))


def test_minimize_quadratic_and_counters():
    rng = np.random.default_rng(3)
    A, b = random_spd(rng, 6), rng.standard_normal(6)
    fg = lambda u: (0.5 * u @ A @ u - b @ u, A @ u - b)
    omega = 1.0 / np.linalg.eigvalsh(A).max()
    u, trace, reason = ngmres_minimize(fg, lambda u: u + omega * (b - A @ u), np.zeros(6),
                                       NGMRESConfig(tol_grad=1e-10))
    assert reason is StopReason.GRAD_TOL
    np.testing.assert_allclose(u, np.linalg.solve(A, b), atol=1e-8)
    assert trace[-1].precond_calls == trace.iterations
    assert all(r.fevals == r.gevals for r in trace)
    assert trace.column("fevals") == sorted(trace.column("fevals"))


def test_stationary_start_stops_immediately():
    fg = lambda u: (0.5 * float(u @ u), u.copy())
    u, trace, reason = ngmres_minimize(fg, lambda u: u, np.zeros(3))
    assert reason is StopReason.GRAD_TOL and trace.iterations <= 1


def test_ngmres_solve_dense_exact_recovery():
    prob = gen_dense_problem(DenseProblemSpec(s=10, c=0.5, R=3, seed=2))
    k0 = random_initial_guess(prob.tensor.shape, 3, 2)
    k, trace, reason = ngmres_solve(prob.tensor, k0)
    assert reason is StopReason.GRAD_TOL
    assert fit_h(prob.tensor, k) < 1e-8
    assert trace[0].iter == 0 and trace[0].restart is False
    for r in trace[1:]:
        assert r.beta is None or r.beta >= 0


def test_iterates_are_canonical():
    prob = gen_dense_problem(DenseProblemSpec(s=6, c=0.5, R=2, seed=0))
    obj = CPObjective(prob.tensor, 2)
    k0 = random_initial_guess(prob.tensor.shape, 2, 0)
    from cpngmres.als import als_sweep

    drv = NGMRES(obj.fg, lambda u: pack(als_sweep(prob.tensor, obj.ktensor(u))),
                 NGMRESConfig(), obj.canonicalize)
    drv.start(pack(k0))
    for _ in range(3):
        info = drv.step()
        norms = np.array([np.linalg.norm(a, axis=0) for a in obj.ktensor(info.u).factors])
        np.testing.assert_allclose(norms, np.broadcast_to(norms[0], norms.shape), rtol=1e-10)
        f, g = obj.fg(info.u)
        np.testing.assert_allclose(info.g, g, rtol=1e-8, atol=1e-10)


def test_config_validation():
    with pytest.raises(ValueError):
        NGMRESConfig(window=0)
    with pytest.raises(ValueError):
        NGMRESConfig(epsilon_reg=-1)
    with pytest.raises(ValueError):
        NGMRESConfig(tol_grad=0)

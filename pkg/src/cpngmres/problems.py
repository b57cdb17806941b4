"""Seeded test-problem generators: collinear dense CP tensors and sparse Laplacian tensors.

Random streams use numpy's PCG64 bit generator. For a given integer ``seed``
the problem stream is ``default_rng([seed, 0])`` and the initial-guess stream
is ``default_rng([seed, 1])``, so problem data and starting points are
reproducible independently of each other. Dense problems draw, in order: the
three ``s x R`` uniform factor matrices (mode order), then ``N1`` and ``N2``
(standard normal, ziggurat transform, first-mode-fastest fill). Both noise
tensors are drawn even when a noise stage is switched off.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .kruskal import KruskalTensor, full
from .tensor import DenseTensor, SparseTensor


@dataclass(frozen=True)
class DenseProblemSpec:
    s: int
    c: float
    R: int
    l1: float = 0.0
    l2: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.s >= self.R >= 1:
            raise ValueError("need s >= R >= 1")
        if not 0 <= self.c < 1:
            raise ValueError("collinearity must lie in [0, 1)")
        if not (0 <= self.l1 < 100 and 0 <= self.l2 < 100):
            raise ValueError("noise levels must lie in [0, 100)")

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())


@dataclass(frozen=True)
class LaplacianSpec:
    d: int
    s: int

    def __post_init__(self):
        if self.d < 1 or self.s < 2:
            raise ValueError("need d >= 1 and s >= 2")

    @property
    def order(self) -> int:
        return 2 * self.d

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())


class DenseProblem(NamedTuple):
    tensor: DenseTensor
    noise_free: DenseTensor
    ktensor: KruskalTensor


def problem_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), 0])


def init_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), 1])


def collinearity_matrix(R: int, c: float) -> np.ndarray:
    return (1.0 - c) * np.eye(R) + c * np.ones((R, R))


def _orthonormal_columns(mat: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(mat)
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * signs


def gen_collinear_factors(spec: DenseProblemSpec, rng: np.random.Generator | None = None,
                          order: int = 3) -> list[np.ndarray]:
    """``order`` factors ``Q @ C`` with ``C' C`` the collinearity matrix, so every Gram is ``K``."""
    rng = rng if rng is not None else problem_rng(spec.seed)
    chol = np.linalg.cholesky(collinearity_matrix(spec.R, spec.c)).T  # upper, C'C = K
    return [_orthonormal_columns(rng.random((spec.s, spec.R))) @ chol for _ in range(order)]


def _noise(rng, shape):
    return rng.standard_normal(int(np.prod(shape))).reshape(shape, order="F")


def gen_dense_problem(spec: DenseProblemSpec) -> DenseProblem:
    """Collinear rank-``R`` tensor plus homoskedastic then heteroskedastic noise.

    A noise level of 0 switches that stage off.
    """
    rng = problem_rng(spec.seed)
    kt = KruskalTensor(gen_collinear_factors(spec, rng))
    t_r = full(kt).data
    shape = t_r.shape
    n1 = _noise(rng, shape)
    n2 = _noise(rng, shape)

    t_hat = t_r
    if spec.l1 > 0:
        t_hat = t_r + (100.0 / spec.l1 - 1.0) ** -0.5 * np.linalg.norm(t_r) * n1 / np.linalg.norm(n1)
    t = t_hat
    if spec.l2 > 0:
        hetero = n2 * t_hat
        t = t_hat + (100.0 / spec.l2 - 1.0) ** -0.5 * np.linalg.norm(t_hat) * hetero / np.linalg.norm(hetero)
    return DenseProblem(DenseTensor(t), DenseTensor(t_r), kt)


def laplacian_nnz(spec: LaplacianSpec) -> int:
    d, s = spec.d, spec.s
    return s**d + 2 * d * s ** (d - 1) * (s - 1)


def gen_laplacian(spec: LaplacianSpec) -> SparseTensor:
    """Finite-difference Laplacian on an ``s^d`` grid as an order-``2d`` tensor.

    Entry ``(i, j)`` (grid points ``i`` and ``j``, each ``d`` indices) is ``2d``
    on the diagonal and ``-1`` between grid neighbours.
    """
    d, s = spec.d, spec.s
    points = np.array(list(itertools.product(range(s), repeat=d)), dtype=np.int64).reshape(-1, d)
    subs = [np.hstack([points, points])]
    vals = [np.full(len(points), 2.0 * d)]
    for axis in range(d):
        lower = points[points[:, axis] < s - 1]
        upper = lower.copy()
        upper[:, axis] += 1
        subs += [np.hstack([lower, upper]), np.hstack([upper, lower])]
        vals += [np.full(len(lower), -1.0)] * 2
    return SparseTensor((s,) * (2 * d), np.vstack(subs), np.concatenate(vals))


def random_initial_guess(shape, rank: int, seed: int) -> KruskalTensor:
    """Independent uniform(0, 1) factor entries from the initial-guess stream."""
    rng = init_rng(seed)
    return KruskalTensor([rng.random((size, rank)) for size in shape])

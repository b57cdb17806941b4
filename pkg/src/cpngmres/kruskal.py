"""Kruskal (CP) tensors, the least-squares objective, its gradient and iterate packing."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .tensor import (
    DenseTensor,
    SparseTensor,
    Tensor,
    TensorFormatError,
    _check_shape,
    khatri_rao,
    mttkrp,
)


class KruskalTensor:
    """Sum of ``R`` rank-one terms, stored as ``N`` factor matrices of shape ``(I_n, R)``.

    Weights are absorbed into the factor columns. Factors are copied and made
    read-only on construction.
    """

    def __init__(self, factors: Sequence[np.ndarray]):
        factors = [np.array(a, dtype=float) for a in factors]
        if not factors:
            raise ValueError("a Kruskal tensor needs at least one factor")
        if any(a.ndim != 2 for a in factors):
            raise ValueError("factors must be 2-D")
        rank = factors[0].shape[1]
        if rank < 1 or any(a.shape[1] != rank for a in factors):
            raise ValueError("all factors must share a positive column count")
        if not all(np.all(np.isfinite(a)) for a in factors):
            raise ValueError("factor entries must be finite")
        _check_shape(a.shape[0] for a in factors)
        for a in factors:
            a.flags.writeable = False
        self.factors = tuple(factors)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.shape[0] for a in self.factors)

    @property
    def ndim(self) -> int:
        return len(self.factors)

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    def full(self) -> DenseTensor:
        return full(self)

    def __repr__(self):
        return f"KruskalTensor(shape={self.shape}, rank={self.rank})"


def _full_array(factors: Sequence[np.ndarray]) -> np.ndarray:
    shape = tuple(a.shape[0] for a in factors)
    if len(factors) == 1:
        return factors[0].sum(axis=1)
    flat = factors[0] @ khatri_rao(factors[1:]).T
    return flat.reshape(shape, order="F")


def full(ktensor: KruskalTensor) -> DenseTensor:
    """Dense tensor with entries ``sum_r prod_n A_n[i_n, r]``."""
    return DenseTensor(_full_array(ktensor.factors))


def _check_match(tensor: Tensor, ktensor: KruskalTensor):
    if tuple(tensor.shape) != ktensor.shape:
        raise ValueError(f"tensor shape {tensor.shape} does not match Kruskal shape {ktensor.shape}")


def _grams(factors):
    return [a.T @ a for a in factors]


def _hadamard_except(grams, skip=None):
    out = np.ones_like(grams[0])
    for k, g in enumerate(grams):
        if k != skip:
            out = out * g
    return 0.5 * (out + out.T)


def _sparse_inner(tensor: SparseTensor, factors) -> float:
    prod = np.repeat(tensor.vals[:, None], factors[0].shape[1], axis=1)
    for m, a in enumerate(factors):
        prod *= a[tensor.subs[:, m], :]
    return float(prod.sum())


def objective_efficient(tensor: Tensor, ktensor: KruskalTensor) -> float:
    """``0.5*||T||^2 - <T, K> + 0.5 * 1' Gamma 1`` without forming ``full(K)``."""
    _check_match(tensor, ktensor)
    factors = ktensor.factors
    if isinstance(tensor, SparseTensor):
        inner = _sparse_inner(tensor, factors)
    else:
        inner = float(np.sum(mttkrp(tensor, factors, 0) * factors[0]))
    gamma = _hadamard_except(_grams(factors))
    return 0.5 * tensor.norm**2 - inner + 0.5 * float(gamma.sum())


def objective(tensor: Tensor, ktensor: KruskalTensor) -> float:
    """``f = 0.5 * ||T - K||_F^2``.

    Dense data uses the explicit residual, which keeps ``f`` accurate down to
    exact fits; sparse data uses :func:`objective_efficient`.
    """
    _check_match(tensor, ktensor)
    if isinstance(tensor, SparseTensor):
        return objective_efficient(tensor, ktensor)
    resid = tensor.data - _full_array(ktensor.factors)
    return 0.5 * float(np.vdot(resid, resid))


def objective_and_gradient(tensor: Tensor, ktensor: KruskalTensor) -> tuple[float, list[np.ndarray]]:
    """Objective and gradient blocks ``G_n = -T_(n) Phi_n + A_n Gamma_n`` sharing one set of MTTKRPs."""
    _check_match(tensor, ktensor)
    factors = ktensor.factors
    grams = _grams(factors)
    mk = [mttkrp(tensor, factors, n) for n in range(ktensor.ndim)]
    grad = [-mk[n] + factors[n] @ _hadamard_except(grams, n) for n in range(ktensor.ndim)]
    if isinstance(tensor, SparseTensor):
        inner = float(np.sum(mk[0] * factors[0]))
        f = 0.5 * tensor.norm**2 - inner + 0.5 * float(_hadamard_except(grams).sum())
    else:
        resid = tensor.data - _full_array(factors)
        f = 0.5 * float(np.vdot(resid, resid))
    return f, grad


def gradient(tensor: Tensor, ktensor: KruskalTensor) -> np.ndarray:
    """Packed gradient vector (same layout as :func:`pack`)."""
    return pack_blocks(objective_and_gradient(tensor, ktensor)[1])


def fit_h(tensor: Tensor, ktensor: KruskalTensor, f: float | None = None) -> float:
    """Normalized distance ``||T - K||_F / ||T||_F``."""
    if tensor.norm == 0:
        raise ValueError("normalized distance is undefined for an all-zero data tensor")
    if f is None:
        f = objective(tensor, ktensor)
    return math.sqrt(max(2.0 * f, 0.0)) / tensor.norm


# -- normalization -----------------------------------------------------------


def _normalization(factors):
    """Per-column rescaling and term order used by :func:`normalize_and_reorder`.

    Returns ``scales`` (one ``(R,)`` array per mode, product over modes equal to
    one for every term) and the stable permutation sorting terms by decreasing
    norm product. Terms with a zero column keep scale 1 and sort last.
    """
    ndim = len(factors)
    norms = np.array([np.linalg.norm(a, axis=0) for a in factors])  # (N, R)
    lam = np.prod(norms, axis=0)
    alive = np.all(norms > 0, axis=0)
    scales = np.ones_like(norms)
    root = np.where(alive, lam, 1.0) ** (1.0 / ndim)
    scales[:, alive] = root[alive] / norms[:, alive]
    key = np.where(alive, lam, -1.0)
    order = np.argsort(-key, kind="stable")
    return scales, order, lam


def normalize_and_reorder(ktensor: KruskalTensor) -> KruskalTensor:
    """Equalize column norms within each rank-one term and sort terms by decreasing weight.

    For term ``r`` with ``lam_r = prod_n ||a_r^(n)||``, every column becomes
    ``a_r^(n) / ||a_r^(n)|| * lam_r**(1/N)``. The tensor represented is unchanged.
    """
    scales, order, _ = _normalization(ktensor.factors)
    return KruskalTensor([(a * s)[:, order] for a, s in zip(ktensor.factors, scales)])


def normalize_with_gradient(ktensor: KruskalTensor, grad_blocks):
    """Normalize ``ktensor`` and map its gradient blocks to the new representation.

    Because per-term scales multiply to one, ``f`` is invariant and the chain
    rule gives ``G_new = G_old / scale`` column-wise.
    """
    scales, order, _ = _normalization(ktensor.factors)
    new = KruskalTensor([(a * s)[:, order] for a, s in zip(ktensor.factors, scales)])
    new_grad = [(g / s)[:, order] for g, s in zip(grad_blocks, scales)]
    return new, new_grad


# -- packing -------------------------------------------------------------------


def pack_blocks(blocks: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(b).ravel(order="F") for b in blocks])


def pack(ktensor: KruskalTensor) -> np.ndarray:
    """Flat iterate vector: factors in mode order, each column-major."""
    return pack_blocks(ktensor.factors)


def unpack_blocks(vec: np.ndarray, shape, rank: int) -> list[np.ndarray]:
    vec = np.asarray(vec, dtype=float)
    expected = rank * sum(shape)
    if vec.ndim != 1 or vec.size != expected:
        raise ValueError(f"iterate vector has length {vec.size}, expected {expected}")
    blocks, start = [], 0
    for size in shape:
        stop = start + size * rank
        blocks.append(vec[start:stop].reshape((size, rank), order="F"))
        start = stop
    return blocks


def unpack(vec: np.ndarray, shape, rank: int) -> KruskalTensor:
    return KruskalTensor(unpack_blocks(vec, shape, rank))


# -- objective wrapper for the flat-vector optimizers ----------------------------


class CPObjective:
    """Objective/gradient evaluator over packed iterates, with evaluation counters.

    One instance belongs to one solve; it is not shared between threads.
    """

    def __init__(self, tensor: Tensor, rank: int):
        if tensor.norm == 0:
            raise ValueError("data tensor is identically zero")
        self.tensor = tensor
        self.shape = tuple(tensor.shape)
        self.rank = int(rank)
        self.fevals = 0
        self.gevals = 0

    def ktensor(self, u) -> KruskalTensor:
        return unpack(u, self.shape, self.rank)

    def fg(self, u) -> tuple[float, np.ndarray]:
        self.fevals += 1
        self.gevals += 1
        f, blocks = objective_and_gradient(self.tensor, self.ktensor(u))
        return f, pack_blocks(blocks)

    def value(self, u) -> float:
        self.fevals += 1
        return objective(self.tensor, self.ktensor(u))

    def h(self, f: float) -> float:
        return math.sqrt(max(2.0 * f, 0.0)) / self.tensor.norm

    def gnorm_rel(self, g) -> float:
        return float(np.linalg.norm(g)) / self.tensor.norm

    def canonicalize(self, u, g):
        """Normalized iterate and its transformed gradient, both packed."""
        k, blocks = normalize_with_gradient(self.ktensor(u), unpack_blocks(g, self.shape, self.rank))
        return pack(k), pack_blocks(blocks)


# -- ktensor text format ---------------------------------------------------------


def write_ktensor(ktensor: KruskalTensor, path) -> None:
    """``ktensor <N> <R> <I1> ... <IN>`` then all factor entries, column-major, one per line."""
    with open(path, "w") as fh:
        fh.write(f"ktensor {ktensor.ndim} {ktensor.rank} {' '.join(map(str, ktensor.shape))}\n")
        for v in pack(ktensor):
            fh.write(f"{float(v)!r}\n")


def read_ktensor(path) -> KruskalTensor:
    with open(path) as fh:
        lines = fh.read().splitlines()
    try:
        head = lines[0].split()
        if head[0] != "ktensor":
            raise ValueError
        ndim, rank = int(head[1]), int(head[2])
        shape = tuple(int(x) for x in head[3:])
        if len(shape) != ndim:
            raise ValueError
    except (ValueError, IndexError):
        raise TensorFormatError(f"{path}: line 1: expected 'ktensor <N> <R> <I1> ... <IN>'") from None
    values = []
    for lineno, ln in enumerate(lines[1:], start=2):
        if not ln.strip():
            continue
        try:
            values.append(float(ln))
        except ValueError:
            raise TensorFormatError(f"{path}: line {lineno}: not a number: {ln.strip()!r}") from None
    try:
        return unpack(np.array(values), shape, rank)
    except ValueError as exc:
        raise TensorFormatError(f"{path}: {exc}") from None

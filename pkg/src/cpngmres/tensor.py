"""Dense and sparse N-way tensors and the multilinear kernels used by the solvers.

Linearization convention: element ``(i_1, ..., i_N)`` of a tensor with shape
``(I_1, ..., I_N)`` lives at flat offset ``i_1 + i_2*I_1 + i_3*I_1*I_2 + ...``
(first mode fastest, i.e. Fortran order). Mode-n matricization keeps the same
ordering for the remaining modes, and :func:`khatri_rao` lists its first
argument as the fastest-varying row index, so that for a Kruskal tensor

    matricize(full(K), n) == A[n] @ khatri_rao([A[m] for m != n]).T

with the other factors passed in increasing mode order.

Mode indices are 0-based in the Python API; the ``.tns`` text format is 1-based.
"""
from __future__ import annotations

import math
from functools import cached_property
from typing import Sequence, Union

import numpy as np

_MAX_ELEMENTS = np.iinfo(np.int64).max


def _check_shape(shape) -> tuple[int, ...]:
    shape = tuple(int(i) for i in shape)
    if len(shape) < 1:
        raise ValueError("tensor order must be at least 1")
    if any(i < 1 for i in shape):
        raise ValueError(f"all mode sizes must be >= 1, got {shape}")
    if math.prod(shape) > _MAX_ELEMENTS:
        raise OverflowError(f"element count of shape {shape} exceeds the index range")
    return shape


def _check_mode(n: int, ndim: int) -> int:
    if not 0 <= n < ndim:
        raise IndexError(f"mode {n} out of range for an order-{ndim} tensor")
    return n


class DenseTensor:
    """Full-storage N-way array.

    Parameters
    ----------
    data : array_like
        N-dimensional array. Indexing ``data[i1, ..., iN]`` addresses element
        ``(i1, ..., iN)``; storage is converted to first-mode-fastest order.
    """

    def __init__(self, data):
        data = np.array(data, dtype=float, order="F")
        if data.ndim == 0:
            data = data.reshape(1)
        self.shape = _check_shape(data.shape)
        if not np.all(np.isfinite(data)):
            raise ValueError("dense tensor entries must be finite")
        data.flags.writeable = False
        self.data = data

    @classmethod
    def from_values(cls, shape, values) -> "DenseTensor":
        """Build from a flat, first-mode-fastest value array."""
        shape = _check_shape(shape)
        values = np.asarray(values, dtype=float).ravel()
        if values.size != math.prod(shape):
            raise ValueError(f"expected {math.prod(shape)} values for shape {shape}, got {values.size}")
        return cls(values.reshape(shape, order="F"))

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def values(self) -> np.ndarray:
        return self.data.ravel(order="F")

    @cached_property
    def norm(self) -> float:
        return float(np.linalg.norm(self.data.ravel()))

    @cached_property
    def _unfoldings(self) -> dict:
        return {}

    def unfold(self, n: int) -> np.ndarray:
        """Cached mode-n matricization (read-only)."""
        n = _check_mode(n, self.ndim)
        cache = self._unfoldings
        if n not in cache:
            mat = np.moveaxis(self.data, n, 0).reshape(self.shape[n], -1, order="F")
            mat = np.ascontiguousarray(mat)
            mat.flags.writeable = False
            cache[n] = mat
        return cache[n]

    def __repr__(self):
        return f"DenseTensor(shape={self.shape})"


class SparseTensor:
    """Coordinate-list N-way tensor.

    Entries are kept sorted lexicographically by their index tuples, duplicate
    coordinates are summed on construction and explicit zeros are dropped.

    Parameters
    ----------
    shape : sequence of int
    subs : (nnz, N) array_like of int
        0-based coordinates.
    vals : (nnz,) array_like of float
    """

    def __init__(self, shape, subs, vals):
        self.shape = _check_shape(shape)
        ndim = len(self.shape)
        subs = np.asarray(subs, dtype=np.int64).reshape(-1, ndim)
        vals = np.asarray(vals, dtype=float).ravel()
        if subs.shape[0] != vals.size:
            raise ValueError("subs and vals have different lengths")
        if not np.all(np.isfinite(vals)):
            raise ValueError("sparse tensor values must be finite")
        if subs.size and (np.any(subs < 0) or np.any(subs >= np.array(self.shape))):
            raise IndexError("sparse tensor coordinates out of bounds")

        if vals.size:
            # lexsort treats the last key as primary
            order = np.lexsort(subs.T[::-1])
            subs, vals = subs[order], vals[order]
            new_run = np.ones(vals.size, dtype=bool)
            new_run[1:] = np.any(subs[1:] != subs[:-1], axis=1)
            starts = np.flatnonzero(new_run)
            vals = np.add.reduceat(vals, starts)
            subs = subs[starts]
            keep = vals != 0.0
            subs, vals = subs[keep], vals[keep]

        subs.flags.writeable = False
        vals.flags.writeable = False
        self.subs = subs
        self.vals = vals

    @classmethod
    def from_dense(cls, tensor: DenseTensor) -> "SparseTensor":
        subs = np.argwhere(tensor.data != 0)
        return cls(tensor.shape, subs, tensor.data[tuple(subs.T)])

    def to_dense(self) -> DenseTensor:
        out = np.zeros(self.shape, order="F")
        out[tuple(self.subs.T)] = self.vals
        return DenseTensor(out)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    @cached_property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vals))

    def __repr__(self):
        return f"SparseTensor(shape={self.shape}, nnz={self.nnz})"


Tensor = Union[DenseTensor, SparseTensor]


class SparseUnfolding:
    """Index-mapped view of a sparse tensor's mode-n matricization.

    Never materialized; :func:`mttkrp` consumes it directly. ``toarray`` exists
    for small test cases only.
    """

    def __init__(self, tensor: SparseTensor, n: int):
        self.tensor = tensor
        self.mode = n
        others = [m for m in range(tensor.ndim) if m != n]
        self.shape = (tensor.shape[n], math.prod(tensor.shape[m] for m in others))
        strides = np.cumprod([1] + [tensor.shape[m] for m in others[:-1]]).astype(np.int64)
        self.rows = tensor.subs[:, n]
        self.cols = tensor.subs[:, others] @ strides if others else np.zeros(tensor.nnz, np.int64)

    def toarray(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.tensor.vals
        return out


def frobenius_norm(tensor: Tensor) -> float:
    """Square root of the sum of squared entries (stored entries for sparse input)."""
    return tensor.norm


def matricize(tensor: Tensor, n: int):
    """Mode-n matricization ``T_(n)`` of shape ``(I_n, prod_{m != n} I_m)``.

    Dense input gives an ndarray; sparse input gives a :class:`SparseUnfolding`.
    """
    _check_mode(n, tensor.ndim)
    if isinstance(tensor, SparseTensor):
        return SparseUnfolding(tensor, n)
    return tensor.unfold(n)


def khatri_rao(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Column-wise Kronecker product, first matrix's row index varying fastest.

    Row ``i_1 + i_2*I_1 + ...`` of column ``r`` equals
    ``mats[0][i_1, r] * mats[1][i_2, r] * ...``.
    """
    mats = [np.asarray(m, dtype=float) for m in mats]
    if not mats:
        raise ValueError("khatri_rao needs at least one matrix")
    ncols = mats[0].shape[1]
    if any(m.ndim != 2 or m.shape[1] != ncols for m in mats):
        raise ValueError("all matrices must be 2-D with the same number of columns")
    out = mats[0]
    for m in mats[1:]:
        # new matrix index becomes the slower one
        out = (m[:, None, :] * out[None, :, :]).reshape(-1, ncols)
    return out


def _check_factors(tensor: Tensor, factors: Sequence[np.ndarray]):
    if len(factors) != tensor.ndim:
        raise ValueError(f"expected {tensor.ndim} factors, got {len(factors)}")
    rank = factors[0].shape[1]
    for k, (a, size) in enumerate(zip(factors, tensor.shape)):
        if a.ndim != 2 or a.shape != (size, rank):
            raise ValueError(f"factor {k} has shape {a.shape}, expected ({size}, {rank})")


def mttkrp(tensor: Tensor, factors: Sequence[np.ndarray], n: int) -> np.ndarray:
    """Matricized tensor times Khatri-Rao product, ``T_(n) @ khatri_rao(others)``.

    The sparse path only touches stored entries (``O(nnz * R * N)``).
    """
    _check_mode(n, tensor.ndim)
    _check_factors(tensor, factors)
    rank = factors[0].shape[1]
    others = [factors[m] for m in range(tensor.ndim) if m != n]

    if isinstance(tensor, SparseTensor):
        contrib = np.repeat(tensor.vals[:, None], rank, axis=1)
        for m in range(tensor.ndim):
            if m != n:
                contrib *= factors[m][tensor.subs[:, m], :]
        rows = tensor.subs[:, n]
        out = np.empty((tensor.shape[n], rank))
        for r in range(rank):
            out[:, r] = np.bincount(rows, weights=contrib[:, r], minlength=tensor.shape[n])
        return out

    if not others:
        return tensor.unfold(n) @ np.ones((1, rank))
    return tensor.unfold(n) @ khatri_rao(others)


def gram_hadamard(factors: Sequence[np.ndarray], skip: int | None = None) -> np.ndarray:
    """Elementwise product of the factor Gram matrices ``A_l.T @ A_l``, omitting ``skip``."""
    if not factors:
        raise ValueError("need at least one factor")
    rank = factors[0].shape[1]
    if any(a.shape[1] != rank for a in factors):
        raise ValueError("all factors must have the same number of columns")
    out = np.ones((rank, rank))
    for k, a in enumerate(factors):
        if k != skip:
            out *= a.T @ a
    return 0.5 * (out + out.T)


# -- .tns text format --------------------------------------------------------


class TensorFormatError(ValueError):
    """Malformed tensor or ktensor text file; message names the offending line."""


def write_tns(tensor: Tensor, path) -> None:
    """Write ``tns <N> <I1> ... <IN> <nnz>`` followed by 1-based coordinate lines.

    Dense tensors list every entry, zeros included, in first-mode-fastest order.
    """
    if isinstance(tensor, DenseTensor):
        subs = np.array(np.unravel_index(np.arange(tensor.size), tensor.shape, order="F")).T
        vals = tensor.values
    else:
        subs, vals = tensor.subs, tensor.vals
    with open(path, "w") as fh:
        fh.write(f"tns {tensor.ndim} {' '.join(map(str, tensor.shape))} {vals.size}\n")
        for idx, v in zip(subs + 1, vals):
            fh.write(" ".join(map(str, idx)) + f" {float(v)!r}\n")


def read_tns(path) -> Tensor:
    """Read a ``.tns`` file.

    A file listing exactly ``prod(shape)`` distinct coordinates is returned as a
    :class:`DenseTensor`; anything else is a :class:`SparseTensor`.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise TensorFormatError(f"{path}: line 1: empty file")
    head = lines[0].split()
    try:
        if head[0] != "tns":
            raise ValueError
        ndim = int(head[1])
        shape = tuple(int(x) for x in head[2:2 + ndim])
        nnz = int(head[2 + ndim])
        if len(head) != 3 + ndim or ndim < 1 or nnz < 0:
            raise ValueError
        shape = _check_shape(shape)
    except (ValueError, IndexError):
        raise TensorFormatError(f"{path}: line 1: expected 'tns <N> <I1> ... <IN> <nnz>'") from None

    body = [(k, ln) for k, ln in enumerate(lines[1:], start=2) if ln.strip()]
    if len(body) != nnz:
        raise TensorFormatError(f"{path}: line {len(lines) + 1}: expected {nnz} entries, found {len(body)}")
    subs = np.empty((nnz, ndim), dtype=np.int64)
    vals = np.empty(nnz)
    for row, (lineno, ln) in enumerate(body):
        parts = ln.split()
        try:
            if len(parts) != ndim + 1:
                raise ValueError
            idx = [int(p) for p in parts[:ndim]]
            val = float(parts[ndim])
            if not math.isfinite(val) or any(not 1 <= i <= s for i, s in zip(idx, shape)):
                raise ValueError
        except ValueError:
            raise TensorFormatError(f"{path}: line {lineno}: malformed entry {ln.strip()!r}") from None
        subs[row] = idx
        vals[row] = val
    subs -= 1

    if nnz == math.prod(shape):
        dense = np.zeros(shape, order="F")
        dense[tuple(subs.T)] = vals
        if np.unique(np.ravel_multi_index(tuple(subs.T), shape)).size == nnz:
            return DenseTensor(dense)
    return SparseTensor(shape, subs, vals)

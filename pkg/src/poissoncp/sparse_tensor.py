"""Sparse N-way count tensors in coordinate (COO) form.

Indices are 1-based in all public interfaces and in the text file format,
matching common tensor toolkit conventions.  Internally subscripts are held
0-based for direct use as numpy indices.  Entries are kept sorted
lexicographically by multi-index so that grouping and file output are
deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateIndexError,
    IndexOutOfRangeError,
    NonpositiveCountError,
)

__all__ = [
    "Shape",
    "SparseCountTensor",
    "ModeRowGroup",
    "as_shape",
    "mode_column_index",
    "reduced_column_index",
    "group_by_mode",
    "read_coo",
    "write_coo",
]


@dataclass(frozen=True)
class Shape:
    """Tensor dimensions (I_1, ..., I_N) with N >= 2 and every I_n >= 1."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) < 2:
            raise ValueError(f"need at least 2 modes, got {len(dims)}")
        if any(d < 1 for d in dims):
            raise ValueError(f"all dimensions must be >= 1, got {dims}")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    def reduced_size(self, mode: int) -> int:
        """Product of all dimensions except the given 1-based mode."""
        _check_mode(self, mode)
        return math.prod(d for k, d in enumerate(self.dims, start=1) if k != mode)

    def __len__(self) -> int:
        return len(self.dims)

    def __iter__(self):
        return iter(self.dims)

    def __getitem__(self, k):
        return self.dims[k]


def as_shape(shape) -> Shape:
    """Coerce a Shape or a sequence of dimensions into a Shape."""
    if isinstance(shape, Shape):
        return shape
    return Shape(tuple(shape))


def _check_mode(shape: Shape, mode: int) -> None:
    if not 1 <= mode <= shape.ndim:
        raise IndexOutOfRangeError(
            f"mode {mode} out of range for a {shape.ndim}-way tensor"
        )


@dataclass(frozen=True)
class SparseCountTensor:
    """COO tensor of strictly positive integer counts; zeros are implicit.

    Attributes
    ----------
    shape:
        Tensor dimensions.
    subs0:
        (nnz, N) int64 array of 0-based subscripts, sorted lexicographically.
    vals:
        (nnz,) int64 array of strictly positive counts.
    """

    shape: Shape
    subs0: np.ndarray = field(repr=False)
    vals: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "shape", as_shape(self.shape))

    @classmethod
    def from_entries(cls, shape, entries) -> "SparseCountTensor":
        """Validate and build a tensor from ((i_1, ..., i_N), count) pairs.

        Indices are 1-based.  Raises IndexOutOfRangeError,
        DuplicateIndexError, or NonpositiveCountError on bad input.
        """
        shape = as_shape(shape)
        entries = list(entries)
        if not entries:
            return cls(
                shape,
                np.empty((0, shape.ndim), dtype=np.int64),
                np.empty((0,), dtype=np.int64),
            )
        subs = np.asarray([e[0] for e in entries], dtype=np.int64)
        vals = np.asarray([e[1] for e in entries], dtype=np.int64)
        if subs.ndim != 2 or subs.shape[1] != shape.ndim:
            raise IndexOutOfRangeError(
                f"multi-indices must have {shape.ndim} components"
            )
        return cls.from_arrays(shape, subs, vals)

    @classmethod
    def from_arrays(cls, shape, subs, vals, one_based: bool = True):
        """Validate and build a tensor from subscript and count arrays."""
        shape = as_shape(shape)
        subs = np.asarray(subs, dtype=np.int64).reshape(-1, shape.ndim)
        vals = np.asarray(vals, dtype=np.int64).reshape(-1)
        if subs.shape[0] != vals.shape[0]:
            raise ValueError("subscript and count arrays disagree in length")
        subs0 = subs - 1 if one_based else subs.copy()
        dims = np.asarray(shape.dims, dtype=np.int64)
        if subs0.size and ((subs0 < 0).any() or (subs0 >= dims).any()):
            bad = np.flatnonzero(((subs0 < 0) | (subs0 >= dims)).any(axis=1))[0]
            raise IndexOutOfRangeError(
                f"index {tuple(subs0[bad] + 1)} outside shape {shape.dims}"
            )
        if (vals <= 0).any():
            bad = np.flatnonzero(vals <= 0)[0]
            raise NonpositiveCountError(
                f"count {vals[bad]} at index {tuple(subs0[bad] + 1)} is not positive"
            )
        if subs0.shape[0]:
            order = np.lexsort(tuple(subs0[:, k] for k in range(shape.ndim - 1, -1, -1)))
            subs0 = subs0[order]
            vals = vals[order]
            dup = np.flatnonzero((np.diff(subs0, axis=0) == 0).all(axis=1))
            if dup.size:
                raise DuplicateIndexError(
                    f"duplicate index {tuple(subs0[dup[0]] + 1)}"
                )
        return cls(shape, subs0, vals)

    @property
    def ndim(self) -> int:
        return self.shape.ndim

    @property
    def nnz(self) -> int:
        return int(self.vals.shape[0])

    def entries(self):
        """Iterate ((i_1, ..., i_N), count) pairs with 1-based indices."""
        for sub, val in zip(self.subs0, self.vals):
            yield tuple(int(s) + 1 for s in sub), int(val)

    def total_count(self) -> int:
        """Sum of all counts."""
        return int(self.vals.sum())

    def density(self) -> float:
        """Fraction of cells holding a nonzero count."""
        return self.nnz / self.shape.size


@dataclass(frozen=True)
class ModeRowGroup:
    """All nonzeros of one mode-n row, keyed by the other modes' indices.

    ``reduced_subs`` holds 1-based indices of the modes other than ``mode``,
    in increasing mode order; ``counts`` the matching tensor counts.
    """

    mode: int
    row: int
    reduced_subs: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)

    @property
    def items(self):
        return [
            (tuple(int(i) for i in sub), int(c))
            for sub, c in zip(self.reduced_subs, self.counts)
        ]


def mode_column_index(shape, mode: int, multi_index) -> int:
    """Column of the mode-n unfolding holding the given 1-based multi-index.

    Uses the standard unfolding order in which the lowest remaining mode
    varies fastest:  j = 1 + sum_{k != n} (i_k - 1) * prod_{m < k, m != n} I_m.
    """
    shape = as_shape(shape)
    _check_mode(shape, mode)
    idx = tuple(int(i) for i in multi_index)
    if len(idx) != shape.ndim:
        raise IndexOutOfRangeError(
            f"multi-index must have {shape.ndim} components, got {len(idx)}"
        )
    for k, (i, d) in enumerate(zip(idx, shape.dims), start=1):
        if not 1 <= i <= d:
            raise IndexOutOfRangeError(f"index {i} out of range for mode {k}")
    reduced = tuple(i for k, i in enumerate(idx, start=1) if k != mode)
    return _reduced_to_column(shape, mode, reduced)


def reduced_column_index(shape, mode: int, reduced_index) -> int:
    """Unfolding column for a 1-based index over all modes except ``mode``."""
    shape = as_shape(shape)
    _check_mode(shape, mode)
    reduced = tuple(int(i) for i in reduced_index)
    other_dims = [d for k, d in enumerate(shape.dims, start=1) if k != mode]
    if len(reduced) != len(other_dims):
        raise IndexOutOfRangeError(
            f"reduced index must have {len(other_dims)} components"
        )
    for i, d in zip(reduced, other_dims):
        if not 1 <= i <= d:
            raise IndexOutOfRangeError(f"reduced index component {i} exceeds {d}")
    return _reduced_to_column(shape, mode, reduced)


def _reduced_to_column(shape: Shape, mode: int, reduced) -> int:
    j = 0
    stride = 1
    other_dims = [d for k, d in enumerate(shape.dims, start=1) if k != mode]
    for i, d in zip(reduced, other_dims):
        j += (i - 1) * stride
        stride *= d
    return j + 1


def mode_row_positions(tensor: SparseCountTensor, mode: int):
    """Positions of each nonempty row's entries in the tensor's COO arrays.

    Returns a list of (row0, positions) with 0-based rows in increasing
    order; ``positions`` indexes into ``tensor.subs0`` / ``tensor.vals``.
    """
    _check_mode(tensor.shape, mode)
    if tensor.nnz == 0:
        return []
    col = tensor.subs0[:, mode - 1]
    order = np.argsort(col, kind="stable")
    boundaries = np.flatnonzero(np.diff(col[order])) + 1
    chunks = np.split(order, boundaries)
    return [(int(col[c[0]]), c) for c in chunks]


def group_by_mode(tensor: SparseCountTensor, mode: int) -> list[ModeRowGroup]:
    """Group the tensor's nonzeros by their mode-n row.

    Returns one ModeRowGroup per nonempty row, sorted by row.  Every entry
    of the tensor lands in exactly one group, so the groups conserve the
    total count.
    """
    keep = [k for k in range(tensor.ndim) if k != mode - 1]
    groups = []
    for row0, pos in mode_row_positions(tensor, mode):
        groups.append(
            ModeRowGroup(
                mode=mode,
                row=row0 + 1,
                reduced_subs=tensor.subs0[np.ix_(pos, keep)] + 1,
                counts=tensor.vals[pos].copy(),
            )
        )
    return groups


def read_coo(path) -> SparseCountTensor:
    """Read a tensor from the COO text format.

    The first line is ``N I_1 ... I_N``; each following line is one nonzero
    ``i_1 ... i_N count`` with 1-based indices, whitespace separated.
    """
    with open(path) as fh:
        header = fh.readline().split()
        if not header:
            raise ValueError(f"{path}: empty file")
        n = int(header[0])
        if len(header) != n + 1:
            raise ValueError(f"{path}: header declares {n} modes but lists "
                             f"{len(header) - 1} dimensions")
        dims = tuple(int(d) for d in header[1:])
        body = fh.read().split()
    if not body:
        return SparseCountTensor.from_arrays(
            dims, np.empty((0, n), dtype=np.int64), np.empty((0,), dtype=np.int64)
        )
    if len(body) % (n + 1):
        raise ValueError(f"{path}: entries must have {n} indices plus a count")
    data = np.asarray(body, dtype=np.int64).reshape(-1, n + 1)
    return SparseCountTensor.from_arrays(dims, data[:, :n], data[:, n])


def write_coo(tensor: SparseCountTensor, path) -> None:
    """Write a tensor in the COO text format read by :func:`read_coo`."""
    with open(path, "w") as fh:
        dims = " ".join(str(d) for d in tensor.shape.dims)
        fh.write(f"{tensor.ndim} {dims}\n")
        for sub, val in zip(tensor.subs0 + 1, tensor.vals):
            fh.write(" ".join(str(int(s)) for s in sub) + f" {int(val)}\n")

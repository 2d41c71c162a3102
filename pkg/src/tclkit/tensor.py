"""Dense tensor algebra: mode-n unfolding/folding, n-mode products,
Kronecker products, and multi-mode contraction.

Tensors are plain numpy arrays stored in C order (last mode varies
fastest). Modes are numbered 1..N in every public signature, matching
the usual tensor-algebra convention; flat offsets stay 0-based
internally.

Unfolding convention: the mode-n unfolding of a tensor of shape
(D_1, ..., D_N) is the (D_n, prod_{k != n} D_k) matrix whose columns
enumerate the remaining modes in increasing order with the last one
varying fastest, i.e. column index e = sum_{k != n} d_k * S_k with
S_k = prod_{m > k, m != n} D_m. Every identity in this package
(n-mode product as fold(M X_[n]), the matricized Tucker form with its
Kronecker chain) is stated and tested under this single convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are inconsistent with the requested operation."""


class ModeError(ValueError):
    """A mode index lies outside 1..order."""


def as_tensor(values, shape=None) -> np.ndarray:
    """Coerce `values` to a C-contiguous float64 array of order >= 1.

    Parameters
    ----------
    values : array-like
        Anything numpy can turn into an array of real numbers.
    shape : tuple of int, optional
        Reshape target; the element count must match.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0 and shape is None:
        raise ShapeError("tensors have order >= 1; got a scalar")
    arr = np.ascontiguousarray(arr)
    if shape is not None:
        if arr.size != prod(shape):
            raise ShapeError(
                f"cannot view {arr.size} elements as shape {tuple(shape)}"
            )
        arr = arr.reshape(shape)
    return arr


def _check_mode(x: np.ndarray, mode: int):
    if not 1 <= mode <= x.ndim:
        raise ModeError(f"mode {mode} out of range for order-{x.ndim} tensor")


@dataclass(frozen=True)
class UnfoldedMatrix:
    """A mode-n unfolding together with the metadata needed to fold back.

    `source_shape` is the shape of the tensor the matrix folds into;
    its entry at `mode` must equal the row count (after an n-mode
    product the row count is the new dimension of that mode).
    """

    data: np.ndarray
    mode: int
    source_shape: tuple

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ShapeError("unfolded data must be a matrix")
        if not 1 <= self.mode <= len(self.source_shape):
            raise ModeError(
                f"mode {self.mode} out of range for shape {self.source_shape}"
            )
        rows, cols = self.data.shape
        if rows != self.source_shape[self.mode - 1]:
            raise ShapeError(
                f"row count {rows} does not match source dimension "
                f"{self.source_shape[self.mode - 1]} on mode {self.mode}"
            )
        rest = prod(d for k, d in enumerate(self.source_shape, 1) if k != self.mode)
        if cols != rest:
            raise ShapeError(
                f"column count {cols} does not match remaining modes of "
                f"{self.source_shape} (expected {rest})"
            )

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


def unfold(x, mode: int) -> UnfoldedMatrix:
    """Mode-`mode` unfolding of `x`.

    Rows are indexed by the chosen mode; columns enumerate the remaining
    modes in increasing order with the last varying fastest. The data is
    an explicit copy, never a view.
    """
    x = np.asarray(x)
    _check_mode(x, mode)
    rows = x.shape[mode - 1]
    data = np.ascontiguousarray(np.moveaxis(x, mode - 1, 0).reshape(rows, -1))
    return UnfoldedMatrix(data=data, mode=mode, source_shape=tuple(x.shape))


def fold(m: UnfoldedMatrix) -> np.ndarray:
    """Inverse of :func:`unfold`: fold(unfold(x, n)) == x exactly."""
    rest = [d for k, d in enumerate(m.source_shape, 1) if k != m.mode]
    first = m.data.reshape(m.rows, *rest)
    return np.ascontiguousarray(np.moveaxis(first, 0, m.mode - 1))


def mode_product(x, m, mode: int) -> np.ndarray:
    """n-mode product of `x` with the matrix `m` along `mode`.

    `m` has shape (R, D_mode); the result has the shape of `x` with
    D_mode replaced by R, and equals the folded matrix product
    m @ unfold(x, mode).
    """
    x = np.asarray(x)
    m = np.asarray(m)
    _check_mode(x, mode)
    if m.ndim != 2:
        raise ShapeError(f"mode-{mode} factor must be a matrix, got order {m.ndim}")
    if m.shape[1] != x.shape[mode - 1]:
        raise ShapeError(
            f"mode {mode}: factor shape {m.shape} does not match "
            f"dimension {x.shape[mode - 1]}"
        )
    target = list(x.shape)
    target[mode - 1] = m.shape[0]
    u = unfold(x, mode)
    return fold(UnfoldedMatrix(m @ u.data, mode, tuple(target)))


def kronecker(a, b) -> np.ndarray:
    """Kronecker product of two matrices: shape (ra*rb, ca*cb)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("kronecker operands must be matrices")
    out = np.einsum("ij,kl->ikjl", a, b)
    return out.reshape(a.shape[0] * b.shape[0], a.shape[1] * b.shape[1])


def multi_mode_product(x, factors: Sequence[Optional[np.ndarray]]) -> np.ndarray:
    """Contract every mode of `x` that has a factor.

    `factors` holds one entry per mode: a (R_k, D_k) matrix to contract
    that mode, or None to pass it through unchanged. Factors are applied
    in ascending mode order; because distinct modes commute, the result
    does not depend on that order.
    """
    x = np.asarray(x)
    if len(factors) != x.ndim:
        raise ShapeError(
            f"need one factor entry per mode: got {len(factors)} "
            f"for an order-{x.ndim} tensor"
        )
    out = x
    for mode, f in enumerate(factors, start=1):
        if f is None:
            continue
        f = np.asarray(f)
        if f.ndim != 2 or f.shape[1] != out.shape[mode - 1]:
            raise ShapeError(
                f"mode {mode}: factor shape {getattr(f, 'shape', None)} does not "
                f"match dimension {out.shape[mode - 1]}"
            )
        out = mode_product(out, f, mode)
    return out

"""Value-level semantics of blocked matrix fused multiply-add operations.

Each instruction computes ``D = C + A * B`` independently per block, with
A shaped blocks x M x K, B blocks x K x N, and C/D blocks x M x N.  Input
elements are widened to the output precision first (fp16/bf16/fp32 to
fp32 or fp64, i8 to i32) and every output element is accumulated over k
in ascending order, with C added after the k loop.  That evaluation order
is part of the contract: it makes float results reproducible bit for bit.
Real hardware accumulation order is unknown and not claimed.

Half-precision operands are stored as the float32 values they widen to,
narrowed on construction with round-to-nearest-even, so no native 16-bit
arithmetic is required.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch, TypeMismatch, UnsupportedPairError
from .isa import MfmaSpec, NumericType

_STORAGE_DTYPE = {
    NumericType.FP64: np.float64,
    NumericType.FP32: np.float32,
    NumericType.FP16: np.float32,  # fp16 values widened at construction
    NumericType.BF16: np.float32,  # bf16 values widened at construction
    NumericType.I32: np.int32,
    NumericType.I8: np.int8,
}

# Exact widenings the instruction set performs.  Identity pairs are included
# so accumulator operands pass through the same interface.
_WIDEN_PAIRS = {
    (NumericType.FP16, NumericType.FP32),
    (NumericType.BF16, NumericType.FP32),
    (NumericType.FP32, NumericType.FP32),
    (NumericType.FP32, NumericType.FP64),
    (NumericType.FP64, NumericType.FP64),
    (NumericType.I8, NumericType.I32),
    (NumericType.I32, NumericType.I32),
}

_I32_MIN = -(2 ** 31)
_I32_MAX = 2 ** 31 - 1


def _narrow_bf16(values: np.ndarray) -> np.ndarray:
    """Round float32 values to bf16 (round-to-nearest-even), widened back."""
    arr = np.asarray(values, dtype=np.float32)
    bits = arr.view(np.uint32)
    rounded = bits + np.uint32(0x7FFF) + ((bits >> np.uint32(16)) & np.uint32(1))
    out = (rounded & np.uint32(0xFFFF0000)).view(np.float32)
    return np.where(np.isnan(arr), arr, out)


def _narrow_fp16(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=np.float32).astype(np.float16).astype(np.float32)


def narrow(values, dtype: NumericType) -> np.ndarray:
    """Round arbitrary values into dtype's representable set (stored widened)."""
    if dtype is NumericType.FP16:
        return _narrow_fp16(values)
    if dtype is NumericType.BF16:
        return _narrow_bf16(values)
    return np.asarray(values, dtype=_STORAGE_DTYPE[dtype])


@dataclass
class BlockedMatrixOperand:
    """Dense row-major matrix data for each block of one operand."""

    blocks: int
    rows: int
    cols: int
    dtype: NumericType
    data: np.ndarray  # shape (blocks, rows, cols), storage dtype per dtype

    def __post_init__(self):
        expected = _STORAGE_DTYPE[self.dtype]
        self.data = np.asarray(self.data)
        if self.data.shape != (self.blocks, self.rows, self.cols):
            raise ShapeMismatch(
                f"data shape {self.data.shape} != "
                f"({self.blocks}, {self.rows}, {self.cols})"
            )
        if self.data.dtype != np.dtype(expected):
            raise TypeMismatch(
                f"{self.dtype.value} operand must be stored as {np.dtype(expected)}, "
                f"got {self.data.dtype}"
            )
        if self.dtype in (NumericType.FP16, NumericType.BF16):
            renarrowed = narrow(self.data, self.dtype)
            finite = ~np.isnan(self.data)
            if not np.array_equal(renarrowed[finite], self.data[finite]):
                raise TypeMismatch(f"values are not exactly {self.dtype.value}-representable")

    @classmethod
    def from_values(cls, dtype: NumericType, blocks: int, rows: int, cols: int,
                    values) -> "BlockedMatrixOperand":
        """Build an operand, narrowing values into dtype's representable set."""
        arr = np.asarray(values, dtype=np.float64).reshape(blocks, rows, cols)
        if dtype in (NumericType.I8, NumericType.I32):
            if not np.array_equal(arr, np.trunc(arr)):
                raise TypeMismatch(f"{dtype.value} operand requires integer values")
            lo, hi = (-128, 127) if dtype is NumericType.I8 else (_I32_MIN, _I32_MAX)
            if arr.min(initial=0) < lo or arr.max(initial=0) > hi:
                raise TypeMismatch(f"value out of {dtype.value} range")
            return cls(blocks, rows, cols, dtype, arr.astype(_STORAGE_DTYPE[dtype]))
        return cls(blocks, rows, cols, dtype, narrow(arr, dtype))

    @classmethod
    def zeros(cls, dtype: NumericType, blocks: int, rows: int, cols: int) -> "BlockedMatrixOperand":
        return cls(blocks, rows, cols, dtype,
                   np.zeros((blocks, rows, cols), dtype=_STORAGE_DTYPE[dtype]))


def widen(value, in_type: NumericType, target: NumericType):
    """Exactly widen one scalar from in_type to target.

    Every fp16/bf16/i8 value is exactly representable in fp32/i32, and
    fp32 in fp64, so widening never rounds.  Unsupported pairings raise
    UnsupportedPairError.
    """
    if (in_type, target) not in _WIDEN_PAIRS:
        raise UnsupportedPairError(f"cannot widen {in_type.value} to {target.value}")
    if target is NumericType.I32:
        return np.int32(value)
    if target is NumericType.FP64:
        return np.float64(value)
    return np.float32(value)


def mfma_execute(spec: MfmaSpec, a: BlockedMatrixOperand, b: BlockedMatrixOperand,
                 c: BlockedMatrixOperand) -> BlockedMatrixOperand:
    """Compute D = C + A * B per block in the instruction's output precision.

    Raises ShapeMismatch / TypeMismatch when the operands disagree with the
    spec.  Integer results are range-checked: a result outside i32 raises
    OverflowError instead of wrapping silently.
    """
    if a.dtype is not spec.in_type or b.dtype is not spec.in_type:
        raise TypeMismatch(f"A/B must be {spec.in_type.value}, got {a.dtype.value}/{b.dtype.value}")
    if c.dtype is not spec.out_type:
        raise TypeMismatch(f"C must be {spec.out_type.value}, got {c.dtype.value}")
    shape_a = (spec.blocks, spec.m, spec.k)
    shape_b = (spec.blocks, spec.k, spec.n)
    shape_c = (spec.blocks, spec.m, spec.n)
    got_a = (a.blocks, a.rows, a.cols)
    got_b = (b.blocks, b.rows, b.cols)
    got_c = (c.blocks, c.rows, c.cols)
    if got_a != shape_a or got_b != shape_b or got_c != shape_c:
        raise ShapeMismatch(
            f"{spec.mnemonic}: A{got_a} B{got_b} C{got_c} vs "
            f"expected A{shape_a} B{shape_b} C{shape_c}"
        )

    if spec.out_type is NumericType.I32:
        wa = a.data.astype(np.int64)
        wb = b.data.astype(np.int64)
        acc = np.zeros(shape_c, dtype=np.int64)
        for k in range(spec.k):
            acc += wa[:, :, k, None] * wb[:, k, None, :]
        d = acc + c.data.astype(np.int64)
        if d.min(initial=0) < _I32_MIN or d.max(initial=0) > _I32_MAX:
            raise OverflowError(f"{spec.mnemonic}: accumulator exceeded i32 range")
        return BlockedMatrixOperand(spec.blocks, spec.m, spec.n, spec.out_type,
                                    d.astype(np.int32))

    acc_dtype = _STORAGE_DTYPE[spec.out_type]
    wa = a.data.astype(acc_dtype)
    wb = b.data.astype(acc_dtype)
    # k ascending, one rounded multiply and add per term, C added last: this
    # matches a scalar k-innermost triple loop element for element.
    acc = np.zeros(shape_c, dtype=acc_dtype)
    for k in range(spec.k):
        acc += wa[:, :, k, None] * wb[:, k, None, :]
    d = acc + c.data
    return BlockedMatrixOperand(spec.blocks, spec.m, spec.n, spec.out_type, d)

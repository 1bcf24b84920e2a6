"""32-bit two's-complement fixed-point scalars and matrices.

Every precision-losing step rounds to nearest, ties to even. Results that do
not fit in 32 bits saturate to the nearest bound and are counted in a
caller-owned :class:`OverflowFlags`; nothing ever wraps.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

WORD_BITS = 32
RAW_MAX = (1 << (WORD_BITS - 1)) - 1
RAW_MIN = -(1 << (WORD_BITS - 1))
ACC_MAX = (1 << 63) - 1
ACC_MIN = -(1 << 63)

_QFMT_RE = re.compile(r"^\s*[Qq](\d+)\.(\d+)\s*$")


@dataclass(frozen=True)
class QFormat:
    """Signed Q-format: one sign bit, ``int_bits`` integer bits, ``frac_bits`` fraction bits."""

    int_bits: int = 15
    frac_bits: int = 16

    def __post_init__(self):
        if self.int_bits < 1 or self.frac_bits < 1:
            raise ValueError(f"Q{self.int_bits}.{self.frac_bits}: need at least one integer and one fraction bit")
        if self.int_bits + self.frac_bits != WORD_BITS - 1:
            raise ValueError(
                f"Q{self.int_bits}.{self.frac_bits}: int_bits + frac_bits must be {WORD_BITS - 1}"
            )

    @classmethod
    def parse(cls, text: str) -> "QFormat":
        m = _QFMT_RE.match(text)
        if not m:
            raise ValueError(f"bad Q-format {text!r}, expected e.g. 'Q15.16'")
        return cls(int(m.group(1)), int(m.group(2)))

    @property
    def lsb(self) -> float:
        return math.ldexp(1.0, -self.frac_bits)

    @property
    def max_real(self) -> float:
        return math.ldexp(RAW_MAX, -self.frac_bits)

    @property
    def min_real(self) -> float:
        return math.ldexp(RAW_MIN, -self.frac_bits)

    def __str__(self) -> str:
        return f"Q{self.int_bits}.{self.frac_bits}"


Q15_16 = QFormat(15, 16)


@dataclass
class OverflowFlags:
    """Sticky saturation counter owned by the caller."""

    count: int = 0

    @property
    def saturated(self) -> bool:
        return self.count > 0

    def record(self, n: int = 1) -> None:
        self.count += n

    def merge(self, other: "OverflowFlags") -> None:
        self.count += other.count


def saturate(raw: int, flags: OverflowFlags | None = None) -> int:
    if raw > RAW_MAX:
        if flags is not None:
            flags.record()
        return RAW_MAX
    if raw < RAW_MIN:
        if flags is not None:
            flags.record()
        return RAW_MIN
    return raw


def saturate_acc(acc: int, flags: OverflowFlags | None = None) -> int:
    """Clamp a MAC accumulator to 64 bits."""
    if acc > ACC_MAX:
        if flags is not None:
            flags.record()
        return ACC_MAX
    if acc < ACC_MIN:
        if flags is not None:
            flags.record()
        return ACC_MIN
    return acc


def rne_shift(value: int, shift: int) -> int:
    """Arithmetic right shift by ``shift`` bits, rounding to nearest even."""
    if shift <= 0:
        return value << -shift
    q = value >> shift
    rem = value - (q << shift)
    half = 1 << (shift - 1)
    if rem > half or (rem == half and q & 1):
        q += 1
    return q


def real_to_raw(x: float, fmt: QFormat, flags: OverflowFlags | None = None) -> int:
    if math.isnan(x):
        raise ValueError("cannot convert NaN to fixed point")
    if math.isinf(x):
        return saturate(RAW_MAX + 1 if x > 0 else RAW_MIN - 1, flags)
    # ldexp is exact; round() on a float rounds half to even
    return saturate(int(round(math.ldexp(x, fmt.frac_bits))), flags)


def raw_to_real(raw: int, fmt: QFormat) -> float:
    return math.ldexp(float(raw), -fmt.frac_bits)


def raw_hex(raw: int) -> str:
    """Two's-complement 32-bit hex image of a raw word."""
    return f"{raw & 0xFFFFFFFF:08x}"


def raw_from_word(word: int) -> int:
    """Reinterpret an unsigned 32-bit bus word as a signed raw value."""
    word &= 0xFFFFFFFF
    return word - (1 << 32) if word & 0x80000000 else word


@dataclass(frozen=True)
class Fixed32:
    raw: int
    fmt: QFormat = Q15_16

    def __post_init__(self):
        if not RAW_MIN <= self.raw <= RAW_MAX:
            raise ValueError(f"raw value {self.raw} does not fit in {WORD_BITS} bits")

    def __float__(self) -> float:
        return raw_to_real(self.raw, self.fmt)

    @property
    def hex(self) -> str:
        return raw_hex(self.raw)

    def __str__(self) -> str:
        return f"{float(self)!r} ({self.fmt}, raw={self.raw}, 0x{self.hex})"


def to_fixed(x: float, fmt: QFormat = Q15_16, flags: OverflowFlags | None = None) -> Fixed32:
    return Fixed32(real_to_raw(float(x), fmt, flags), fmt)


def to_real(x: Fixed32) -> float:
    return raw_to_real(x.raw, x.fmt)


def _check_fmt(a: Fixed32, b: Fixed32) -> None:
    if a.fmt != b.fmt:
        raise ValueError(f"Q-format mismatch: {a.fmt} vs {b.fmt}")


def fx_add(a: Fixed32, b: Fixed32, flags: OverflowFlags | None = None) -> Fixed32:
    _check_fmt(a, b)
    return Fixed32(saturate(a.raw + b.raw, flags), a.fmt)


def fx_sub(a: Fixed32, b: Fixed32, flags: OverflowFlags | None = None) -> Fixed32:
    _check_fmt(a, b)
    return Fixed32(saturate(a.raw - b.raw, flags), a.fmt)


def fx_mul(a: Fixed32, b: Fixed32, flags: OverflowFlags | None = None) -> Fixed32:
    _check_fmt(a, b)
    return Fixed32(saturate(rne_shift(a.raw * b.raw, a.fmt.frac_bits), flags), a.fmt)


def mac_writeback(acc: int, fmt: QFormat, flags: OverflowFlags | None = None) -> int:
    """Single rounding of a full-precision accumulator back to a 32-bit word."""
    return saturate(rne_shift(acc, fmt.frac_bits), flags)


def mac_dot(a: Sequence[int], b: Sequence[int], fmt: QFormat, flags: OverflowFlags | None = None) -> int:
    """Dot product of raw words through one 64-bit MAC, accumulated in index order."""
    acc = 0
    for x, y in zip(a, b):
        acc = saturate_acc(acc + x * y, flags)
    return mac_writeback(acc, fmt, flags)


@dataclass(frozen=True)
class FixedMatrix:
    """Dense row-major matrix of raw words sharing one Q-format."""

    rows: int
    cols: int
    raw: tuple[int, ...]
    fmt: QFormat = Q15_16

    def __post_init__(self):
        if self.rows < 0 or self.cols < 0:
            raise ValueError("negative matrix dimension")
        if len(self.raw) != self.rows * self.cols:
            raise ValueError(f"{self.rows}x{self.cols} matrix needs {self.rows * self.cols} words, got {len(self.raw)}")
        for r in self.raw:
            if not RAW_MIN <= r <= RAW_MAX:
                raise ValueError(f"raw value {r} does not fit in {WORD_BITS} bits")

    @classmethod
    def from_real(cls, values, fmt: QFormat = Q15_16, flags: OverflowFlags | None = None) -> "FixedMatrix":
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ValueError("expected a 1-D or 2-D array")
        raw = tuple(real_to_raw(float(v), fmt, flags) for v in arr.ravel())
        return cls(arr.shape[0], arr.shape[1], raw, fmt)

    @classmethod
    def from_raw(cls, raw_rows: Iterable[Iterable[int]], fmt: QFormat = Q15_16) -> "FixedMatrix":
        rows = [list(r) for r in raw_rows]
        ncols = len(rows[0]) if rows else 0
        if any(len(r) != ncols for r in rows):
            raise ValueError("ragged rows")
        return cls(len(rows), ncols, tuple(int(v) for r in rows for v in r), fmt)

    @classmethod
    def zeros(cls, rows: int, cols: int, fmt: QFormat = Q15_16) -> "FixedMatrix":
        return cls(rows, cols, (0,) * (rows * cols), fmt)

    @classmethod
    def identity(cls, n: int, fmt: QFormat = Q15_16) -> "FixedMatrix":
        one = 1 << fmt.frac_bits
        return cls(n, n, tuple(one if i == j else 0 for i in range(n) for j in range(n)), fmt)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    def raw_at(self, i: int, j: int) -> int:
        return self.raw[i * self.cols + j]

    def __getitem__(self, idx: tuple[int, int]) -> Fixed32:
        i, j = idx
        return Fixed32(self.raw_at(i, j), self.fmt)

    def row(self, i: int) -> tuple[int, ...]:
        return self.raw[i * self.cols:(i + 1) * self.cols]

    def col(self, j: int) -> tuple[int, ...]:
        return self.raw[j::self.cols]

    def to_numpy(self) -> np.ndarray:
        scale = math.ldexp(1.0, -self.fmt.frac_bits)
        return np.array(self.raw, dtype=np.float64).reshape(self.rows, self.cols) * scale

    def hex_rows(self) -> list[str]:
        return [" ".join(raw_hex(v) for v in self.row(i)) for i in range(self.rows)]

"""Behavioral models of the programmable-logic least-squares core.

The core runs four blocks: transpose, systolic matrix multiply, single-precision
LDU inversion and a MAC matrix-vector multiply. Everything outside the inverse
is 32-bit fixed point; conversions to and from binary32 happen at the inverse
module's ports only.

Cycle counts come from a documented analytic model, not from RTL timing. See
:func:`pipeline_cycles` for the constants.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimator import EstimationProblem, RateEstimate, SensorConstants
from .fixed_point import (
    Q15_16,
    FixedMatrix,
    OverflowFlags,
    QFormat,
    mac_dot,
    mac_writeback,
    raw_hex,
    real_to_raw,
    saturate_acc,
)

DEFAULT_CLOCK_HZ = 100e6

# Cycle-model constants.
MAC_PIPELINE_DEPTH = 4   # DSP multiply stages + accumulator writeback
CONVERT_LATENCY = 6      # fixed<->float converter pipeline
FP_MUL_LATENCY = 4
FP_ADD_LATENCY = 5
FP_DIV_LATENCY = 16

F32_EPS = float(np.finfo(np.float32).eps)
PIVOT_ATOL = 1e-12
PIVOT_RTOL = 64 * F32_EPS


class SingularMatrix(ArithmeticError):
    """An LDU pivot fell below tolerance; no pivoting is attempted."""

    code = 1

    def __init__(self, index: int, pivot: float):
        self.index = index
        self.pivot = pivot
        super().__init__(f"LDU pivot {index} is {pivot:.3g}, below tolerance")


@dataclass(frozen=True)
class CycleReport:
    per_block: dict[str, int]
    clock_hz: float = DEFAULT_CLOCK_HZ

    @property
    def total(self) -> int:
        return sum(self.per_block.values())

    @property
    def microseconds(self) -> float:
        return self.total / self.clock_hz * 1e6

    def describe(self) -> str:
        return (f"model output: {self.total} cycles at an assumed {self.clock_hz / 1e6:g} MHz PL clock"
                f" = {self.microseconds:.3f} us")


# -- cycle model ---------------------------------------------------------------

def transpose_cycles(rows: int, cols: int) -> int:
    return rows * cols


def systolic_cycles(m: int, n: int, k: int) -> int:
    """Wavefront latency of an m x n output-stationary array plus MAC pipeline fill."""
    return m + n + k - 2 + MAC_PIPELINE_DEPTH


def matvec_cycles(rows: int, cols: int) -> int:
    return systolic_cycles(rows, 1, cols)


def convert_cycles(n_words: int) -> int:
    return n_words + CONVERT_LATENCY


def ldu_cycles(n: int) -> dict[str, int]:
    """Per-stage cycles for the sequential LDU inverse.

    Decomposition: each pivot waits on a dependent accumulation chain, one
    multiply and one divide, then streams its L column and U row.
    L inverse: one dependent chain per row.
    Back substitution through U: one chain per row, all n right-hand sides in
    parallel lanes, plus one output word per cycle.
    """
    decompose = sum(max(k, 1) * FP_ADD_LATENCY + FP_MUL_LATENCY + FP_DIV_LATENCY + 2 * (n - k - 1)
                    for k in range(n))
    lower = sum(i * FP_ADD_LATENCY + FP_MUL_LATENCY for i in range(1, n))
    reciprocal = FP_DIV_LATENCY + n - 1
    back = sum(i * FP_ADD_LATENCY + FP_MUL_LATENCY for i in range(1, n)) + n * n
    return {"ldu_decompose": decompose, "ldu_lower_inverse": lower,
            "ldu_reciprocal": reciprocal, "ldu_back_substitution": back}


def pipeline_cycles(n: int = 6, clock_hz: float = DEFAULT_CLOCK_HZ) -> CycleReport:
    """Cycle report for one pass of the least-squares core on an n x n problem."""
    blocks = {"transpose": transpose_cycles(n, n),
              "matmul_HtW": systolic_cycles(n, n, n),
              "matmul_HtWH": systolic_cycles(n, n, n),
              "fixed_to_float": convert_cycles(n * n)}
    blocks.update(ldu_cycles(n))
    blocks.update({"float_to_fixed": convert_cycles(n * n),
                   "matmul_inv_HtW": systolic_cycles(n, n, n),
                   "matvec": matvec_cycles(n, n)})
    return CycleReport(blocks, clock_hz)


# -- fixed-point blocks --------------------------------------------------------

def fx_transpose(M: FixedMatrix) -> FixedMatrix:
    # The buffer is read column-major, one word per cycle.
    out = tuple(M.raw[i * M.cols + j] for j in range(M.cols) for i in range(M.rows))
    return FixedMatrix(M.cols, M.rows, out, M.fmt)


def _check_conformable(A: FixedMatrix, B: FixedMatrix) -> None:
    if A.cols != B.rows:
        raise ValueError(f"cannot multiply {A.rows}x{A.cols} by {B.rows}x{B.cols}")
    if A.fmt != B.fmt:
        raise ValueError(f"Q-format mismatch: {A.fmt} vs {B.fmt}")


def fx_matmul_naive(A: FixedMatrix, B: FixedMatrix, flags: OverflowFlags | None = None) -> FixedMatrix:
    """Triple-loop reference with the same MAC discipline as the systolic array."""
    _check_conformable(A, B)
    cols_b = [B.col(j) for j in range(B.cols)]
    out = tuple(mac_dot(A.row(i), cols_b[j], A.fmt, flags) for i in range(A.rows) for j in range(B.cols))
    return FixedMatrix(A.rows, B.cols, out, A.fmt)


def fx_matmul_systolic(A: FixedMatrix, B: FixedMatrix,
                       flags: OverflowFlags | None = None) -> tuple[FixedMatrix, CycleReport]:
    """Output-stationary systolic multiply, simulated register by register.

    Row i of A enters PE(i, 0) delayed by i cycles and moves east; column j of
    B enters PE(0, j) delayed by j cycles and moves south. Each PE keeps a
    64-bit accumulator that is rounded once when the result drains.
    """
    _check_conformable(A, B)
    m, kdim, n = A.rows, A.cols, B.cols
    acc = [[0] * n for _ in range(m)]
    a_reg = [[None] * n for _ in range(m)]
    b_reg = [[None] * n for _ in range(m)]
    cycles = 0
    remaining = m * n * kdim
    t = 0
    while remaining:
        # Shift east/south from the far edge inward so each value moves one hop.
        for i in range(m):
            row = a_reg[i]
            for j in range(n - 1, 0, -1):
                row[j] = row[j - 1]
            k = t - i
            row[0] = A.raw[i * kdim + k] if 0 <= k < kdim else None
        for j in range(n):
            for i in range(m - 1, 0, -1):
                b_reg[i][j] = b_reg[i - 1][j]
            k = t - j
            b_reg[0][j] = B.raw[k * n + j] if 0 <= k < kdim else None
        for i in range(m):
            for j in range(n):
                a, b = a_reg[i][j], b_reg[i][j]
                if a is not None and b is not None:
                    acc[i][j] = saturate_acc(acc[i][j] + a * b, flags)
                    remaining -= 1
        t += 1
        cycles += 1
    out = tuple(mac_writeback(acc[i][j], A.fmt, flags) for i in range(m) for j in range(n))
    report = CycleReport({"systolic_matmul": cycles + MAC_PIPELINE_DEPTH})
    return FixedMatrix(m, n, out, A.fmt), report


def fx_matvec(M: FixedMatrix, y: FixedMatrix, flags: OverflowFlags | None = None) -> FixedMatrix:
    """Matrix times column vector on one MAC per output row."""
    if y.cols != 1:
        raise ValueError(f"expected a column vector, got {y.rows}x{y.cols}")
    _check_conformable(M, y)
    out = tuple(mac_dot(M.row(i), y.raw, M.fmt, flags) for i in range(M.rows))
    return FixedMatrix(M.rows, 1, out, M.fmt)


# -- single-precision inverse ---------------------------------------------------

@dataclass(frozen=True)
class LduFactors:
    L: np.ndarray
    d: np.ndarray
    U: np.ndarray

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.d)


def _as_f32_square(A) -> np.ndarray:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    A32 = A.astype(np.float32)
    if not np.all(np.isfinite(A32)):
        raise ValueError("matrix has non-finite entries in single precision")
    return A32


def ldu_decompose(A, pivot_rtol: float = PIVOT_RTOL, pivot_atol: float = PIVOT_ATOL) -> LduFactors:
    """Doolittle-order ``A = L D U`` in binary32 without row exchanges.

    A pivot fails when ``|d_k| <= max(pivot_atol, pivot_rtol * max|A|)``.
    """
    A = _as_f32_square(A)
    n = A.shape[0]
    L = np.eye(n, dtype=np.float32)
    U = np.eye(n, dtype=np.float32)
    d = np.zeros(n, dtype=np.float32)
    tol = max(pivot_atol, pivot_rtol * float(np.max(np.abs(A)))) if n else pivot_atol
    for k in range(n):
        piv = A[k, k]
        for j in range(k):
            piv = piv - (L[k, j] * d[j]) * U[j, k]
        if not abs(float(piv)) > tol:
            raise SingularMatrix(k, float(piv))
        d[k] = piv
        u_row = A[k, k + 1:].copy()
        l_col = A[k + 1:, k].copy()
        for j in range(k):
            u_row = u_row - (L[k, j] * d[j]) * U[j, k + 1:]
            l_col = l_col - L[k + 1:, j] * (d[j] * U[j, k])
        U[k, k + 1:] = u_row / piv
        L[k + 1:, k] = l_col / piv
    return LduFactors(L, d, U)


def unit_lower_inverse(L: np.ndarray) -> np.ndarray:
    n = L.shape[0]
    X = np.eye(n, dtype=np.float32)
    for i in range(1, n):
        row = np.zeros(n, dtype=np.float32)
        for k in range(i):
            row = row - L[i, k] * X[k]
        row[i] = 1.0
        X[i] = row
    return X


def unit_upper_inverse(U: np.ndarray) -> np.ndarray:
    n = U.shape[0]
    Y = np.eye(n, dtype=np.float32)
    for i in range(n - 2, -1, -1):
        row = np.zeros(n, dtype=np.float32)
        row[i] = 1.0
        for k in range(i + 1, n):
            row = row - U[i, k] * Y[k]
        Y[i] = row
    return Y


def unit_upper_solve(U: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``U^-1 B`` by back substitution, every column of B in lock step."""
    n = U.shape[0]
    X = np.zeros_like(B, dtype=np.float32)
    for i in range(n - 1, -1, -1):
        row = B[i].astype(np.float32)
        for k in range(i + 1, n):
            row = row - U[i, k] * X[k]
        X[i] = row
    return X


def ldu_invert(A, pivot_rtol: float = PIVOT_RTOL, pivot_atol: float = PIVOT_ATOL) -> np.ndarray:
    """``U^-1 D^-1 L^-1`` in binary32.

    L^-1 is formed explicitly and scaled by the pivot reciprocals; U^-1 is
    applied by back substitution rather than formed and multiplied, which
    roughly halves the worst residual near the conditioning limit.
    """
    f = ldu_decompose(A, pivot_rtol, pivot_atol)
    d_inv = np.float32(1.0) / f.d
    return unit_upper_solve(f.U, d_inv[:, None] * unit_lower_inverse(f.L))


def fixed_to_f32(M: FixedMatrix) -> np.ndarray:
    # exact in float64, then one round-to-nearest-even into binary32
    return M.to_numpy().astype(np.float32)


def f32_to_fixed(A: np.ndarray, fmt: QFormat, flags: OverflowFlags | None = None) -> FixedMatrix:
    A = np.asarray(A, dtype=np.float32)
    raw = tuple(real_to_raw(float(v), fmt, flags) for v in A.ravel())
    return FixedMatrix(A.shape[0], A.shape[1], raw, fmt)


# -- scaling and the composed pipeline -------------------------------------------

@dataclass(frozen=True)
class ScalingScheme:
    """PS-side pre-scaling so the fixed-point core sees order-one data.

    H columns are multiplied by ``1/||h_j||`` (when ``normalize_columns``), the
    measurement vector by ``y_scale`` and W by ``1/max|W|`` (when
    ``normalize_weight``; a scalar on W cancels in the solution). The estimate
    is de-scaled analytically: ``x = lambda/(4 pi) * c_j * x'_j / y_scale``.
    """

    y_scale: float = 2.0 ** 10
    normalize_columns: bool = True
    normalize_weight: bool = True

    def __post_init__(self):
        if not self.y_scale > 0:
            raise ValueError("y_scale must be positive")

    def column_factors(self, H: np.ndarray) -> np.ndarray:
        if not self.normalize_columns:
            return np.ones(H.shape[1])
        norms = np.linalg.norm(H, axis=0)
        return np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 1.0)


@dataclass(frozen=True)
class FixedProblem:
    """Fixed-point words the PS streams to the core, plus what it needs to de-scale."""

    H: FixedMatrix
    W: FixedMatrix
    y: FixedMatrix
    column_factors: tuple[float, ...]
    y_scale: float
    metres_per_radian: float
    encode_overflows: int = 0

    @property
    def fmt(self) -> QFormat:
        return self.H.fmt


def encode_problem(problem: EstimationProblem, constants: SensorConstants = SensorConstants(),
                   scaling: ScalingScheme = ScalingScheme(), fmt: QFormat = Q15_16) -> FixedProblem:
    if problem.H.shape != (6, 6):
        raise ValueError("the hardware core solves 6x6 systems only")
    flags = OverflowFlags()
    c = scaling.column_factors(problem.H)
    W = problem.W
    if scaling.normalize_weight:
        W = W / float(np.max(np.abs(W)))
    return FixedProblem(
        H=FixedMatrix.from_real(problem.H * c[None, :], fmt, flags),
        W=FixedMatrix.from_real(W, fmt, flags),
        y=FixedMatrix.from_real(problem.y_tilde * scaling.y_scale, fmt, flags),
        column_factors=tuple(float(v) for v in c),
        y_scale=float(scaling.y_scale),
        metres_per_radian=constants.metres_per_radian,
        encode_overflows=flags.count,
    )


@dataclass(frozen=True)
class CoreOutput:
    x: FixedMatrix
    cycles: CycleReport
    overflow_count: int
    stages: dict = field(compare=False, repr=False)


def pl_core(H: FixedMatrix, W: FixedMatrix, y: FixedMatrix,
            clock_hz: float = DEFAULT_CLOCK_HZ) -> CoreOutput:
    """The block sequence of the core; returns the raw scaled solution ``x'``."""
    n = H.cols
    if H.shape != (n, n) or W.shape != (n, n) or y.shape != (n, 1):
        raise ValueError("core expects square H and W and a matching column vector y")
    flags = OverflowFlags()
    blocks: dict[str, int] = {}
    stages: dict[str, object] = {"H": H, "W": W, "y": y}

    Ht = fx_transpose(H)
    blocks["transpose"] = transpose_cycles(H.rows, H.cols)
    HtW, rep = fx_matmul_systolic(Ht, W, flags)
    blocks["matmul_HtW"] = rep.total
    N, rep = fx_matmul_systolic(HtW, H, flags)
    blocks["matmul_HtWH"] = rep.total
    stages.update(Ht=Ht, HtW=HtW, HtWH=N)

    N32 = fixed_to_f32(N)
    blocks["fixed_to_float"] = convert_cycles(n * n)
    Ninv32 = ldu_invert(N32)
    blocks.update(ldu_cycles(n))
    Ninv = f32_to_fixed(Ninv32, H.fmt, flags)
    blocks["float_to_fixed"] = convert_cycles(n * n)
    stages.update(HtWH_f32=N32, inverse_f32=Ninv32, inverse=Ninv)

    G, rep = fx_matmul_systolic(Ninv, HtW, flags)
    blocks["matmul_inv_HtW"] = rep.total
    x = fx_matvec(G, y, flags)
    blocks["matvec"] = matvec_cycles(G.rows, G.cols)
    stages.update(gain=G, x=x)
    return CoreOutput(x, CycleReport(blocks, clock_hz), flags.count, stages)


def decode_estimate(x_raw, problem: FixedProblem) -> RateEstimate:
    """PS-side conversion of the core's raw words into m/s and rad/s."""
    lsb = math.ldexp(1.0, -problem.fmt.frac_bits)
    x = np.array([int(v) for v in x_raw], dtype=np.float64) * lsb
    c = np.array(problem.column_factors)
    return RateEstimate.from_vector(problem.metres_per_radian * (c * x) / problem.y_scale)


@dataclass(frozen=True)
class HwResult:
    estimate: RateEstimate
    raw: tuple[int, ...]
    cycles: CycleReport
    overflow_count: int

    @property
    def saturated(self) -> bool:
        return self.overflow_count > 0

    def same_bits(self, other: "HwResult") -> bool:
        return (self.raw == other.raw
                and self.estimate.as_vector().tobytes() == other.estimate.as_vector().tobytes()
                and self.cycles.total == other.cycles.total
                and self.overflow_count == other.overflow_count)


def hw_wls_pipeline(problem: FixedProblem, clock_hz: float = DEFAULT_CLOCK_HZ) -> HwResult:
    out = pl_core(problem.H, problem.W, problem.y, clock_hz)
    return HwResult(decode_estimate(out.x.raw, problem), out.x.raw, out.cycles,
                    problem.encode_overflows + out.overflow_count)


def hw_estimate(problem: EstimationProblem, constants: SensorConstants = SensorConstants(),
                scaling: ScalingScheme = ScalingScheme(), fmt: QFormat = Q15_16,
                clock_hz: float = DEFAULT_CLOCK_HZ) -> HwResult:
    return hw_wls_pipeline(encode_problem(problem, constants, scaling, fmt), clock_hz)


def _f32_hex(v) -> str:
    return struct.pack(">f", float(v)).hex()


def dump_stages(stages: dict, path) -> None:
    """Write every stage as hex words, one matrix row per line, for RTL comparison."""
    lines = []
    for name, value in stages.items():
        if isinstance(value, FixedMatrix):
            lines.append(f"## {name} {value.rows}x{value.cols} fixed {value.fmt}")
            lines.extend(value.hex_rows())
        else:
            arr = np.asarray(value, dtype=np.float32)
            lines.append(f"## {name} {arr.shape[0]}x{arr.shape[1]} binary32")
            lines.extend(" ".join(_f32_hex(v) for v in row) for row in arr)
    Path(path).write_text("\n".join(lines) + "\n")

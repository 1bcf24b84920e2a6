"""Register-level emulation of the PS <-> PL interface and its control FSM.

Register map (one 32-bit word per index):

=========  ==================  ==========================  =============================
index      name                writable in                 contents
=========  ==================  ==========================  =============================
0          CONTROL             any state                   bit0 START, bit1 READY, bit2 RESTART
1          STATUS              read-only                   bit0 SEND_COMPLETE, bit1 COMPUTE_DONE, bit2 ERROR
2..37      H[0][0]..H[5][5]    IDLE, SEND_DATA             raw fixed-point, row-major
38..73     W[0][0]..W[5][5]    IDLE, SEND_DATA             raw fixed-point, row-major
74..79     Y[0]..Y[5]          IDLE, SEND_DATA             raw fixed-point
80..85     X[0]..X[5]          read-only, readable in DONE raw scaled solution
86         OVERFLOW            read-only, readable in DONE saturation event count
87         CYCLES              read-only, readable in DONE modelled core cycles
88         ERROR_CODE          read-only, readable in DONE 0 none, 1 singular matrix
=========  ==================  ==========================  =============================

``step`` advances the FSM by one tick, not one clock: COMPUTE runs the whole
core in a single tick and reports its modelled cycle count in CYCLES.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

from .datapath import (
    DEFAULT_CLOCK_HZ,
    FixedProblem,
    HwResult,
    SingularMatrix,
    decode_estimate,
    pipeline_cycles,
    pl_core,
)
from .fixed_point import Q15_16, FixedMatrix, QFormat, raw_from_word

N = 6

REG_CONTROL = 0
REG_STATUS = 1
REG_H = 2
REG_W = REG_H + N * N
REG_Y = REG_W + N * N
REG_X = REG_Y + N
REG_OVERFLOW = REG_X + N
REG_CYCLES = REG_OVERFLOW + 1
REG_ERROR_CODE = REG_CYCLES + 1
N_REGS = REG_ERROR_CODE + 1

CTRL_START = 1 << 0
CTRL_READY = 1 << 1
CTRL_RESTART = 1 << 2

STAT_SEND_COMPLETE = 1 << 0
STAT_COMPUTE_DONE = 1 << 1
STAT_ERROR = 1 << 2

ERR_NONE = 0
ERR_SINGULAR = SingularMatrix.code

DATA_REGS = range(REG_H, REG_X)
RESULT_REGS = range(REG_X, N_REGS)


class ControlState(enum.Enum):
    IDLE = "IDLE"
    SEND_DATA = "SEND_DATA"
    COMPUTE = "COMPUTE"
    DONE = "DONE"


# Only these edges (plus self-loops) exist.
TRANSITIONS = {
    (ControlState.IDLE, ControlState.SEND_DATA),
    (ControlState.SEND_DATA, ControlState.COMPUTE),
    (ControlState.COMPUTE, ControlState.DONE),
    (ControlState.DONE, ControlState.IDLE),
}

DATA_WRITE_STATES = {ControlState.IDLE, ControlState.SEND_DATA}


class BusError(Exception):
    pass


class UnknownRegister(BusError):
    def __init__(self, addr: int):
        self.addr = addr
        super().__init__(f"register {addr} is not mapped")


class CoreFault(BusError):
    """The core latched an error; the bus is left in DONE until restarted."""

    def __init__(self, code: int):
        self.code = code
        name = "singular matrix" if code == ERR_SINGULAR else "unknown"
        super().__init__(f"core reported error code {code} ({name})")


class WriteNotPermitted(BusError):
    def __init__(self, state: ControlState, addr: int):
        self.state = state
        self.addr = addr
        super().__init__(f"register {addr} is not writable in {state.value}")


class ReadNotPermitted(BusError):
    def __init__(self, state: ControlState, addr: int):
        self.state = state
        self.addr = addr
        super().__init__(f"register {addr} is not readable in {state.value}")


@dataclass
class TraceEvent:
    tick: int
    state: ControlState
    op: str
    addr: int | None = None
    word: int | None = None

    def format(self) -> str:
        parts = [str(self.tick), self.state.value, self.op]
        if self.addr is not None:
            parts.append(str(self.addr))
        if self.word is not None:
            parts.append(f"0x{self.word:08x}")
        return " ".join(parts)


@dataclass
class BusState:
    """Register file, FSM position and send-complete word tracking.

    Single owner by contract: writes, steps and reads happen in sequence.
    """

    fmt: QFormat = Q15_16
    clock_hz: float = DEFAULT_CLOCK_HZ
    state: ControlState = ControlState.IDLE
    regs: list[int] = field(default_factory=lambda: [0] * N_REGS)
    received: set[int] = field(default_factory=set)
    tick: int = 0
    trace: list[TraceEvent] | None = None

    def _log(self, op: str, addr: int | None = None, word: int | None = None) -> None:
        if self.trace is not None:
            self.trace.append(TraceEvent(self.tick, self.state, op, addr, word))

    def reset(self) -> "BusState":
        self.state = ControlState.IDLE
        self.regs = [0] * N_REGS
        self.received = set()
        self._log("reset")
        return self

    @property
    def send_complete(self) -> bool:
        return len(self.received) == len(DATA_REGS)

    def write_reg(self, addr: int, word: int) -> "BusState":
        if not 0 <= addr < N_REGS:
            raise UnknownRegister(addr)
        word &= 0xFFFFFFFF
        if addr == REG_CONTROL:
            self.regs[REG_CONTROL] = word & (CTRL_START | CTRL_READY | CTRL_RESTART)
        elif addr in DATA_REGS and self.state in DATA_WRITE_STATES:
            self.regs[addr] = word
            self.received.add(addr)
            if self.send_complete:
                self.regs[REG_STATUS] |= STAT_SEND_COMPLETE
        else:
            raise WriteNotPermitted(self.state, addr)
        self._log("write", addr, word)
        return self

    def read_reg(self, addr: int) -> int:
        if not 0 <= addr < N_REGS:
            raise UnknownRegister(addr)
        if addr in RESULT_REGS and self.state is not ControlState.DONE:
            raise ReadNotPermitted(self.state, addr)
        word = self.regs[addr]
        self._log("read", addr, word)
        return word

    def _compute(self) -> None:
        words = [raw_from_word(w) for w in self.regs[REG_H:REG_X]]
        H = FixedMatrix(N, N, tuple(words[:N * N]), self.fmt)
        W = FixedMatrix(N, N, tuple(words[N * N:2 * N * N]), self.fmt)
        y = FixedMatrix(N, 1, tuple(words[2 * N * N:]), self.fmt)
        status = self.regs[REG_STATUS] | STAT_COMPUTE_DONE
        try:
            out = pl_core(H, W, y, self.clock_hz)
        except SingularMatrix:
            self.regs[REG_X:N_REGS] = [0] * (N_REGS - REG_X)
            self.regs[REG_ERROR_CODE] = ERR_SINGULAR
            self.regs[REG_CYCLES] = pipeline_cycles(N, self.clock_hz).total
            status |= STAT_ERROR
        else:
            self.regs[REG_X:REG_OVERFLOW] = [v & 0xFFFFFFFF for v in out.x.raw]
            self.regs[REG_OVERFLOW] = min(out.overflow_count, 0xFFFFFFFF)
            self.regs[REG_CYCLES] = out.cycles.total
            self.regs[REG_ERROR_CODE] = ERR_NONE
        self.regs[REG_STATUS] = status

    def step(self) -> "BusState":
        ctrl = self.regs[REG_CONTROL]
        prev = self.state
        if prev is ControlState.IDLE:
            if ctrl & CTRL_READY and ctrl & CTRL_START:
                self.state = ControlState.SEND_DATA
        elif prev is ControlState.SEND_DATA:
            if self.send_complete:
                self.state = ControlState.COMPUTE
        elif prev is ControlState.COMPUTE:
            self._compute()
            self.state = ControlState.DONE
        elif prev is ControlState.DONE:
            if ctrl & CTRL_RESTART:
                # A fresh cycle: every data word has to be sent again.
                self.regs = [0] * N_REGS
                self.received = set()
                self.state = ControlState.IDLE
        self.tick += 1
        if self.state is not prev:
            self._log(f"{prev.value}->{self.state.value}")
        return self

    def dump_trace(self, path) -> None:
        lines = ["# tick state op [addr] [word]"]
        lines += [e.format() for e in self.trace or []]
        Path(path).write_text("\n".join(lines) + "\n")


def reset(fmt: QFormat = Q15_16, clock_hz: float = DEFAULT_CLOCK_HZ, trace: bool = False) -> BusState:
    return BusState(fmt=fmt, clock_hz=clock_hz, trace=[] if trace else None).reset()


def write_reg(bus: BusState, addr: int, word: int) -> BusState:
    return bus.write_reg(addr, word)


def step(bus: BusState) -> BusState:
    return bus.step()


def restart(bus: BusState) -> BusState:
    """Assert RESTART from DONE and take the edge back to IDLE."""
    bus.write_reg(REG_CONTROL, CTRL_RESTART)
    return bus.step()


MAX_TICKS = 16


def run_transaction(bus: BusState, problem: FixedProblem) -> HwResult:
    """Drive write -> compute -> read for one problem and de-scale on the PS side.

    The bus adds transport only: the result is bit-identical to
    :func:`ivisnav.datapath.hw_wls_pipeline` on the same problem. A core
    error raises :class:`CoreFault` and leaves the bus in DONE.
    """
    if bus.state is not ControlState.IDLE:
        raise BusError(f"transaction must start in IDLE, bus is in {bus.state.value}")
    if problem.fmt != bus.fmt:
        raise ValueError(f"problem is {problem.fmt}, bus is configured for {bus.fmt}")
    words = list(problem.H.raw) + list(problem.W.raw) + list(problem.y.raw)
    bus.write_reg(REG_CONTROL, CTRL_READY | CTRL_START)
    bus.step()
    for addr, raw in zip(DATA_REGS, words):
        bus.write_reg(addr, raw)
    for _ in range(MAX_TICKS):
        if bus.state is ControlState.DONE:
            break
        bus.step()
    else:
        raise BusError("core did not reach DONE")
    status = bus.read_reg(REG_STATUS)
    if status & STAT_ERROR:
        raise CoreFault(bus.read_reg(REG_ERROR_CODE))
    x_raw = tuple(raw_from_word(bus.read_reg(a)) for a in range(REG_X, REG_OVERFLOW))
    overflow = bus.read_reg(REG_OVERFLOW)
    cycles_total = bus.read_reg(REG_CYCLES)
    cycles = pipeline_cycles(N, bus.clock_hz)
    if cycles.total != cycles_total:
        raise BusError(f"cycle register {cycles_total} disagrees with the cycle model {cycles.total}")
    restart(bus)
    return HwResult(decode_estimate(x_raw, problem), x_raw, cycles,
                    problem.encode_overflows + overflow)

"""HW-vs-SW comparison runs and their CSV / JSON reports.

CSV columns, in order::

    t,
    true_vx, true_vy, true_vz, true_wx, true_wy, true_wz,
    sw_vx .. sw_wz, hw_vx .. hw_wz,
    abs_err_vx .. abs_err_wz,     |hw - sw|
    pct_err_vx .. pct_err_wz,     percent error, "NA" where |sw| <= eps_denominator
    overflow_count, cycles

Floats are written with ``repr`` so every value round-trips exactly. Frames
whose hardware pass failed carry "NA" in the hw/abs/pct columns; the JSON
report records the error message.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from pathlib import Path

import numpy as np

from .bus import BusError, BusState, ControlState, CoreFault, reset, restart, run_transaction
from .datapath import SingularMatrix, encode_problem, pipeline_cycles
from .estimator import SingularSystem, wls_solve
from .scenario import EPS_DENOMINATOR, Scenario, dumps
from .sensor import axial_maneuver, frame_problem, synthesize_frame

CHANNELS = ("vx", "vy", "vz", "wx", "wy", "wz")
NA = "NA"


class DenominatorTooSmall(ZeroDivisionError):
    pass


def percent_error(hw: float, sw: float, eps: float = EPS_DENOMINATOR) -> float:
    """``|hw - sw| / |sw| * 100``.

    Evaluated exactly on the shortest decimal form of each operand and rounded
    once, so ``percent_error(1.008, 1.0)`` is exactly ``0.8``.
    """
    if not abs(sw) > eps:
        raise DenominatorTooSmall(f"|sw| = {abs(sw):.3g} is not above {eps:g}")
    with localcontext() as ctx:
        ctx.prec = 50
        h, s = Decimal(repr(float(hw))), Decimal(repr(float(sw)))
        return float(abs(h - s) / abs(s) * 100)


@dataclass
class FrameRecord:
    t: float
    true: list[float]
    sw: list[float] | None
    hw: list[float] | None
    abs_err: list[float] | None
    pct_err: list[float | None] | None
    overflow_count: int
    cycles: int
    error: str | None = None

    def to_dict(self) -> dict:
        return {"t": self.t, "true": self.true, "sw": self.sw, "hw": self.hw,
                "abs_err": self.abs_err, "pct_err": self.pct_err,
                "overflow_count": self.overflow_count, "cycles": self.cycles, "error": self.error}

    @classmethod
    def from_dict(cls, d: dict) -> "FrameRecord":
        return cls(**d)


@dataclass
class ComparisonReport:
    scenario: str
    frames: list[FrameRecord] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    config: str = ""

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "config": self.config, "summary": self.summary,
                "frames": [f.to_dict() for f in self.frames]}

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonReport":
        return cls(d["scenario"], [FrameRecord.from_dict(f) for f in d["frames"]],
                   d["summary"], d.get("config", ""))


def _floats(v) -> list[float]:
    return [float(x) for x in v]


def compare_frame(sw, hw, eps: float) -> tuple[list[float], list[float | None]]:
    abs_err = [abs(h - s) for h, s in zip(hw, sw)]
    pct = []
    for h, s in zip(hw, sw):
        try:
            pct.append(percent_error(h, s, eps))
        except DenominatorTooSmall:
            pct.append(None)
    return abs_err, pct


def latency_block(clock_hz: float) -> dict:
    cycles = pipeline_cycles(6, clock_hz)
    return {"cycles": cycles.total, "clock_hz": clock_hz, "microseconds": cycles.microseconds,
            "per_block": dict(cycles.per_block), "note": cycles.describe()}


def summarize(frames: list[FrameRecord], clock_hz: float) -> dict:
    channels = {}
    for c, name in enumerate(CHANNELS):
        pct = [f.pct_err[c] for f in frames if f.pct_err is not None and f.pct_err[c] is not None]
        ab = [f.abs_err[c] for f in frames if f.abs_err is not None]
        channels[name] = {
            "max_pct_err": max(pct) if pct else None,
            "mean_pct_err": math.fsum(pct) / len(pct) if pct else None,
            "defined_pct_frames": len(pct),
            "max_abs_err": max(ab) if ab else None,
            "mean_abs_err": math.fsum(ab) / len(ab) if ab else None,
        }
    return {
        "frames": len(frames),
        "failed_frames": sum(1 for f in frames if f.error is not None),
        "overflow_total": sum(f.overflow_count for f in frames),
        "channels": channels,
        "latency": latency_block(clock_hz),
    }


def run_comparison(scenario: Scenario, bus: BusState | None = None) -> ComparisonReport:
    """Every frame goes through the double-precision reference and through the bus + core.

    Frames are independent; nothing from one frame's hardware result feeds the next.
    """
    geometry = scenario.load_geometry()
    m = scenario.maneuver
    states = axial_maneuver(m.duration, scenario.constants.dt, m.v_z, m.omega_z, m.r0)
    bus = bus or reset(scenario.qformat, scenario.clock_hz)
    records = []
    for i, state in enumerate(states):
        frame = synthesize_frame(state, geometry, scenario.constants, scenario.noise, scenario.plane, index=i)
        problem = frame_problem(frame, geometry)
        true = _floats(state.rates())
        try:
            sw = _floats(wls_solve(problem, scenario.constants).as_vector())
        except SingularSystem as exc:
            records.append(FrameRecord(state.t, true, None, None, None, None, 0, 0, str(exc)))
            continue
        try:
            fixed = encode_problem(problem, scenario.constants, scenario.scaling, scenario.qformat)
            hw = run_transaction(bus, fixed)
        except (CoreFault, SingularMatrix, BusError, ValueError) as exc:
            if bus.state is ControlState.DONE:
                restart(bus)
            records.append(FrameRecord(state.t, true, sw, None, None, None, 0, 0, str(exc)))
            continue
        hw_vec = _floats(hw.estimate.as_vector())
        abs_err, pct = compare_frame(sw, hw_vec, scenario.eps_denominator)
        records.append(FrameRecord(state.t, true, sw, hw_vec, abs_err, pct,
                                   hw.overflow_count, hw.cycles.total))
    return ComparisonReport(scenario.name, records, summarize(records, scenario.clock_hz), dumps(scenario))


def csv_header() -> list[str]:
    cols = ["t"]
    for prefix in ("true", "sw", "hw", "abs_err", "pct_err"):
        cols += [f"{prefix}_{c}" for c in CHANNELS]
    return cols + ["overflow_count", "cycles"]


def _cell(v) -> str:
    if v is None:
        return NA
    if isinstance(v, float):
        if not math.isfinite(v):
            return NA
        return repr(v)
    return str(v)


def csv_rows(report: ComparisonReport) -> list[list[str]]:
    rows = []
    for f in report.frames:
        row = [_cell(f.t)]
        row += [_cell(v) for v in f.true]
        for block in (f.sw, f.hw, f.abs_err, f.pct_err):
            row += [_cell(v) for v in block] if block is not None else [NA] * 6
        row += [str(f.overflow_count), str(f.cycles)]
        rows.append(row)
    return rows


def report_csv(report: ComparisonReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header())
    w.writerows(csv_rows(report))
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def report_json(report: ComparisonReport) -> str:
    return json.dumps(_json_safe(report.to_dict()), indent=2, allow_nan=False) + "\n"


def emit_report(report: ComparisonReport, fmt: str, path) -> Path:
    path = Path(path)
    if fmt == "csv":
        text = report_csv(report)
    elif fmt == "json":
        text = report_json(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror or exc}") from exc
    return path


def load_json_report(path) -> ComparisonReport:
    return ComparisonReport.from_dict(json.loads(Path(path).read_text()))


def read_csv_report(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))

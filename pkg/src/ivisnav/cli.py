"""Command-line front end: ``ivisnav {run,solve,inspect-pipeline,gen-scenario}``.

Exit codes: 0 success, 1 runtime failure, 2 bad arguments or bad scenario file.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .bus import CoreFault, reset, run_transaction
from .datapath import ScalingScheme, dump_stages, encode_problem, pl_core
from .estimator import SensorConstants, wls_solve
from .fixed_point import QFormat
from .report import emit_report, run_comparison
from .scenario import Scenario, ScenarioError, load, save
from .sensor import (
    DEFAULT_MOUNT_RADIUS,
    NOISELESS,
    axial_maneuver,
    default_geometry,
    frame_problem,
    read_frames,
    read_geometry,
    synthesize_frame,
    write_frames,
)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _report_format(path: Path, explicit: str | None) -> str:
    if explicit:
        return explicit
    return "json" if path.suffix.lower() == ".json" else "csv"


def _qformat(text: str) -> QFormat:
    try:
        return QFormat.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def cmd_run(args) -> int:
    scenario = load(args.scenario)
    if args.noiseless:
        scenario = scenario.noiseless()
    report = run_comparison(scenario)
    out = Path(args.out)
    emit_report(report, _report_format(out, args.format), out)
    if args.json:
        emit_report(report, "json", args.json)
    if args.frames:
        geometry = scenario.load_geometry()
        m = scenario.maneuver
        states = axial_maneuver(m.duration, scenario.constants.dt, m.v_z, m.omega_z, m.r0)
        write_frames((synthesize_frame(s, geometry, scenario.constants, scenario.noise, scenario.plane, i)
                      for i, s in enumerate(states)), args.frames)
    s = report.summary
    print(f"{s['frames']} frames, {s['failed_frames']} failed, {s['overflow_total']} saturation events")
    for ch in ("vz", "wz"):
        pct = s["channels"][ch]["max_pct_err"]
        print(f"max pct error {ch}: {'NA' if pct is None else f'{pct:.6g}'}")
    print(s["latency"]["note"])
    print(f"report written to {out}")
    return EXIT_OK


def _load_frame(args):
    frames = read_frames(args.frame_file)
    if not frames:
        raise UsageError(f"{args.frame_file}: no frames")
    if not 0 <= args.frame < len(frames):
        raise UsageError(f"--frame {args.frame} out of range (file has {len(frames)} frames)")
    geometry = read_geometry(args.geometry) if args.geometry else default_geometry(DEFAULT_MOUNT_RADIUS)
    frame = frames[args.frame]
    return frame_problem(frame, geometry), SensorConstants(dt=frame.dt)


def _fmt_vec(v) -> str:
    return " ".join(f"{x: .9e}" for x in v)


def cmd_solve(args) -> int:
    problem, constants = _load_frame(args)
    scaling = ScalingScheme(y_scale=args.y_scale)
    sw = wls_solve(problem, constants).as_vector()
    hw = run_transaction(reset(args.qformat), encode_problem(problem, constants, scaling, args.qformat))
    print("#        vx vy vz [m/s]  wx wy wz [rad/s]")
    print(f"sw  {_fmt_vec(sw)}")
    print(f"hw  {_fmt_vec(hw.estimate.as_vector())}")
    print(f"hw raw {' '.join(str(r) for r in hw.raw)}")
    print(f"overflow_count {hw.overflow_count}")
    print(hw.cycles.describe())
    return EXIT_OK


def cmd_inspect(args) -> int:
    problem, constants = _load_frame(args)
    fixed = encode_problem(problem, constants, ScalingScheme(y_scale=args.y_scale), args.qformat)
    out = pl_core(fixed.H, fixed.W, fixed.y)
    dump_stages(out.stages, args.out)
    for name, cycles in out.cycles.per_block.items():
        print(f"{name:24s} {cycles:6d}")
    print(out.cycles.describe())
    print(f"stages written to {args.out}")
    return EXIT_OK


def cmd_gen_scenario(args) -> int:
    scenario = Scenario()
    if args.noiseless:
        scenario = replace(scenario, noise=NOISELESS)
    save(scenario, args.out)
    print(f"scenario written to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ivisnav", description="Fixed-point vs double-precision rate estimation harness.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario through both paths and write a report")
    r.add_argument("scenario")
    r.add_argument("--out", default="report.csv", help="report path (.json selects JSON)")
    r.add_argument("--format", choices=("csv", "json"))
    r.add_argument("--json", metavar="PATH", help="also write the JSON report here")
    r.add_argument("--frames", metavar="PATH", help="also export the synthesized frames")
    r.add_argument("--noiseless", action="store_true", help="override sigma_phi to 0")
    r.set_defaults(func=cmd_run)

    for name, func, helptext in (("solve", cmd_solve, "solve one frame on both paths"),
                                 ("inspect-pipeline", cmd_inspect, "dump per-stage core intermediates")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("frame_file")
        s.add_argument("--frame", type=int, default=0, help="0-based frame index")
        s.add_argument("--geometry", help="geometry file (default: bench directions on the mount ring)")
        s.add_argument("--qformat", type=_qformat, default=QFormat())
        s.add_argument("--y-scale", type=float, default=ScalingScheme().y_scale)
        if name == "inspect-pipeline":
            s.add_argument("--out", default="stages.txt")
        s.set_defaults(func=func)

    g = sub.add_parser("gen-scenario", help="write the default axial-maneuver scenario")
    g.add_argument("--out", default="default.scenario")
    g.add_argument("--noiseless", action="store_true")
    g.set_defaults(func=cmd_gen_scenario)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, UsageError) as exc:
        parser.print_usage(sys.stderr)
        print(f"ivisnav: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, ArithmeticError, CoreFault) as exc:
        print(f"ivisnav: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Synthetic ToF phase-difference frames for a rigid base moving under the sensor.

Frames are built from exact kinematics: each beam is intersected with the base
plane, the material point at the spot moves with ``v_c + omega x rho``, and the
phase change over one sampling interval is that velocity projected on the beam.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .estimator import UNIT_NORM_TOL, EstimationProblem, SensorConstants, build_H

N_BEACONS = 6

# Beacon direction vectors of the bench-top setup. Rows are not
# exactly unit length; default_geometry() normalises them.
BENCH_DIRECTIONS = np.array([
    [0.87264, 0.4977, 0.1367],
    [0.8927, -0.5082, 0.1304],
    [-0.0007, -0.9915, 0.1372],
    [-0.8586, -0.4957, 0.1391],
    [-0.8168, 0.4957, 0.1412],
    [0.0001, 0.9999, 0.1249],
])

DEFAULT_MOUNT_RADIUS = 0.2


class BeamParallel(ValueError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"beam {index} is parallel to the base plane")


@dataclass(frozen=True)
class BeaconGeometry:
    """Unit beam directions and beacon mount positions, both in the body frame."""

    directions: np.ndarray
    origins: np.ndarray | None = None

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=np.float64)
        if d.ndim != 2 or d.shape[1] != 3 or d.shape[0] < N_BEACONS:
            raise ValueError(f"need at least {N_BEACONS} 3-vectors, got shape {d.shape}")
        norms = np.linalg.norm(d, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise ValueError(f"beam directions must be unit length, norms {norms}")
        o = np.zeros_like(d) if self.origins is None else np.asarray(self.origins, dtype=np.float64)
        if o.shape != d.shape:
            raise ValueError("need one mount position per beam")
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "origins", o)

    @property
    def count(self) -> int:
        return self.directions.shape[0]


def mount_ring(directions, radius: float = DEFAULT_MOUNT_RADIUS) -> np.ndarray:
    """Beacon positions on a ring in the z = 0 plane.

    Beacon i sits a quarter turn from its beam azimuth, alternating sense, so
    every beam has a lever arm about the boresight. Without lever arms all six
    rows of H collapse onto ``r_hat . (v + r_c x omega)`` and rank drops to 3.
    """
    directions = np.asarray(directions, dtype=np.float64)
    out = np.zeros_like(directions)
    for i, r in enumerate(directions):
        az = math.atan2(r[1], r[0]) + (math.pi / 2 if i % 2 == 0 else -math.pi / 2)
        out[i] = (radius * math.cos(az), radius * math.sin(az), 0.0)
    return out


def default_geometry(mount_radius: float = DEFAULT_MOUNT_RADIUS) -> BeaconGeometry:
    d = BENCH_DIRECTIONS / np.linalg.norm(BENCH_DIRECTIONS, axis=1, keepdims=True)
    return BeaconGeometry(d, mount_ring(d, mount_radius))


@dataclass(frozen=True)
class BasePlane:
    """Orientation of the base plane; the plane always contains the base origin ``r_c``."""

    normal: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def unit_normal(self) -> np.ndarray:
        n = np.asarray(self.normal, dtype=np.float64)
        norm = np.linalg.norm(n)
        if norm == 0.0:
            raise ValueError("plane normal must be nonzero")
        return n / norm


@dataclass(frozen=True)
class TrueState:
    r_c: np.ndarray
    v_c: np.ndarray
    omega: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in ("r_c", "v_c", "omega"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if a.shape != (3,) or not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must be a finite 3-vector")
            object.__setattr__(self, name, a)
        if self.r_c[2] <= 0:
            raise ValueError("base must be in front of the sensor (r_c z > 0)")

    def rates(self) -> np.ndarray:
        return np.concatenate([self.v_c, self.omega])


@dataclass(frozen=True)
class NoiseModel:
    sigma_phi: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not self.sigma_phi >= 0:
            raise ValueError("sigma_phi must be >= 0")


NOISELESS = NoiseModel(0.0, 0)


@dataclass(frozen=True)
class MeasurementFrame:
    dphi: np.ndarray
    k: np.ndarray
    rho: np.ndarray
    dt: float
    t: float = 0.0

    def __post_init__(self):
        dphi = np.asarray(self.dphi, dtype=np.float64).ravel()
        k = np.asarray(self.k, dtype=np.float64).ravel()
        rho = np.asarray(self.rho, dtype=np.float64).reshape(-1, 3)
        if not (dphi.shape == k.shape and rho.shape[0] == dphi.shape[0]):
            raise ValueError("dphi, k and rho must describe the same number of beams")
        if np.any(k <= 0):
            raise ValueError("ranges must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "dphi", dphi)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "rho", rho)

    @property
    def phase_rate(self) -> np.ndarray:
        """Measurement vector for the estimator, rad/s."""
        return self.dphi / self.dt


def phase_from_range(r: float, constants: SensorConstants = SensorConstants()) -> float:
    if r < 0:
        raise ValueError("range must be non-negative")
    return 4.0 * math.pi * r * constants.f0 / constants.c


def intersect_plane(state: TrueState, geometry: BeaconGeometry,
                    plane: BasePlane = BasePlane()) -> tuple[np.ndarray, np.ndarray]:
    """Ranges ``k`` and in-plane spot displacements ``rho`` for every beam.

    Solves ``b_i + k_i r_hat_i = r_c + rho_i`` with ``n . rho_i = 0``.
    """
    n = plane.unit_normal()
    k = np.empty(geometry.count)
    rho = np.empty((geometry.count, 3))
    for i, (r, b) in enumerate(zip(geometry.directions, geometry.origins)):
        denom = float(n @ r)
        if abs(denom) <= 1e-6:
            raise BeamParallel(i)
        k[i] = float(n @ (state.r_c - b)) / denom
        if k[i] <= 0:
            raise ValueError(f"beam {i} points away from the base plane")
        rho[i] = b + k[i] * r - state.r_c
    return k, rho


def _frame_rng(noise: NoiseModel, index: int) -> np.random.Generator:
    return np.random.default_rng([noise.seed, index])


def synthesize_frame(state: TrueState, geometry: BeaconGeometry,
                     constants: SensorConstants = SensorConstants(),
                     noise: NoiseModel = NOISELESS,
                     plane: BasePlane = BasePlane(), index: int = 0) -> MeasurementFrame:
    """One frame of phase differences; noise is drawn from a stream keyed by (seed, index)."""
    k, rho = intersect_plane(state, geometry, plane)
    v_spot = state.v_c + np.cross(state.omega, rho)
    radial = np.einsum("ij,ij->i", v_spot, geometry.directions)
    dphi = constants.phase_per_metre * radial * constants.dt
    if noise.sigma_phi > 0:
        dphi = dphi + _frame_rng(noise, index).normal(0.0, noise.sigma_phi, size=dphi.shape)
    return MeasurementFrame(dphi, k, rho, constants.dt, state.t)


def axial_maneuver(duration: float, dt: float, v_z: float, omega_z: float,
                   r0: Sequence[float] = (0.0, 0.0, 1.0)) -> list[TrueState]:
    """Constant-rate translation and spin about the boresight.

    State i is stamped at the end of its sampling interval, ``t = (i + 1) dt``,
    so the last state sits at ``r0 + v duration``.
    """
    if not duration > 0 or not dt > 0:
        raise ValueError("duration and dt must be positive")
    n = int(round(duration / dt))
    r0 = np.asarray(r0, dtype=np.float64)
    v = np.array([0.0, 0.0, v_z])
    w = np.array([0.0, 0.0, omega_z])
    return [TrueState(r0 + v * ((i + 1) * dt), v, w, (i + 1) * dt) for i in range(n)]


def frame_problem(frame: MeasurementFrame, geometry: BeaconGeometry, Sigma=None) -> EstimationProblem:
    """Stack a frame into H and the phase-rate vector; W = Sigma^-1, or identity."""
    H = build_H(geometry.directions, frame.rho)
    if Sigma is None:
        return EstimationProblem.unweighted(H, frame.phase_rate)
    return EstimationProblem.with_covariance(H, Sigma, frame.phase_rate)


FRAME_FIELDS = 32


def format_frame(frame: MeasurementFrame) -> str:
    values = [frame.t, *frame.dphi, *frame.k, *frame.rho.ravel(), frame.dt]
    return " ".join(repr(float(v)) for v in values)


def parse_frame(line: str) -> MeasurementFrame:
    parts = line.split()
    if len(parts) != FRAME_FIELDS:
        raise ValueError(f"frame record needs {FRAME_FIELDS} numbers, got {len(parts)}")
    vals = [float(p) for p in parts]
    return MeasurementFrame(dphi=vals[1:7], k=vals[7:13], rho=np.reshape(vals[13:31], (6, 3)),
                            dt=vals[31], t=vals[0])


def write_frames(frames: Iterable[MeasurementFrame], path) -> None:
    lines = ["# t dphi1..6 k1..6 rho1x rho1y rho1z .. rho6z dt"]
    lines += [format_frame(f) for f in frames]
    Path(path).write_text("\n".join(lines) + "\n")


def read_frames(path) -> list[MeasurementFrame]:
    frames = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            frames.append(parse_frame(line))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return frames


def write_geometry(geometry: BeaconGeometry, path) -> None:
    lines = ["# rx ry rz mount_x mount_y mount_z  (body frame, one beacon per line)"]
    for r, b in zip(geometry.directions, geometry.origins):
        lines.append(" ".join(repr(float(v)) for v in (*r, *b)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_geometry(path) -> BeaconGeometry:
    """Read ``rx ry rz [mx my mz]`` rows; directions are normalised on load."""
    dirs, mounts = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        vals = [float(v) for v in line.split()]
        if len(vals) not in (3, 6):
            raise ValueError(f"{path}:{lineno}: expected 3 or 6 numbers, got {len(vals)}")
        dirs.append(vals[:3])
        mounts.append(vals[3:] if len(vals) == 6 else [0.0, 0.0, 0.0])
    d = np.array(dirs)
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    # rows already unit to rounding are kept as written so files round-trip bit-exactly
    d = np.where(np.abs(norms - 1.0) <= 4 * np.finfo(float).eps, d, d / norms)
    return BeaconGeometry(d, np.array(mounts))

"""Scenario files: a flat INI document with every constant in exact decimal.

Example (what ``ivisnav gen-scenario`` writes)::

    [scenario]
    name = axial-default

    [sensor]
    f0 = 10000000.0
    c = 299000000.0
    dt = 0.001
    geometry = bench
    mount_radius = 0.2

    [maneuver]
    v_z = 0.1
    omega_z = 0.05
    duration = 1.0
    r0 = 0.0 0.0 1.0
    plane_normal = 0.0 0.0 1.0

    [noise]
    sigma_phi = 1e-06
    seed = 0

    [fixed_point]
    qformat = Q15.16
    y_scale = 1024.0
    normalize_columns = true
    normalize_weight = true

    [report]
    clock_hz = 100000000.0
    eps_denominator = 1e-12

``geometry`` is either ``bench`` (bench directions on the default mount
ring of radius ``mount_radius``) or a path to a geometry file, resolved
relative to the scenario file.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

from .datapath import DEFAULT_CLOCK_HZ, ScalingScheme
from .estimator import SensorConstants
from .fixed_point import Q15_16, QFormat
from .sensor import (
    DEFAULT_MOUNT_RADIUS,
    BasePlane,
    BeaconGeometry,
    NoiseModel,
    default_geometry,
    read_geometry,
)

EPS_DENOMINATOR = 1e-12


class ScenarioError(ValueError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class Maneuver:
    v_z: float = 0.1
    omega_z: float = 0.05
    duration: float = 1.0
    r0: tuple[float, float, float] = (0.0, 0.0, 1.0)


@dataclass(frozen=True)
class Scenario:
    name: str = "axial-default"
    constants: SensorConstants = SensorConstants()
    geometry: str = "bench"
    mount_radius: float = DEFAULT_MOUNT_RADIUS
    maneuver: Maneuver = Maneuver()
    plane: BasePlane = BasePlane()
    noise: NoiseModel = NoiseModel()
    qformat: QFormat = Q15_16
    scaling: ScalingScheme = ScalingScheme()
    clock_hz: float = DEFAULT_CLOCK_HZ
    eps_denominator: float = EPS_DENOMINATOR
    base_dir: Path = field(default=Path("."), compare=False)

    def load_geometry(self) -> BeaconGeometry:
        if self.geometry == "bench":
            return default_geometry(self.mount_radius)
        return read_geometry(self.base_dir / self.geometry)

    def noiseless(self) -> "Scenario":
        return replace(self, noise=NoiseModel(0.0, self.noise.seed))


def _vec(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def dumps(s: Scenario) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["scenario"] = {"name": s.name}
    cp["sensor"] = {"f0": repr(s.constants.f0), "c": repr(s.constants.c), "dt": repr(s.constants.dt),
                    "geometry": s.geometry, "mount_radius": repr(s.mount_radius)}
    cp["maneuver"] = {"v_z": repr(s.maneuver.v_z), "omega_z": repr(s.maneuver.omega_z),
                      "duration": repr(s.maneuver.duration), "r0": _vec(s.maneuver.r0),
                      "plane_normal": _vec(s.plane.normal)}
    cp["noise"] = {"sigma_phi": repr(s.noise.sigma_phi), "seed": str(s.noise.seed)}
    cp["fixed_point"] = {"qformat": str(s.qformat), "y_scale": repr(s.scaling.y_scale),
                         "normalize_columns": str(s.scaling.normalize_columns).lower(),
                         "normalize_weight": str(s.scaling.normalize_weight).lower()}
    cp["report"] = {"clock_hz": repr(s.clock_hz), "eps_denominator": repr(s.eps_denominator)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def save(s: Scenario, path) -> None:
    Path(path).write_text(dumps(s))


_SCHEMA = {
    "scenario": {"name"},
    "sensor": {"f0", "c", "dt", "geometry", "mount_radius"},
    "maneuver": {"v_z", "omega_z", "duration", "r0", "plane_normal"},
    "noise": {"sigma_phi", "seed"},
    "fixed_point": {"qformat", "y_scale", "normalize_columns", "normalize_weight"},
    "report": {"clock_hz", "eps_denominator"},
}


class _Reader:
    def __init__(self, cp: configparser.ConfigParser):
        self.cp = cp

    def raw(self, section: str, key: str, default: str) -> str:
        if self.cp.has_option(section, key):
            return self.cp.get(section, key).strip()
        return default

    def number(self, section: str, key: str, default: float) -> float:
        text = self.raw(section, key, repr(default))
        try:
            return float(text)
        except ValueError:
            raise ScenarioError(f"{section}.{key}", f"expected a number, got {text!r}") from None

    def integer(self, section: str, key: str, default: int) -> int:
        text = self.raw(section, key, str(default))
        try:
            return int(text)
        except ValueError:
            raise ScenarioError(f"{section}.{key}", f"expected an integer, got {text!r}") from None

    def flag(self, section: str, key: str, default: bool) -> bool:
        text = self.raw(section, key, str(default)).lower()
        if text in ("true", "yes", "1", "on"):
            return True
        if text in ("false", "no", "0", "off"):
            return False
        raise ScenarioError(f"{section}.{key}", f"expected true/false, got {text!r}")

    def vec3(self, section: str, key: str, default) -> tuple[float, float, float]:
        text = self.raw(section, key, _vec(default))
        try:
            vals = tuple(float(v) for v in text.split())
        except ValueError:
            vals = ()
        if len(vals) != 3:
            raise ScenarioError(f"{section}.{key}", f"expected three numbers, got {text!r}")
        return vals


def loads(text: str, base_dir: Path = Path(".")) -> Scenario:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError("file", str(exc).splitlines()[0]) from None
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ScenarioError(section, "unknown section")
        for key in cp[section]:
            if key not in _SCHEMA[section]:
                raise ScenarioError(f"{section}.{key}", "unknown field")
    r = _Reader(cp)
    d = Scenario()

    def build(field_name, fn):
        try:
            return fn()
        except ScenarioError:
            raise
        except ValueError as exc:
            raise ScenarioError(field_name, str(exc)) from None

    constants = build("sensor", lambda: SensorConstants(
        f0=r.number("sensor", "f0", d.constants.f0),
        c=r.number("sensor", "c", d.constants.c),
        dt=r.number("sensor", "dt", d.constants.dt)))
    maneuver = Maneuver(
        v_z=r.number("maneuver", "v_z", d.maneuver.v_z),
        omega_z=r.number("maneuver", "omega_z", d.maneuver.omega_z),
        duration=r.number("maneuver", "duration", d.maneuver.duration),
        r0=r.vec3("maneuver", "r0", d.maneuver.r0))
    if not maneuver.duration > 0:
        raise ScenarioError("maneuver.duration", "must be positive")
    if not maneuver.r0[2] > 0:
        raise ScenarioError("maneuver.r0", "z component must be positive")
    noise = build("noise.sigma_phi", lambda: NoiseModel(
        r.number("noise", "sigma_phi", d.noise.sigma_phi), r.integer("noise", "seed", d.noise.seed)))
    qformat = build("fixed_point.qformat", lambda: QFormat.parse(r.raw("fixed_point", "qformat", str(d.qformat))))
    scaling = build("fixed_point.y_scale", lambda: ScalingScheme(
        y_scale=r.number("fixed_point", "y_scale", d.scaling.y_scale),
        normalize_columns=r.flag("fixed_point", "normalize_columns", d.scaling.normalize_columns),
        normalize_weight=r.flag("fixed_point", "normalize_weight", d.scaling.normalize_weight)))
    clock_hz = r.number("report", "clock_hz", d.clock_hz)
    if not clock_hz > 0:
        raise ScenarioError("report.clock_hz", "must be positive")
    eps = r.number("report", "eps_denominator", d.eps_denominator)
    if not eps >= 0:
        raise ScenarioError("report.eps_denominator", "must be >= 0")
    mount_radius = r.number("sensor", "mount_radius", d.mount_radius)
    if not mount_radius >= 0:
        raise ScenarioError("sensor.mount_radius", "must be >= 0")
    return Scenario(
        name=r.raw("scenario", "name", d.name),
        constants=constants,
        geometry=r.raw("sensor", "geometry", d.geometry),
        mount_radius=mount_radius,
        maneuver=maneuver,
        plane=BasePlane(r.vec3("maneuver", "plane_normal", d.plane.normal)),
        noise=noise,
        qformat=qformat,
        scaling=scaling,
        clock_hz=clock_hz,
        eps_denominator=eps,
        base_dir=base_dir,
    )


def load(path) -> Scenario:
    path = Path(path)
    return loads(path.read_text(), base_dir=path.parent)

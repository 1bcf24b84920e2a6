"""Double-precision reference for the 6-DOF rate estimate.

Each beacon contributes one row ``[r_hat, -r_hat^T [rho x]]`` to H, and the
weighted least-squares estimate is ``lambda/(4 pi) (H^T W H)^-1 H^T W y``
with ``y`` the per-beacon phase rate in rad/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 2.99e8
UNIT_NORM_TOL = 1e-3
SINGULAR_COND = 1e10


class SingularSystem(ArithmeticError):
    def __init__(self, cond: float):
        self.cond = cond
        super().__init__(f"normal matrix is singular (condition estimate {cond:.3g})")


@dataclass(frozen=True)
class SensorConstants:
    f0: float = 10e6
    c: float = SPEED_OF_LIGHT
    dt: float = 1e-3

    def __post_init__(self):
        if not (self.f0 > 0 and self.c > 0 and self.dt > 0):
            raise ValueError("f0, c and dt must be positive")

    @property
    def wavelength(self) -> float:
        return self.c / self.f0

    @property
    def phase_per_metre(self) -> float:
        """Round-trip phase per metre of range, 4 pi f0 / c."""
        return 4.0 * math.pi * self.f0 / self.c

    @property
    def metres_per_radian(self) -> float:
        """lambda / (4 pi), the factor in front of the normal-equation solution."""
        return self.wavelength / (4.0 * math.pi)


@dataclass(frozen=True)
class RateEstimate:
    v_c: np.ndarray
    omega: np.ndarray

    @classmethod
    def from_vector(cls, x) -> "RateEstimate":
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (6,):
            raise ValueError(f"expected a 6-vector, got shape {x.shape}")
        return cls(x[:3].copy(), x[3:].copy())

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.v_c, self.omega])


@dataclass(frozen=True)
class EstimationProblem:
    H: np.ndarray
    W: np.ndarray
    y_tilde: np.ndarray
    Sigma: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        H = np.asarray(self.H, dtype=np.float64)
        W = np.asarray(self.W, dtype=np.float64)
        y = np.asarray(self.y_tilde, dtype=np.float64).ravel()
        m = H.shape[0]
        if H.ndim != 2 or H.shape[1] != 6 or m < 6:
            raise ValueError(f"H must be m x 6 with m >= 6, got {H.shape}")
        if W.shape != (m, m):
            raise ValueError(f"W must be {m}x{m}, got {W.shape}")
        if y.shape != (m,):
            raise ValueError(f"y_tilde must have length {m}, got {y.shape}")
        if not np.allclose(W, W.T, rtol=1e-12, atol=0.0):
            raise ValueError("W must be symmetric")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "y_tilde", y)

    @classmethod
    def with_covariance(cls, H, Sigma, y_tilde) -> "EstimationProblem":
        Sigma = np.asarray(Sigma, dtype=np.float64)
        W = np.linalg.inv(Sigma)
        W = 0.5 * (W + W.T)
        return cls(H, W, y_tilde, Sigma)

    @classmethod
    def unweighted(cls, H, y_tilde) -> "EstimationProblem":
        H = np.asarray(H, dtype=np.float64)
        return cls(H, np.eye(H.shape[0]), y_tilde)


def skew(v) -> np.ndarray:
    """Cross-product matrix: ``skew(v) @ u == np.cross(v, u)``."""
    x, y, z = (float(c) for c in np.asarray(v, dtype=np.float64).ravel())
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def build_H(directions, displacements) -> np.ndarray:
    directions = np.asarray(directions, dtype=np.float64)
    displacements = np.asarray(displacements, dtype=np.float64)
    if directions.ndim != 2 or directions.shape[1] != 3:
        raise ValueError(f"directions must be m x 3, got {directions.shape}")
    if displacements.shape != directions.shape:
        raise ValueError("need one displacement per direction")
    norms = np.linalg.norm(directions, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"direction {i} is not a unit vector (norm {norms[i]:.6g})")
    H = np.empty((directions.shape[0], 6))
    for i, (r, rho) in enumerate(zip(directions, displacements)):
        H[i, :3] = r
        H[i, 3:] = -r @ skew(rho)
    return H


def wls_solve(problem: EstimationProblem, constants: SensorConstants = SensorConstants()) -> RateEstimate:
    # Whitening by the Cholesky factor of W turns the weighted problem into an
    # ordinary one; QR-based lstsq avoids squaring the condition number.
    try:
        L = np.linalg.cholesky(problem.W)
    except np.linalg.LinAlgError as exc:
        raise ValueError("W must be positive definite") from exc
    A = L.T @ problem.H
    b = L.T @ problem.y_tilde
    cond = float(np.linalg.cond(A))
    if not math.isfinite(cond) or cond > SINGULAR_COND:
        raise SingularSystem(cond * cond if math.isfinite(cond) else math.inf)
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    return RateEstimate.from_vector(constants.metres_per_radian * x)


def range_rate(dphi: float, constants: SensorConstants = SensorConstants()) -> float:
    return constants.c / (4.0 * math.pi * constants.f0) * (dphi / constants.dt)

"""Space-time fields of a family member: density profile, support, grids."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import DirectState, FamilyTrajectory
from .errors import NegativeRadius, NotSelfSimilarParams


class Geometry(str, enum.Enum):
    LINE = "LINE"
    RADIAL = "RADIAL"


class SupportKind(str, enum.Enum):
    ALL_LINE = "ALL_LINE"
    HALF_LINE_LEFT = "HALF_LINE_LEFT"
    HALF_LINE_RIGHT = "HALF_LINE_RIGHT"
    BOUNDED = "BOUNDED"
    EMPTY = "EMPTY"


@dataclass(frozen=True)
class DensityProfile:
    """``rho^2(x) = max(q0 + q1 x + q2 x^2, 0)`` at time ``t``."""

    t: float
    q0: float
    q1: float
    q2: float

    @classmethod
    def from_state(cls, t: float, state: DirectState, sigma: int) -> "DensityProfile":
        return cls(
            t=float(t),
            q0=state.R,
            q1=-(2.0 / sigma) * (state.db + 3.0 * state.b * state.c),
            q2=-state.w / sigma,
        )

    def raw(self, x):
        x = np.asarray(x, dtype=float)
        return self.q0 + (self.q1 + self.q2 * x) * x

    def rho_sq(self, x):
        return np.maximum(self.raw(x), 0.0)

    def rho(self, x):
        return np.sqrt(self.rho_sq(x))

    def d_dx(self, x):
        return self.q1 + 2.0 * self.q2 * np.asarray(x, dtype=float)

    def invert(self, sigma: int) -> tuple[float, float, float]:
        """Recover ``(R, b' + 3bc, w)`` from the coefficients."""
        return self.q0, -0.5 * sigma * self.q1, -sigma * self.q2


@dataclass(frozen=True)
class SupportInterval:
    kind: SupportKind
    lo: Optional[float] = None
    hi: Optional[float] = None
    # Set when q2 > 0: the density grows without bound in |x|.
    unbounded_density: bool = False

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo = -np.inf if self.lo is None else self.lo
        hi = np.inf if self.hi is None else self.hi
        if self.kind is SupportKind.EMPTY:
            return np.zeros(x.shape, dtype=bool)
        return (x > lo) & (x < hi)


def profile_at(trajectory: FamilyTrajectory, t: float) -> DensityProfile:
    return DensityProfile.from_state(t, trajectory.state_at(t), trajectory.params.sigma)


def support_of(profile: DensityProfile, eps: float = 0.0) -> SupportInterval:
    """Classify ``{x : q0 + q1 x + q2 x^2 > eps}``."""
    c0 = profile.q0 - eps
    q1, q2 = profile.q1, profile.q2
    if q2 < 0.0:
        disc = q1 * q1 - 4.0 * q2 * c0
        if disc <= 0.0:
            return SupportInterval(SupportKind.EMPTY)
        r1, r2 = _quadratic_roots(q2, q1, c0, disc)
        return SupportInterval(SupportKind.BOUNDED, min(r1, r2), max(r1, r2))
    if q2 == 0.0:
        if q1 == 0.0:
            return SupportInterval(SupportKind.ALL_LINE if c0 > 0.0 else SupportKind.EMPTY)
        root = -c0 / q1
        if q1 < 0.0:
            return SupportInterval(SupportKind.HALF_LINE_LEFT, hi=root)
        return SupportInterval(SupportKind.HALF_LINE_RIGHT, lo=root)
    # Upward parabola: positive outside its roots, reported as the whole line.
    return SupportInterval(SupportKind.ALL_LINE, unbounded_density=True)


def _quadratic_roots(a, b, c, disc):
    # Cancellation-free form.
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    if q == 0.0:
        return 0.0, 0.0
    return q / a, c / q


@dataclass(frozen=True)
class FieldGrid:
    """``rho_sq[i, j]`` and ``u[i, j]`` at ``(x_points[i], t_points[j])``."""

    x_points: np.ndarray
    t_points: np.ndarray
    rho_sq: np.ndarray
    u: np.ndarray
    geometry: Geometry

    @property
    def rho(self) -> np.ndarray:
        return np.sqrt(self.rho_sq)


def evaluate_grid(trajectory: FamilyTrajectory, x_points, t_points,
                  geometry: Geometry = Geometry.LINE) -> FieldGrid:
    geometry = Geometry(geometry)
    x = np.atleast_1d(np.asarray(x_points, dtype=float))
    t = np.atleast_1d(np.asarray(t_points, dtype=float))
    if geometry is Geometry.RADIAL and np.any(x < 0):
        raise NegativeRadius("radial grids need r >= 0")
    states = trajectory.direct_at(t)
    sigma = trajectory.params.sigma
    c, w, b, db, R = (states[:, k] for k in range(5))
    q1 = -(2.0 / sigma) * (db + 3.0 * b * c)
    q2 = -w / sigma
    X = x[:, None]
    rho_sq = np.maximum(R[None, :] + (q1[None, :] + q2[None, :] * X) * X, 0.0)
    u = c[None, :] * X + b[None, :]
    return FieldGrid(x, t, rho_sq, u, geometry)


def self_similar_check(trajectory: FamilyTrajectory, t_pair, x_samples,
                       strict: bool = True) -> float:
    """Max mismatch of ``rho * a^(1/3)`` as a function of ``x / a^(1/3)``.

    ``x_samples`` are the common similarity coordinates. With ``strict``
    the check refuses trajectories whose ``b`` data is nonzero.
    """
    p = trajectory.params
    if strict and (p.b0 != 0.0 or p.b1 != 0.0):
        raise NotSelfSimilarParams("self-similarity requires b0 = b1 = 0")
    eta = np.asarray(x_samples, dtype=float)
    scaled = []
    for t in t_pair:
        a = float(trajectory.emden_at(t)[0])
        k = np.cbrt(a)
        prof = profile_at(trajectory, t)
        scaled.append(prof.rho(eta * k) * k)
    return float(np.max(np.abs(scaled[0] - scaled[1])))

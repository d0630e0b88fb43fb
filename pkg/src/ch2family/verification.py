"""Residual verification of constructed solutions against the PDE system.

The velocity is linear in ``x`` and the density squared is quadratic, so all
spatial derivatives are exact. Only time derivatives are approximated, by
central differences of the profile coefficients and of ``(c, b)``. The mass
equation is checked in its ``rho^2`` form::

    (rho^2)_t / 2 + u (rho^2)_x / 2 + rho^2 u_x = 0

and the momentum equation in its reduced form ``u_t + 3 u u_x + sigma rho rho_x = 0``
with ``sigma rho rho_x = (sigma / 2) (rho^2)_x``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import FamilyParams, FamilyTrajectory
from .errors import BoundaryPoint, EmptyInterior, InvalidParameters, OutOfRange
from .fields import DensityProfile, FieldGrid, Geometry, SupportKind, evaluate_grid, support_of

ProfileTransform = Callable[[DensityProfile], DensityProfile]

DEFAULT_DT_FD = 1e-4
DEFAULT_TOL = 1e-6
DEFAULT_DELTA_REL = 1e-6
ROOT_MARGIN = 1e-3
CONVERGENCE_FLOOR = 1e-10


def scale_coefficient(name: str, factor: float) -> ProfileTransform:
    """Profile transform multiplying one of ``q0, q1, q2`` by ``factor``."""
    _check_coefficient(name)

    def transform(p: DensityProfile) -> DensityProfile:
        return dataclasses.replace(p, **{name: getattr(p, name) * factor})

    return transform


def perturb_coefficient(name: str, delta: float) -> ProfileTransform:
    _check_coefficient(name)

    def transform(p: DensityProfile) -> DensityProfile:
        return dataclasses.replace(p, **{name: getattr(p, name) + delta})

    return transform


def _check_coefficient(name):
    if name not in ("q0", "q1", "q2"):
        raise InvalidParameters(f"unknown profile coefficient {name!r}")


@dataclass
class ResidualReport:
    mass_linf: float
    mass_l2: float
    momentum_linf: float
    momentum_l2: float
    dt_fd: float
    interior_fraction: float
    convergence_order: Optional[float] = None
    n_points: int = 0
    passed: Optional[bool] = None
    tolerance: Optional[float] = None
    residual_floor: Optional[float] = None
    history: list = field(default_factory=list)
    grid: Optional[FieldGrid] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {
            "mass_linf": self.mass_linf,
            "mass_l2": self.mass_l2,
            "momentum_linf": self.momentum_linf,
            "momentum_l2": self.momentum_l2,
            "dt_fd": self.dt_fd,
            "interior_fraction": self.interior_fraction,
            "n_points": self.n_points,
            "passed": self.passed,
            "tolerance": self.tolerance,
            "convergence_order": self.convergence_order,
        }
        if self.residual_floor is not None:
            out["residual_floor"] = self.residual_floor
        if self.history:
            out["history"] = self.history
        return out


def _profiles(traj: FamilyTrajectory, t: np.ndarray, transform):
    sigma = traj.params.sigma
    y = traj.direct_at(t)
    c, w, b, db, R = (y[..., k] for k in range(5))
    prof = DensityProfile(t=t, q0=R, q1=-(2.0 / sigma) * (db + 3.0 * b * c), q2=-w / sigma)
    if transform is not None:
        prof = transform(prof)
    return prof, c, b


def _check_times(traj, t, dt_fd):
    t = np.asarray(t, dtype=float)
    if np.any(t - dt_fd < traj.times_t[0]) or np.any(t + dt_fd > traj.times_t[-1]):
        raise OutOfRange("t +/- dt_fd must lie inside the trajectory range")
    return t


def _residuals(traj, x, t, dt_fd, transform):
    """Vectorized mass and momentum residuals at paired arrays ``x, t``."""
    x = np.asarray(x, dtype=float)
    t = _check_times(traj, t, dt_fd)
    p_m, c_m, b_m = _profiles(traj, t - dt_fd, transform)
    p_0, c_0, b_0 = _profiles(traj, t, transform)
    p_p, c_p, b_p = _profiles(traj, t + dt_fd, transform)
    inv = 0.5 / dt_fd
    dq0 = (p_p.q0 - p_m.q0) * inv
    dq1 = (p_p.q1 - p_m.q1) * inv
    dq2 = (p_p.q2 - p_m.q2) * inv
    dc = (c_p - c_m) * inv
    dbt = (b_p - b_m) * inv

    rho_sq = p_0.raw(x)
    rho_sq_x = p_0.d_dx(x)
    u = c_0 * x + b_0
    mass = 0.5 * (dq0 + (dq1 + dq2 * x) * x) + 0.5 * u * rho_sq_x + rho_sq * c_0
    sigma = traj.params.sigma
    momentum = dc * x + dbt + 3.0 * u * c_0 + 0.5 * sigma * rho_sq_x
    return mass, momentum, p_0


def _peak(p: DensityProfile, x):
    if p.q2 < 0.0:
        return max(p.q0 - p.q1 * p.q1 / (4.0 * p.q2), 0.0)
    return max(abs(p.q0), float(np.max(p.raw(x))))


def _root_margin(p: DensityProfile) -> float:
    if p.q2 == 0.0:
        return 0.0
    return 2.0 * abs(p.q1 / p.q2) * ROOT_MARGIN


def _interior_mask(p: DensityProfile, x, delta_rel, scale_x=None) -> np.ndarray:
    """Points where ``rho^2 >= delta`` and away from the support roots."""
    x = np.asarray(x, dtype=float)
    scale_x = x if scale_x is None else scale_x
    delta = delta_rel * _peak(p, scale_x)
    mask = p.raw(x) >= delta
    mask &= p.raw(x) > 0.0
    margin = _root_margin(p)
    if margin > 0.0:
        sup = support_of(p)
        for r in (sup.lo, sup.hi):
            if r is not None:
                mask &= np.abs(x - r) >= margin
    return mask


def _pointwise(traj, x, t, dt_fd, transform, delta_rel, which):
    _check_times(traj, t, dt_fd)
    mass, mom, p0 = _residuals(traj, np.array([x]), np.array([t]), dt_fd, transform)
    scalar = DensityProfile(float(t), float(p0.q0[0]), float(p0.q1[0]), float(p0.q2[0]))
    if not _interior_mask(scalar, np.array([x]), delta_rel)[0]:
        raise BoundaryPoint(f"(x={x}, t={t}) is outside the interior of the support")
    return float((mass if which == "mass" else mom)[0])


def mass_residual(trajectory: FamilyTrajectory, x: float, t: float,
                  dt_fd: float = DEFAULT_DT_FD, transform: Optional[ProfileTransform] = None,
                  delta_rel: float = DEFAULT_DELTA_REL) -> float:
    return _pointwise(trajectory, x, t, dt_fd, transform, delta_rel, "mass")


def momentum_residual(trajectory: FamilyTrajectory, x: float, t: float,
                      dt_fd: float = DEFAULT_DT_FD, transform: Optional[ProfileTransform] = None,
                      delta_rel: float = DEFAULT_DELTA_REL) -> float:
    return _pointwise(trajectory, x, t, dt_fd, transform, delta_rel, "momentum")


def default_x_range(geometry: Geometry) -> tuple[float, float]:
    return (0.0, 2.0) if Geometry(geometry) is Geometry.RADIAL else (-2.0, 2.0)


def interior_points(trajectory: FamilyTrajectory, window=None, x_range=None,
                    n_t: int = 21, n_x: int = 21, geometry: Geometry = Geometry.LINE,
                    dt_fd: float = DEFAULT_DT_FD, transform=None,
                    delta_rel: float = DEFAULT_DELTA_REL):
    """Sample ``(x, t)`` pairs inside the delta-interior of the support.

    At each of ``n_t`` times the x-window is intersected with the support
    (shrunk by the root margin) and ``n_x`` points are placed in it.
    Returns ``(x, t, interior_fraction)``; the fraction is measured on the
    uniform ``n_x`` by ``n_t`` window grid.
    """
    geometry = Geometry(geometry)
    lo_t, hi_t = window if window is not None else (trajectory.times_t[0], trajectory.t_final)
    x_lo, x_hi = x_range if x_range is not None else default_x_range(geometry)
    if geometry is Geometry.RADIAL and x_lo < 0:
        raise InvalidParameters("radial x range must be >= 0")
    lo_t = max(lo_t, trajectory.times_t[0] + dt_fd)
    hi_t = min(hi_t, trajectory.t_final - dt_fd)
    if hi_t < lo_t:
        raise EmptyInterior("window shorter than the finite-difference stencil")
    times = np.linspace(lo_t, hi_t, n_t)
    prof, _, _ = _profiles(trajectory, times, transform)
    uniform_x = np.linspace(x_lo, x_hi, n_x)
    if geometry is Geometry.RADIAL:
        uniform_x = uniform_x[uniform_x > 0.0]

    xs, ts = [], []
    n_inside = 0
    for j, t in enumerate(times):
        p = DensityProfile(float(t), float(prof.q0[j]), float(prof.q1[j]), float(prof.q2[j]))
        n_inside += int(np.count_nonzero(_interior_mask(p, uniform_x, delta_rel, uniform_x)))
        sup = support_of(p)
        if sup.kind is SupportKind.EMPTY:
            continue
        margin = _root_margin(p)
        lo = x_lo if sup.lo is None else max(x_lo, sup.lo + margin)
        hi = x_hi if sup.hi is None else min(x_hi, sup.hi - margin)
        if hi <= lo:
            continue
        cand = np.linspace(lo, hi, n_x)
        if geometry is Geometry.RADIAL:
            # r = 0 is excluded; shift the first node inward.
            cand = np.linspace(lo, hi, n_x + 1)[1:] if lo <= 0.0 else cand
        keep = _interior_mask(p, cand, delta_rel, uniform_x)
        xs.append(cand[keep])
        ts.append(np.full(np.count_nonzero(keep), t))
    total = max(uniform_x.size * n_t, 1)
    if not xs or sum(a.size for a in xs) == 0:
        raise EmptyInterior("the support vanished over the whole window")
    return np.concatenate(xs), np.concatenate(ts), n_inside / total


def residual_norms(trajectory, x, t, dt_fd=DEFAULT_DT_FD, transform=None):
    mass, mom, _ = _residuals(trajectory, x, t, dt_fd, transform)
    return {
        "mass_linf": float(np.max(np.abs(mass))),
        "mass_l2": float(np.sqrt(np.mean(mass ** 2))),
        "momentum_linf": float(np.max(np.abs(mom))),
        "momentum_l2": float(np.sqrt(np.mean(mom ** 2))),
    }


def verify_full(trajectory: FamilyTrajectory, window=None, tol: float = DEFAULT_TOL,
                dt_fd: float = DEFAULT_DT_FD, x_range=None, n_t: int = 21, n_x: int = 21,
                geometry: Geometry = Geometry.LINE,
                transform: Optional[ProfileTransform] = None,
                delta_rel: float = DEFAULT_DELTA_REL) -> ResidualReport:
    """Residuals on an interior grid of at least ``n_t * n_x`` candidates.

    Passes iff both L-infinity norms are within ``tol``.
    """
    geometry = Geometry(geometry)
    x_range = x_range if x_range is not None else default_x_range(geometry)
    x, t, frac = interior_points(trajectory, window, x_range, n_t, n_x, geometry,
                                 dt_fd, transform, delta_rel)
    norms = residual_norms(trajectory, x, t, dt_fd, transform)
    t_grid = np.unique(t)
    grid = evaluate_grid(trajectory, np.linspace(x_range[0], x_range[1], n_x), t_grid, geometry)
    passed = norms["mass_linf"] <= tol and norms["momentum_linf"] <= tol
    return ResidualReport(dt_fd=dt_fd, interior_fraction=frac, n_points=int(x.size),
                          passed=passed, tolerance=tol, grid=grid, **norms)


def convergence_study(trajectory: FamilyTrajectory, points, dt_sequence: Sequence[float],
                      transform: Optional[ProfileTransform] = None,
                      floor: float = CONVERGENCE_FLOOR) -> ResidualReport:
    """Fit the observed order of the residual against the FD step.

    ``points`` is an ``(N, 2)`` array of ``(x, t)``. Residuals below
    ``floor`` are treated as roundoff/integrator noise; if fewer than two
    levels lie above it the order is reported as absent.
    """
    dts = [float(d) for d in dt_sequence]
    if len(dts) < 3 or any(b >= a for a, b in zip(dts, dts[1:])):
        raise InvalidParameters("dt_sequence must be strictly decreasing with >= 3 entries")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    history = []
    for dt in dts:
        norms = residual_norms(trajectory, pts[:, 0], pts[:, 1], dt, transform)
        history.append({"dt_fd": dt, **norms})
    level = [max(h["mass_linf"], h["momentum_linf"]) for h in history]
    usable = [(d, r) for d, r in zip(dts, level) if r > floor]
    order = None
    if len(usable) >= 2:
        lx = np.log([d for d, _ in usable])
        ly = np.log([r for _, r in usable])
        order = float(np.polyfit(lx, ly, 1)[0])
    last = history[-1]
    return ResidualReport(
        mass_linf=last["mass_linf"], mass_l2=last["mass_l2"],
        momentum_linf=last["momentum_linf"], momentum_l2=last["momentum_l2"],
        dt_fd=dts[-1], interior_fraction=1.0, convergence_order=order,
        n_points=int(pts.shape[0]), residual_floor=min(level), history=history,
    )


# Closed-form members of the family. Each satisfies both PDEs identically.

@dataclass(frozen=True)
class GoldenSolution:
    name: str
    params: FamilyParams
    closed_form_rho_sq: Callable[[float, float], float]
    closed_form_u: Callable[[float, float], float]
    validity: tuple[float, float]


def _static_rho_sq(x, t):
    return np.ones_like(np.asarray(x, dtype=float))


def _zero_u(x, t):
    return np.zeros_like(np.asarray(x, dtype=float))


def _drift_rho_sq(x, t):
    return np.maximum(4.0 + t * t - 2.0 * np.asarray(x, dtype=float), 0.0)


def _drift_u(x, t):
    return np.full_like(np.asarray(x, dtype=float), t)


def _drift_neg_rho_sq(x, t):
    return np.maximum(4.0 - t * t + 2.0 * np.asarray(x, dtype=float), 0.0)


def _expansion_rho_sq(x, t):
    return np.full_like(np.asarray(x, dtype=float), (1.0 + 3.0 * t) ** (-2.0 / 3.0))


def _expansion_u(x, t):
    return np.asarray(x, dtype=float) / (1.0 + 3.0 * t)


GOLDEN_SOLUTIONS = (
    GoldenSolution("static", FamilyParams(1, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0),
                   _static_rho_sq, _zero_u, (0.0, 10.0)),
    GoldenSolution("b_drift", FamilyParams(1, 1.0, 0.0, 0.0, 0.0, 1.0, 4.0),
                   _drift_rho_sq, _drift_u, (0.0, 2.0)),
    GoldenSolution("b_drift_sigma_minus", FamilyParams(-1, 1.0, 0.0, 0.0, 0.0, 1.0, 4.0),
                   _drift_neg_rho_sq, _drift_u, (0.0, 1.5)),
    GoldenSolution("linear_expansion", FamilyParams(1, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0),
                   _expansion_rho_sq, _expansion_u, (0.0, 2.0)),
)


def golden(name: str) -> GoldenSolution:
    for g in GOLDEN_SOLUTIONS:
        if g.name == name:
            return g
    raise KeyError(name)

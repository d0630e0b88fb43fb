"""Reduced ODE systems for the linear-velocity solution family.

Conventions used throughout the package:

* the scale factor ``a`` is a function of the stretched time ``s = 3t`` and
  obeys ``a'' = xi * a**(-1/3)`` (primes are d/ds);
* the Hubble rate is ``c(t) = a'(3t) / a(3t)``;
* ``w = dc/dt + 3 c**2``, which equals ``3 xi a**(-4/3)`` on the family;
* ``R(t)`` is the density squared at the origin.

In physical time the family closes as a polynomial first-order system::

    c' = w - 3 c^2
    w' = -4 w c
    b'' = -6 c b' - 4 w b
    R' = -2 c R + (2 / sigma) b (b' + 3 b c)

which is what :func:`integrate_family` solves. The Emden form is integrated
alongside as an independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .errors import InvalidParameters, NonpositiveScale, OutOfRange
from .ode_engine import (
    EventSpec,
    IntegratorConfig,
    IvpProblem,
    Termination,
    Trajectory,
    integrate,
)


@dataclass(frozen=True)
class FamilyParams:
    """Seed data selecting one member of the solution family."""

    sigma: int = 1
    a0: float = 1.0
    a1: float = 0.0
    xi: float = 0.0
    b0: float = 0.0
    b1: float = 0.0
    alpha_sq: float = 1.0

    def __post_init__(self):
        if self.sigma not in (1, -1):
            raise InvalidParameters("sigma must be 1 or -1")
        object.__setattr__(self, "sigma", int(self.sigma))
        for name in ("a0", "a1", "xi", "b0", "b1", "alpha_sq"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise InvalidParameters(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if not self.a0 > 0:
            raise InvalidParameters("a0 must be > 0")
        if not self.alpha_sq >= 0:
            raise InvalidParameters("alpha_sq must be >= 0")


@dataclass(frozen=True)
class EmdenState:
    a: float
    da: float


@dataclass(frozen=True)
class DirectState:
    c: float
    w: float
    b: float
    db: float
    R: float

    def as_array(self) -> np.ndarray:
        return np.array([self.c, self.w, self.b, self.db, self.R], dtype=float)

    @classmethod
    def from_array(cls, y) -> "DirectState":
        return cls(*(float(v) for v in y[:5]))


def emden_rhs(state: EmdenState, xi: float) -> tuple[float, float]:
    if not state.a > 0:
        raise NonpositiveScale(f"scale factor must be positive, got a={state.a}")
    return state.da, xi * state.a ** (-1.0 / 3.0)


def direct_rhs(state: DirectState, sigma: int) -> DirectState:
    c, w, b, db, R = state.c, state.w, state.b, state.db, state.R
    return DirectState(
        c=w - 3.0 * c * c,
        w=-4.0 * w * c,
        b=db,
        db=-6.0 * c * db - 4.0 * w * b,
        R=-2.0 * c * R + (2.0 / sigma) * b * (db + 3.0 * b * c),
    )


def emden_energy(a, da, xi):
    """Conserved quantity of the Emden equation, ``(a')^2/2 - 1.5 xi a^(2/3)``."""
    return 0.5 * np.asarray(da) ** 2 - 1.5 * xi * np.cbrt(np.asarray(a)) ** 2


def emden_to_direct(params: FamilyParams) -> DirectState:
    if not params.a0 > 0:
        raise NonpositiveScale("a0 must be > 0")
    return DirectState(
        c=params.a1 / params.a0,
        w=3.0 * params.xi * params.a0 ** (-4.0 / 3.0),
        b=params.b0,
        db=params.b1,
        R=params.alpha_sq,
    )


def direct_to_emden(c0: float, w0: float) -> tuple[float, float, float]:
    """Inverse Hubble map in the gauge ``a0 = 1``; returns ``(a0, a1, xi)``."""
    return 1.0, float(c0), float(w0) / 3.0


def _direct_vector_rhs(sigma):
    two_over_sigma = 2.0 / sigma

    def rhs(t, y):
        c, w, b, db, R = y.tolist()
        return np.array([
            w - 3.0 * c * c,
            -4.0 * w * c,
            db,
            -6.0 * c * db - 4.0 * w * b,
            -2.0 * c * R + two_over_sigma * b * (db + 3.0 * b * c),
        ])

    return rhs


def _emden_vector_rhs(xi):
    def rhs(s, y):
        a, da = y.tolist()
        # NaN for a <= 0 makes the integrator reject the step instead of
        # stepping past touch-down.
        if not a > 0:
            return np.array([da, np.nan])
        return np.array([da, xi / a ** (1.0 / 3.0)])

    return rhs


def integrate_direct(params: FamilyParams, t_end: float,
                     config: Optional[IntegratorConfig] = None, events=()) -> Trajectory:
    y0 = emden_to_direct(params).as_array()
    return integrate(IvpProblem(_direct_vector_rhs(params.sigma), 0.0, y0, t_end),
                     config, events)


def integrate_emden(a0: float, a1: float, xi: float, s_end: float,
                    config: Optional[IntegratorConfig] = None,
                    events: tuple[EventSpec, ...] = ()) -> Trajectory:
    if not a0 > 0:
        raise NonpositiveScale("a0 must be > 0")
    return integrate(IvpProblem(_emden_vector_rhs(xi), 0.0, [a0, a1], s_end), config, events)


@dataclass(frozen=True)
class FamilyTrajectory:
    """Direct and Emden integrations of one family member on a shared t grid.

    ``direct`` has columns ``(c, w, b, db, R)``; ``emden`` has ``(a, a')``
    sampled at ``s = 3t``; ``energy`` is the Emden invariant at each sample.
    """

    params: FamilyParams
    times_t: np.ndarray
    direct: np.ndarray
    emden: np.ndarray
    energy: np.ndarray
    termination: Termination
    direct_trajectory: Trajectory
    emden_trajectory: Trajectory

    @property
    def t_final(self) -> float:
        return float(self.times_t[-1])

    @property
    def c(self):
        return self.direct[:, 0]

    @property
    def w(self):
        return self.direct[:, 1]

    @property
    def b(self):
        return self.direct[:, 2]

    @property
    def db(self):
        return self.direct[:, 3]

    @property
    def R(self):
        return self.direct[:, 4]

    @property
    def a(self):
        return self.emden[:, 0]

    @property
    def da(self):
        return self.emden[:, 1]

    def direct_state(self, i: int) -> DirectState:
        return DirectState.from_array(self.direct[i])

    def emden_state(self, i: int) -> EmdenState:
        return EmdenState(float(self.emden[i, 0]), float(self.emden[i, 1]))

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.times_t[0]) or np.any(t > self.times_t[-1]):
            raise OutOfRange(f"t outside [{self.times_t[0]}, {self.times_t[-1]}]")
        return t

    def direct_at(self, t) -> np.ndarray:
        """Dense direct state ``(c, w, b, db, R)`` at physical time(s) ``t``."""
        return self.direct_trajectory(self._check(t))

    def emden_at(self, t) -> np.ndarray:
        """Dense Emden state ``(a, a')`` at ``s = 3t``."""
        t = self._check(t)
        s = np.minimum(3.0 * t, self.emden_trajectory.t_final)
        return self.emden_trajectory(s)

    def state_at(self, t: float) -> DirectState:
        return DirectState.from_array(self.direct_at(float(t)))


def integrate_family(params: FamilyParams, t_end: float,
                     config: Optional[IntegratorConfig] = None) -> FamilyTrajectory:
    """Integrate one family member to ``t_end`` (or to the first singularity)."""
    if not t_end > 0:
        raise InvalidParameters("t_end must be > 0")
    config = config or IntegratorConfig()
    direct = integrate_direct(params, t_end, config)
    s_end = 3.0 * direct.t_final
    emden = integrate_emden(params.a0, params.a1, params.xi, s_end, config)

    termination = direct.termination
    times = direct.times
    if emden.t_final < s_end:
        # Emden side stopped first (touch-down); keep the common range only.
        keep = 3.0 * times <= emden.t_final
        times = times[keep]
        if termination is Termination.REACHED_T_END:
            termination = emden.termination
    d_states = direct.states[: len(times)]
    e_states = emden(np.minimum(3.0 * times, emden.t_final))
    energy = emden_energy(e_states[:, 0], e_states[:, 1], params.xi)
    return FamilyTrajectory(
        params=params,
        times_t=times.copy(),
        direct=d_states.copy(),
        emden=e_states,
        energy=energy,
        termination=termination,
        direct_trajectory=direct,
        emden_trajectory=emden,
    )


def _rho0_quadrature(traj: FamilyTrajectory, t: float, n: int) -> float:
    tau = np.linspace(0.0, t, n + 1)
    y = traj.direct_at(tau)
    c, b, db = y[:, 0], y[:, 2], y[:, 3]
    sigma = traj.params.sigma
    log_mu = cumulative_simpson(2.0 * c, x=tau, initial=0.0)
    mu = np.exp(log_mu)
    g = (2.0 / sigma) * b * (db + 3.0 * b * c)
    integral = simpson(mu * g, x=tau)
    return (integral + traj.params.alpha_sq) / mu[-1]


def rho0_closed_form(traj: FamilyTrajectory, t: float, tol: float = 1e-8,
                     n_start: int = 16, n_max: int = 1 << 16) -> float:
    """Integrating-factor solution for ``R(t)`` built from stored ``c, b, b'``.

    ``R(t) = (int_0^t mu G + alpha^2) / mu(t)`` with ``mu = exp(int_0^t 2c)``
    and ``G = (2/sigma) b (b' + 3 b c)``. Both integrals use composite
    Simpson on uniform grids, doubled with Richardson extrapolation until
    successive extrapolants agree to ``tol``.
    """
    t = float(t)
    if t < traj.times_t[0] or t > traj.times_t[-1]:
        raise OutOfRange(f"t={t} outside trajectory range")
    if t == 0.0:
        return traj.params.alpha_sq
    n = n_start
    coarse = _rho0_quadrature(traj, t, n)
    prev_extrap = None
    while True:
        n *= 2
        fine = _rho0_quadrature(traj, t, n)
        extrap = fine + (fine - coarse) / 15.0
        if prev_extrap is not None and abs(extrap - prev_extrap) <= tol * max(1.0, abs(extrap)):
            return extrap
        if n >= n_max:
            return extrap
        coarse, prev_extrap = fine, extrap

"""Explicit initial-value integration with dense output and event location.

Two methods are available: classic fixed-step RK4 and the Dormand-Prince
5(4) embedded pair with PI step-size control. Accepted steps are stored
together with the right-hand side at each node, which gives a C1 cubic
Hermite interpolant over the whole trajectory. Events are located by
bisection on that interpolant.

Singularities are never integrated through. A step whose stages produce
non-finite values is rejected and retried with a smaller step; when the
step would fall below ``h_min`` the run ends with ``STEP_UNDERFLOW``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidParameters, NoBracket, NonFiniteRHS, OutOfRange

Rhs = Callable[[float, np.ndarray], np.ndarray]


class Method(str, enum.Enum):
    RK4_FIXED = "RK4_FIXED"
    ADAPTIVE_EMBEDDED = "ADAPTIVE_EMBEDDED"


class Direction(str, enum.Enum):
    ANY = "ANY"
    RISING = "RISING"
    FALLING = "FALLING"


class Termination(str, enum.Enum):
    REACHED_T_END = "REACHED_T_END"
    EVENT = "EVENT"
    BLOWUP_GUARD = "BLOWUP_GUARD"
    STEP_UNDERFLOW = "STEP_UNDERFLOW"
    MAX_STEPS = "MAX_STEPS"


@dataclass(frozen=True)
class IvpProblem:
    rhs: Rhs
    t0: float
    y0: np.ndarray
    t_end: float

    def __post_init__(self):
        y0 = np.array(self.y0, dtype=float).reshape(-1)
        if y0.size == 0:
            raise InvalidParameters("y0 must have at least one component")
        if not self.t_end >= self.t0:
            raise InvalidParameters("t_end must be >= t0")
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "t_end", float(self.t_end))

    @property
    def dimension(self) -> int:
        return self.y0.size


@dataclass(frozen=True)
class IntegratorConfig:
    method: Method = Method.ADAPTIVE_EMBEDDED
    h_init: float = 1e-3
    h_min: float = 1e-14
    h_max: float = 2e-3
    rel_tol: float = 1e-10
    abs_tol: float = 1e-10
    max_steps: int = 1_000_000
    blowup_guard: float = 1e12
    # None means every component is guarded / error-controlled.
    guard_indices: Optional[tuple] = None
    error_indices: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not 0 < self.h_min <= self.h_init <= self.h_max:
            raise InvalidParameters("step sizes must satisfy 0 < h_min <= h_init <= h_max")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise InvalidParameters("rel_tol and abs_tol must be > 0")
        if not self.blowup_guard > 0:
            raise InvalidParameters("blowup_guard must be > 0")
        if int(self.max_steps) < 1:
            raise InvalidParameters("max_steps must be a positive integer")


@dataclass(frozen=True)
class EventSpec:
    event_fn: Callable[[float, np.ndarray], float]
    direction: Direction = Direction.ANY
    terminal: bool = True
    root_tol: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        if not self.root_tol > 0:
            raise InvalidParameters("root_tol must be > 0")

    def crosses(self, g_lo: float, g_hi: float) -> bool:
        if g_lo == 0.0 or g_lo * g_hi > 0.0:
            return False
        if self.direction is Direction.RISING:
            return g_hi > g_lo
        if self.direction is Direction.FALLING:
            return g_hi < g_lo
        return True


@dataclass(frozen=True)
class EventHit:
    index: int
    time: float
    state: np.ndarray


def hermite(theta, h, y0, y1, f0, f1):
    """Cubic Hermite interpolant on one step, ``theta`` in [0, 1]."""
    t2 = theta * theta
    t3 = t2 * theta
    h00 = 2 * t3 - 3 * t2 + 1
    h10 = t3 - 2 * t2 + theta
    h01 = -2 * t3 + 3 * t2
    h11 = t3 - t2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def hermite_derivative(theta, h, y0, y1, f0, f1):
    t2 = theta * theta
    d00 = (6 * t2 - 6 * theta) / h
    d10 = 3 * t2 - 4 * theta + 1
    d01 = (-6 * t2 + 6 * theta) / h
    d11 = 3 * t2 - 2 * theta
    return d00 * y0 + d10 * f0 + d01 * y1 + d11 * f1


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    termination: Termination
    event_time: Optional[float] = None
    event_state: Optional[np.ndarray] = None
    events: tuple = field(default_factory=tuple)
    n_rejected: int = 0

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    @property
    def y_final(self) -> np.ndarray:
        return self.states[-1]

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.times[0], self.times[-1]
        if np.any(t < lo) or np.any(t > hi):
            raise OutOfRange(f"time outside trajectory range [{lo}, {hi}]")
        k = np.searchsorted(self.times, t, side="right") - 1
        return t, np.clip(k, 0, max(len(self.times) - 2, 0))

    def __call__(self, t):
        """Dense output at scalar or array ``t``; rows follow ``t``'s shape."""
        t, k = self._locate(t)
        if len(self.times) == 1:
            return np.broadcast_to(self.states[0], t.shape + self.states.shape[1:]).copy()
        h = self.times[k + 1] - self.times[k]
        theta = ((t - self.times[k]) / h)[..., None]
        return hermite(theta, h[..., None], self.states[k], self.states[k + 1],
                       self.derivs[k], self.derivs[k + 1])

    def derivative(self, t):
        t, k = self._locate(t)
        if len(self.times) == 1:
            return np.broadcast_to(self.derivs[0], t.shape + self.derivs.shape[1:]).copy()
        h = self.times[k + 1] - self.times[k]
        theta = ((t - self.times[k]) / h)[..., None]
        return hermite_derivative(theta, h[..., None], self.states[k], self.states[k + 1],
                                  self.derivs[k], self.derivs[k + 1])


def locate_event(segment, event: EventSpec, dense_eval: Callable[[float], np.ndarray]) -> float:
    """Bisection for a sign change of ``event.event_fn`` on ``[t_lo, t_hi]``.

    ``segment`` is ``(t_lo, y_lo, t_hi, y_hi)``; ``dense_eval`` maps a time in
    the segment to a state.
    """
    t_lo, y_lo, t_hi, y_hi = segment
    g_lo = event.event_fn(t_lo, y_lo)
    g_hi = event.event_fn(t_hi, y_hi)
    if g_hi == 0.0 and g_lo != 0.0:
        return float(t_hi)
    if not event.crosses(g_lo, g_hi):
        raise NoBracket(f"event function does not change sign on [{t_lo}, {t_hi}]")
    lo, hi = float(t_lo), float(t_hi)
    while hi - lo > event.root_tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g_mid = event.event_fn(mid, dense_eval(mid))
        if g_mid == 0.0:
            return mid
        if (g_mid < 0.0) == (g_lo < 0.0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# Dormand-Prince 5(4) tableau.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    None,
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
)
# Difference between the 5th and embedded 4th order weights.
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

_SAFETY = 0.9
_PI_ALPHA = 0.7 / 5
_PI_BETA = 0.4 / 5
_FAC_MIN = 0.2
_FAC_MAX = 5.0


def _finite(*arrays) -> bool:
    # NaN and inf both survive summation.
    return math.isfinite(sum(float(a.sum()) for a in arrays))


def _dopri_step(rhs, t, y, f, h):
    k = np.empty((7, y.size))
    k[0] = f
    for i in range(1, 7):
        stage = y + h * (_A[i] @ k[:i])
        k[i] = rhs(t + _C[i] * h, stage)
    # The last stage is evaluated at the 5th-order solution (FSAL).
    return stage, k[6], h * (_E @ k)


def _rk4_step(rhs, t, y, f, h):
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * f)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    y_new = y + (h / 6.0) * (f + 2.0 * k2 + 2.0 * k3 + k4)
    return y_new, rhs(t + h, y_new)


def integrate(problem: IvpProblem, config: Optional[IntegratorConfig] = None,
              events: Sequence[EventSpec] = ()) -> Trajectory:
    """Integrate ``problem`` from ``t0`` to ``t_end``.

    Non-terminal events are recorded in ``Trajectory.events``; the first
    terminal event stops the run and its location becomes the last row.
    """
    config = config or IntegratorConfig()
    rhs = problem.rhs

    t = problem.t0
    y = problem.y0.copy()
    f0 = rhs(t, y)
    if isinstance(f0, np.ndarray) and f0.dtype == float and f0.shape == y.shape:
        f_of = rhs
    else:
        def f_of(t, y):
            return np.asarray(rhs(t, y), dtype=float).reshape(-1)
    f = np.asarray(f0, dtype=float).reshape(-1)
    if f.size != problem.dimension:
        raise InvalidParameters("rhs output length does not match the state dimension")
    if not _finite(y, f):
        raise NonFiniteRHS(f"rhs not finite at t={t}")

    limit = config.blowup_guard
    guard = config.guard_indices
    if guard is None:
        def guard_tripped(state):
            return float(np.abs(state).max()) > limit
    else:
        guard = tuple(int(i) for i in guard)

        def guard_tripped(state):
            return any(abs(state[i]) > limit for i in guard)

    err_idx = None if config.error_indices is None else list(config.error_indices)
    atol, rtol = config.abs_tol, config.rel_tol

    times = [t]
    states = [y]
    derivs = [f]
    hits: list[EventHit] = []
    g_prev = [ev.event_fn(t, y) for ev in events]
    termination = Termination.REACHED_T_END
    event_time = None
    event_state = None
    n_rejected = 0

    if guard_tripped(y):
        termination = Termination.BLOWUP_GUARD
        return _build(times, states, derivs, termination, None, None, hits, 0)

    adaptive = config.method is Method.ADAPTIVE_EMBEDDED
    h = config.h_init
    err_prev = 1e-4
    n_steps = 0
    t_end = problem.t_end

    while t < t_end:
        if n_steps >= config.max_steps:
            termination = Termination.MAX_STEPS
            break
        h_try = min(h, config.h_max)
        last = False
        if t + h_try >= t_end or (t_end - (t + h_try)) < 1e-12 * max(1.0, abs(t_end)):
            h_try = t_end - t
            last = True

        if adaptive:
            y_new, f_new, err = _dopri_step(f_of, t, y, f, h_try)
            if not _finite(y_new, f_new, err):
                n_rejected += 1
                h = 0.25 * h_try
                if h < config.h_min:
                    termination = Termination.STEP_UNDERFLOW
                    break
                continue
            if err_idx is None:
                scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
                err_norm = float((np.abs(err) / scale).max())
            else:
                scale = atol + rtol * np.maximum(np.abs(y[err_idx]), np.abs(y_new[err_idx]))
                err_norm = float((np.abs(err[err_idx]) / scale).max())
            if err_norm > 1.0:
                n_rejected += 1
                h = h_try * max(_FAC_MIN, _SAFETY * err_norm ** (-0.2))
                if h < config.h_min:
                    termination = Termination.STEP_UNDERFLOW
                    break
                continue
            if err_norm == 0.0:
                fac = _FAC_MAX
            else:
                fac = _SAFETY * err_norm ** (-_PI_ALPHA) * err_prev ** _PI_BETA
                fac = min(_FAC_MAX, max(_FAC_MIN, fac))
            err_prev = max(err_norm, 1e-4)
            h_next = h_try * fac if not last else h
        else:
            y_new, f_new = _rk4_step(f_of, t, y, f, h_try)
            if not _finite(y_new, f_new):
                raise NonFiniteRHS(f"rhs not finite near t={t + h_try}")
            h_next = h

        t_new = t_end if last else t + h_try
        n_steps += 1

        # Events on the accepted step.
        terminal_hit = None
        if events:
            seg_h = t_new - t

            def dense(tq, _t=t, _y=y, _yn=y_new, _f=f, _fn=f_new, _h=seg_h):
                return hermite((tq - _t) / _h, _h, _y, _yn, _f, _fn)

            g_new = [ev.event_fn(t_new, y_new) for ev in events]
            step_hits = []
            for i, ev in enumerate(events):
                if ev.crosses(g_prev[i], g_new[i]):
                    te = locate_event((t, y, t_new, y_new), ev, dense)
                    step_hits.append(EventHit(i, te, dense(te)))
            step_hits.sort(key=lambda e: e.time)
            for hit in step_hits:
                hits.append(hit)
                if events[hit.index].terminal:
                    terminal_hit = hit
                    break
            g_prev = g_new

        if terminal_hit is not None:
            te = terminal_hit.time
            if te > times[-1]:
                seg_h = t_new - t
                d_ev = hermite_derivative((te - t) / seg_h, seg_h, y, y_new, f, f_new)
                times.append(te)
                states.append(terminal_hit.state)
                derivs.append(d_ev)
            termination = Termination.EVENT
            event_time = te
            event_state = terminal_hit.state
            break

        times.append(t_new)
        states.append(y_new)
        derivs.append(f_new)
        t, y, f = t_new, y_new, f_new
        h = h_next

        if guard_tripped(y):
            termination = Termination.BLOWUP_GUARD
            break

    return _build(times, states, derivs, termination, event_time, event_state, hits, n_rejected)


def _build(times, states, derivs, termination, event_time, event_state, hits, n_rejected):
    return Trajectory(
        times=np.array(times, dtype=float),
        states=np.array(states, dtype=float),
        derivs=np.array(derivs, dtype=float),
        termination=termination,
        event_time=event_time,
        event_state=None if event_state is None else np.array(event_state, dtype=float),
        events=tuple(hits),
        n_rejected=n_rejected,
    )

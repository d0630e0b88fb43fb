"""Finite-time blowup versus global existence for the family.

Everything is decided by the scale-factor data ``(a0, a1, xi)``; the
velocity gradient ``u_x = c(t) = a'(3t)/a(3t)`` diverges exactly when ``a``
reaches zero. Singular times are given in stretched time ``s`` and in
physical time ``t = s / 3``.

With the energy ``E = a1^2/2 - 1.5 xi a0^(2/3)`` the scale factor touches
down iff

* ``xi < 0`` (always), or
* ``xi == 0`` and ``a1 < 0`` (``a`` is affine, ``s* = -a0/a1``), or
* ``xi > 0``, ``a1 < 0`` and ``E >= 0`` (the repulsive term cannot stop
  the collapse).

The last branch is absent from the classical three-case statement, which
declares every ``xi > 0`` member global; :func:`case_without_energy_criterion`
keeps that statement for comparison.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass
from typing import Optional

from scipy.integrate import quad

from .dynamics import FamilyParams, FamilyTrajectory, integrate_direct, integrate_emden
from .errors import NonnegativeXi, NoSingularityFound
from .ode_engine import Direction, EventSpec, IntegratorConfig, Termination


class Case(str, enum.Enum):
    XI_NEGATIVE_TOUCHDOWN = "XI_NEGATIVE_TOUCHDOWN"
    XI_ZERO_LINEAR_BLOWUP = "XI_ZERO_LINEAR_BLOWUP"
    XI_POSITIVE_TOUCHDOWN = "XI_POSITIVE_TOUCHDOWN"
    GLOBAL = "GLOBAL"


class VerdictMethod(str, enum.Enum):
    ANALYTIC = "ANALYTIC"
    EVENT_DETECTED = "EVENT_DETECTED"
    QUADRATURE = "QUADRATURE"


@dataclass(frozen=True)
class ClassificationVerdict:
    case: Case
    s_star: Optional[float] = None
    t_star: Optional[float] = None
    method: VerdictMethod = VerdictMethod.ANALYTIC
    detail: str = ""

    @property
    def blows_up(self) -> bool:
        return self.case is not Case.GLOBAL

    def to_dict(self) -> dict:
        return {
            "case": self.case.value,
            "s_star": self.s_star,
            "t_star": self.t_star,
            "method": self.method.value,
        }


def emden_energy0(a0: float, a1: float, xi: float) -> float:
    return 0.5 * a1 * a1 - 1.5 * xi * a0 ** (2.0 / 3.0)


def case_without_energy_criterion(params: FamilyParams) -> Case:
    """The classical trichotomy in ``xi`` and ``a1``, without the energy test."""
    if params.xi < 0:
        return Case.XI_NEGATIVE_TOUCHDOWN
    if params.xi == 0 and params.a1 < 0:
        return Case.XI_ZERO_LINEAR_BLOWUP
    return Case.GLOBAL


def touches_down(a0: float, a1: float, xi: float) -> bool:
    if xi < 0:
        return True
    if xi == 0:
        return a1 < 0
    return a1 < 0 and emden_energy0(a0, a1, xi) >= 0


def touchdown_time_quadrature(a0: float, a1: float, xi: float) -> float:
    """Stretched time at which ``a`` reaches zero, from the energy integral.

    ``ds = da / |a'|`` with ``a'^2 = 2E + 3 xi a^(2/3)``. Substituting
    ``a = z^3`` removes the singularity at ``a = 0``; the turning point of an
    upward launch (``xi < 0``, ``a1 > 0``) is an inverse-square-root endpoint,
    integrated with an algebraic weight.
    """
    if not touches_down(a0, a1, xi):
        raise NonnegativeXi(f"(a0={a0}, a1={a1}, xi={xi}) does not touch down")
    if xi == 0:
        return -a0 / a1
    energy = emden_energy0(a0, a1, xi)
    z0 = a0 ** (1.0 / 3.0)

    def speed_sq(z):
        return 2.0 * energy + 3.0 * xi * z * z

    if xi < 0:
        # a'^2 = -3 xi (z_max - z)(z_max + z), z_max^2 = z0^2 + a1^2 / (-3 xi).
        z_max = math.sqrt(z0 * z0 + a1 * a1 / (-3.0 * xi))
        near_turn = z0 > 0.5 * z_max
    else:
        near_turn = False

    if a1 <= 0 and not near_turn:
        # Straight fall from z0 to 0 with |a'| bounded away from zero.
        val, _ = quad(lambda z: 3.0 * z * z / math.sqrt(speed_sq(z)), 0.0, z0,
                      epsabs=1e-13, epsrel=1e-13, limit=200)
        return val

    def smooth(z):
        return 3.0 * z * z / math.sqrt(-3.0 * xi * (z_max + z))

    fall, _ = quad(smooth, 0.0, z_max, weight="alg", wvar=(0.0, -0.5),
                   epsabs=1e-13, epsrel=1e-13)
    if a1 == 0 or z0 >= z_max:
        return fall
    # The leg between z0 and the turning point: added for an upward launch,
    # removed for a downward one.
    leg, _ = quad(smooth, z0, z_max, weight="alg", wvar=(0.0, -0.5),
                  epsabs=1e-13, epsrel=1e-13)
    return fall + leg if a1 > 0 else fall - leg


def classify(params: FamilyParams) -> ClassificationVerdict:
    """Analytic verdict from ``(a0, a1, xi)`` only."""
    a0, a1, xi = params.a0, params.a1, params.xi
    if not touches_down(a0, a1, xi):
        return ClassificationVerdict(Case.GLOBAL, detail="scale factor stays positive")
    if xi == 0:
        s_star = -a0 / a1
        return ClassificationVerdict(Case.XI_ZERO_LINEAR_BLOWUP, s_star, s_star / 3.0,
                                     detail="affine scale factor a = a0 + a1 s")
    s_star = touchdown_time_quadrature(a0, a1, xi)
    case = Case.XI_NEGATIVE_TOUCHDOWN if xi < 0 else Case.XI_POSITIVE_TOUCHDOWN
    return ClassificationVerdict(case, s_star, s_star / 3.0,
                                 detail="touch-down time from the energy integral")


DETECTION_CONFIG = IntegratorConfig(h_init=1e-3, h_max=1.0)
DETECTION_EPS = (1e-6, 1e-7, 1e-8)
DEFAULT_HORIZON = 100.0


def _threshold_event(eps: float, terminal: bool) -> EventSpec:
    return EventSpec(lambda s, y, _e=eps: y[0] - _e, Direction.FALLING, terminal, 1e-14)


def detect_singularity(params: FamilyParams, config: Optional[IntegratorConfig] = None,
                       horizon: float = DEFAULT_HORIZON,
                       eps: tuple = DETECTION_EPS) -> ClassificationVerdict:
    """Numerical verdict by integration in ``s`` (Emden) and ``t`` (direct).

    The Emden run records when ``a`` crosses each threshold in ``eps``
    (largest first, the last one terminal) and the crossing times are
    extrapolated to ``a = 0``. The direct run, guarded on ``|c|`` only,
    must diverge at ``s*/3``; its end time is reported in ``detail``.

    Raises :class:`NoSingularityFound` when no touch-down occurs before
    ``horizon``.
    """
    config = config or DETECTION_CONFIG
    eps = tuple(sorted(eps, reverse=True))
    events = tuple(_threshold_event(e, i == len(eps) - 1) for i, e in enumerate(eps))
    emden = integrate_emden(params.a0, params.a1, params.xi, horizon, config, events)
    # b, b' and R are driven by (c, w) but never feed back; only (c, w)
    # steer the step size.
    direct_cfg = dataclasses.replace(config, guard_indices=(0,), error_indices=(0, 1))

    if emden.termination is Termination.REACHED_T_END:
        direct = integrate_direct(params, horizon / 3.0, direct_cfg)
        if direct.termination is Termination.REACHED_T_END:
            raise NoSingularityFound(
                f"no touch-down before s={horizon}; a(s)={emden.y_final[0]:.6g}, "
                f"max|c|={abs(direct.states[:, 0]).max():.6g}", emden)
        # The direct system diverged although a stayed positive.
        s_star = 3.0 * direct.t_final
        note = f"direct system {direct.termination.value} at t={direct.t_final:.12g} only"
    else:
        if emden.termination is Termination.EVENT:
            crossings = {h.index: h.time for h in emden.events}
            s_vals = [crossings[i] for i in range(len(eps)) if i in crossings]
            e_vals = list(eps[: len(s_vals)])
            s_star = _richardson_to_zero(e_vals, s_vals)
            note = "threshold crossings " + ", ".join(
                f"{e:g}@{s:.12g}" for e, s in zip(e_vals, s_vals))
        else:
            # Stopped short of the thresholds: extrapolate linearly from the end state.
            a_end, da_end = emden.y_final
            s_star = emden.t_final + a_end / abs(da_end) if da_end < 0 else emden.t_final
            note = f"{emden.termination.value} before thresholds; linear extrapolation"
        direct = integrate_direct(params, s_star / 3.0 + max(1.0, 0.1 * s_star), direct_cfg)
        note += f"; direct system {direct.termination.value} at t={direct.t_final:.12g}"

    if params.xi < 0:
        case = Case.XI_NEGATIVE_TOUCHDOWN
    elif params.xi == 0:
        case = Case.XI_ZERO_LINEAR_BLOWUP
    else:
        case = Case.XI_POSITIVE_TOUCHDOWN
    return ClassificationVerdict(case, s_star, s_star / 3.0, VerdictMethod.EVENT_DETECTED, note)


def _richardson_to_zero(eps_vals, s_vals) -> float:
    """Extrapolate ``s(eps)`` to ``eps = 0`` from the two smallest thresholds.

    Near touch-down ``a`` is asymptotically linear in ``s``, so ``s(eps)`` is
    linear in ``eps`` up to higher-order terms.
    """
    if len(s_vals) == 1:
        return s_vals[0]
    e1, e2 = eps_vals[-2], eps_vals[-1]
    s1, s2 = s_vals[-2], s_vals[-1]
    return s2 + (s2 - s1) * e2 / (e1 - e2)


def detected_verdict(params: FamilyParams, config: Optional[IntegratorConfig] = None,
                     horizon: float = DEFAULT_HORIZON) -> ClassificationVerdict:
    """:func:`detect_singularity` with ``NoSingularityFound`` mapped to GLOBAL."""
    try:
        return detect_singularity(params, config, horizon)
    except NoSingularityFound as exc:
        return ClassificationVerdict(Case.GLOBAL, method=VerdictMethod.EVENT_DETECTED,
                                     detail=str(exc))


def gradient_blowup_norm(trajectory: FamilyTrajectory, t: float) -> float:
    """``|u_x| = |c(t)|``, uniform in space."""
    return float(abs(trajectory.state_at(t).c))


def direct_divergence_time(params: FamilyParams, t_end: float,
                           config: Optional[IntegratorConfig] = None) -> tuple[float, Termination]:
    """End time and reason of a ``|c|``-guarded direct run."""
    cfg = dataclasses.replace(config or IntegratorConfig(), guard_indices=(0,))
    traj = integrate_direct(params, t_end, cfg)
    return traj.t_final, traj.termination


def verdicts_agree(a: ClassificationVerdict, b: ClassificationVerdict, rel: float = 1e-5) -> bool:
    if a.case is not b.case:
        return False
    if a.s_star is None or b.s_star is None:
        return a.s_star is None and b.s_star is None
    return abs(a.s_star - b.s_star) <= rel * (1.0 + abs(a.s_star))

"""Line-oriented ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Unknown keys are errors.
Sweep axes are given as ``sweep.<name> = v1, v2, ...`` and per-point
actions as ``sweep.actions = classify, verify``.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Optional

from .dynamics import FamilyParams
from .errors import CapExceeded, InvalidParameters, ParseError
from .fields import Geometry
from .ode_engine import IntegratorConfig, Method

PARAM_KEYS = ("sigma", "a0", "a1", "xi", "b0", "b1", "alpha_sq")
SWEEP_AXES = PARAM_KEYS
SWEEP_ACTIONS = ("classify", "verify")
FORMATS = ("csv", "json", "gnuplot")
OUTPUT_ENV = "CH2_OUTPUT_DIR"
DEFAULT_CAP = 100_000


@dataclass(frozen=True)
class GridSpec:
    x_min: float = -2.0
    x_max: float = 2.0
    x_count: int = 41
    t_count: int = 11
    geometry: Geometry = Geometry.LINE


@dataclass(frozen=True)
class VerifySpec:
    tol: float = 1e-6
    dt_fd: float = 1e-4
    n_t: int = 21
    n_x: int = 21


@dataclass(frozen=True)
class SweepSpec:
    axes: tuple = ()  # ((name, (values...)), ...)
    actions: tuple = ("classify",)
    cap: int = DEFAULT_CAP

    @property
    def n_points(self) -> int:
        n = 1
        for _, values in self.axes:
            n *= len(values)
        return n


@dataclass(frozen=True)
class RunConfig:
    params: FamilyParams = field(default_factory=FamilyParams)
    t_end: float = 1.0
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    verify: VerifySpec = field(default_factory=VerifySpec)
    output_dir: str = "."
    formats: tuple = ("csv",)
    sweep: SweepSpec = field(default_factory=SweepSpec)


# key -> (section, attribute, converter, default, help)
def _int_exact(text):
    value = float(text)
    if value != int(value):
        raise ValueError(f"{text!r} is not an integer")
    return int(value)


def _csv_list(text):
    return tuple(item.strip() for item in text.split(",") if item.strip())


_KEYS = {
    "sigma": ("params", "sigma", _int_exact, 1, "gravity orientation, 1 or -1"),
    "a0": ("params", "a0", float, 1.0, "initial scale factor a(0) > 0"),
    "a1": ("params", "a1", float, 0.0, "initial scale-factor slope a'(0), per unit s = 3t"),
    "xi": ("params", "xi", float, 0.0, "Emden constant"),
    "b0": ("params", "b0", float, 0.0, "velocity offset b(0)"),
    "b1": ("params", "b1", float, 0.0, "offset rate b'(0)"),
    "alpha_sq": ("params", "alpha_sq", float, 1.0, "density squared at the origin at t = 0"),
    "t_end": (None, "t_end", float, 1.0, "physical end time"),
    "method": ("integrator", "method", str, "ADAPTIVE_EMBEDDED", "RK4_FIXED or ADAPTIVE_EMBEDDED"),
    "h_init": ("integrator", "h_init", float, 1e-3, "initial (or fixed) step"),
    "h_min": ("integrator", "h_min", float, 1e-14, "smallest adaptive step"),
    "h_max": ("integrator", "h_max", float, 2e-3, "largest step"),
    "rel_tol": ("integrator", "rel_tol", float, 1e-10, "relative tolerance"),
    "abs_tol": ("integrator", "abs_tol", float, 1e-10, "absolute tolerance"),
    "max_steps": ("integrator", "max_steps", _int_exact, 1_000_000, "step limit"),
    "blowup_guard": ("integrator", "blowup_guard", float, 1e12, "abort when |state| exceeds this"),
    "x_min": ("grid", "x_min", float, -2.0, "field window lower x"),
    "x_max": ("grid", "x_max", float, 2.0, "field window upper x"),
    "x_count": ("grid", "x_count", _int_exact, 41, "field x samples"),
    "t_count": ("grid", "t_count", _int_exact, 11, "field t samples"),
    "geometry": ("grid", "geometry", str, "LINE", "LINE or RADIAL"),
    "verify_tol": ("verify", "tol", float, 1e-6, "residual pass tolerance"),
    "dt_fd": ("verify", "dt_fd", float, 1e-4, "finite-difference time step"),
    "verify_nt": ("verify", "n_t", _int_exact, 21, "verification time samples"),
    "verify_nx": ("verify", "n_x", _int_exact, 21, "verification x samples per time"),
    "output_dir": (None, "output_dir", str, ".", f"output directory (env {OUTPUT_ENV} overrides)"),
    "formats": (None, "formats", _csv_list, "csv", "subset of csv, json, gnuplot"),
    "sweep.actions": ("sweep", "actions", _csv_list, "classify", "classify and/or verify"),
    "sweep.cap": ("sweep", "cap", _int_exact, DEFAULT_CAP, "maximum number of sweep points"),
}


def describe_keys() -> str:
    lines = []
    for key, (_, _, _, default, text) in _KEYS.items():
        lines.append(f"  {key:<14} {text} (default {default})")
    lines.append("  sweep.<name>   comma-separated values for an axis; name in " + ", ".join(SWEEP_AXES))
    return "\n".join(lines)


def _split_lines(text):
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", number)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError("missing key", number)
        yield number, key, value


def parse_assignments(pairs) -> RunConfig:
    """Build a validated config from ``(line_number, key, value)`` triples."""
    sections: dict = {"params": {}, "integrator": {}, "grid": {}, "verify": {}, "sweep": {}, None: {}}
    axes = {}
    for number, key, value in pairs:
        if key.startswith("sweep.") and key not in _KEYS:
            name = key[len("sweep."):]
            if name not in SWEEP_AXES:
                raise ParseError(f"unknown sweep axis {name!r}", number)
            try:
                axes[name] = tuple((_int_exact if name == "sigma" else float)(v) for v in _csv_list(value))
            except ValueError as exc:
                raise ParseError(f"bad value list for {key}: {exc}", number) from None
            if not axes[name]:
                raise ParseError(f"empty value list for {key}", number)
            continue
        if key not in _KEYS:
            raise ParseError(f"unknown key {key!r}", number)
        section, attr, conv, _, _ = _KEYS[key]
        try:
            sections[section][attr] = conv(value)
        except ValueError as exc:
            raise ParseError(f"bad value for {key}: {exc}", number) from None
    return _build(sections, axes)


def _build(sections, axes) -> RunConfig:
    top = sections[None]
    params = FamilyParams(**sections["params"])
    integrator_kw = dict(sections["integrator"])
    if "method" in integrator_kw:
        try:
            integrator_kw["method"] = Method(integrator_kw["method"].upper())
        except ValueError:
            raise InvalidParameters("method must be RK4_FIXED or ADAPTIVE_EMBEDDED") from None
    integrator = IntegratorConfig(**integrator_kw)

    grid_kw = dict(sections["grid"])
    if "geometry" in grid_kw:
        try:
            grid_kw["geometry"] = Geometry(grid_kw["geometry"].upper())
        except ValueError:
            raise InvalidParameters("geometry must be LINE or RADIAL") from None
    grid = GridSpec(**grid_kw)
    if not grid.x_min < grid.x_max:
        raise InvalidParameters("x_min must be < x_max")
    if grid.x_count < 2 or grid.t_count < 1:
        raise InvalidParameters("x_count must be >= 2 and t_count >= 1")
    if grid.geometry is Geometry.RADIAL and grid.x_min < 0:
        raise InvalidParameters("radial geometry needs x_min >= 0")

    verify = VerifySpec(**sections["verify"])
    if not (verify.tol > 0 and verify.dt_fd > 0):
        raise InvalidParameters("verify_tol and dt_fd must be > 0")

    t_end = top.get("t_end", 1.0)
    if not t_end > 0:
        raise InvalidParameters("t_end must be > 0")
    formats = top.get("formats", ("csv",))
    for f in formats:
        if f not in FORMATS:
            raise InvalidParameters(f"unknown output format {f!r}")

    sweep_kw = dict(sections["sweep"])
    for action in sweep_kw.get("actions", ()):
        if action not in SWEEP_ACTIONS:
            raise InvalidParameters(f"unknown sweep action {action!r}")
    if len(axes) > 3:
        raise InvalidParameters("a sweep has at most 3 axes")
    sweep = SweepSpec(axes=tuple(axes.items()), **sweep_kw)
    if sweep.n_points > sweep.cap:
        raise CapExceeded(f"sweep has {sweep.n_points} points, cap is {sweep.cap}")

    return RunConfig(params=params, t_end=t_end, integrator=integrator, grid=grid,
                     verify=verify, output_dir=top.get("output_dir", "."),
                     formats=tuple(formats), sweep=sweep)


def parse_config(text: str, overrides=(), env: Optional[dict] = None) -> RunConfig:
    """Parse config text, then apply ``key=value`` overrides and the env var."""
    pairs = list(_split_lines(text))
    for item in overrides:
        if "=" not in item:
            raise ParseError(f"override {item!r} is not key=value")
        key, value = (p.strip() for p in item.split("=", 1))
        pairs.append((None, key, value))
    config = parse_assignments(pairs)
    env = os.environ if env is None else env
    if env.get(OUTPUT_ENV):
        config = dataclasses.replace(config, output_dir=env[OUTPUT_ENV])
    return config

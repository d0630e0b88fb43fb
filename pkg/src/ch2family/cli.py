"""``ch2family`` command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical or
verification failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .blowup import classify
from .config import RunConfig, describe_keys, parse_config
from .dynamics import integrate_family
from .errors import CapExceeded, Ch2Error, InvalidParameters, ParseError
from .fields import evaluate_grid
from .verification import convergence_study, interior_points, perturb_coefficient, verify_full

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

TRAJECTORY_HEADER = "t,c,w,b,db,R,a,da,energy"
FIELD_HEADER = "t,x,rho_sq,rho,u"
CONVERGENCE_DTS = (1e-2, 5e-3, 2.5e-3, 1.25e-3)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; 2 is reserved for numerical failures here.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(value) -> str:
    if value is None:
        return ""
    return "%.17g" % value


def _write_text(directory: str, name: str, text: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=False)


def _emit(text: str, out=None) -> None:
    print(text, file=out or sys.stdout)


# --- commands ------------------------------------------------------------

def cmd_classify(config: RunConfig, out=None) -> int:
    verdict = classify(config.params)
    text = _dump(verdict.to_dict())
    _emit(text, out)
    if "json" in config.formats:
        _write_text(config.output_dir, "verdict.json", text + "\n")
    return EXIT_OK


def trajectory_csv(config: RunConfig) -> str:
    traj = integrate_family(config.params, config.t_end, config.integrator)
    table = np.column_stack([traj.times_t, traj.direct, traj.emden, traj.energy])
    lines = [TRAJECTORY_HEADER]
    lines.extend(",".join(fmt(v) for v in row) for row in table)
    lines.append(f"# termination={traj.termination.value}")
    return "\n".join(lines) + "\n"


def cmd_integrate(config: RunConfig, out=None) -> int:
    path = _write_text(config.output_dir, "trajectory.csv", trajectory_csv(config))
    _emit(path, out)
    return EXIT_OK


def _field_grid(config: RunConfig):
    traj = integrate_family(config.params, config.t_end, config.integrator)
    g = config.grid
    t_points = np.linspace(0.0, min(config.t_end, traj.t_final), g.t_count)
    x_points = np.linspace(g.x_min, g.x_max, g.x_count)
    return evaluate_grid(traj, x_points, t_points, g.geometry)


def cmd_field(config: RunConfig, out=None) -> int:
    grid = _field_grid(config)
    rho = grid.rho
    rows = [FIELD_HEADER]
    blocks = []
    for j, t in enumerate(grid.t_points):
        block = [f"# t={fmt(t)}", "# x rho_sq rho u"]
        for i, x in enumerate(grid.x_points):
            vals = (grid.rho_sq[i, j], rho[i, j], grid.u[i, j])
            rows.append(",".join(fmt(v) for v in (t, x, *vals)))
            block.append(" ".join(fmt(v) for v in (x, *vals)))
        blocks.append("\n".join(block))
    _emit(_write_text(config.output_dir, "field.csv", "\n".join(rows) + "\n"), out)
    if "gnuplot" in config.formats:
        # Two blank lines make each time slice a separate gnuplot index.
        _emit(_write_text(config.output_dir, "field.gp", "\n\n\n".join(blocks) + "\n"), out)
    return EXIT_OK


def run_verify(config: RunConfig, convergence: bool = False, corrupt=None) -> dict:
    transform = perturb_coefficient(corrupt[0], corrupt[1]) if corrupt else None
    traj = integrate_family(config.params, config.t_end, config.integrator)
    g, v = config.grid, config.verify
    x_range = (g.x_min, g.x_max)
    report = verify_full(traj, tol=v.tol, dt_fd=v.dt_fd, x_range=x_range, n_t=v.n_t,
                         n_x=v.n_x, geometry=g.geometry, transform=transform)
    result = report.to_dict()
    if convergence:
        margin = CONVERGENCE_DTS[0]
        x, t, _ = interior_points(traj, (margin, traj.t_final - margin), x_range, 5, 5,
                                  g.geometry, margin, transform)
        study = convergence_study(traj, np.column_stack([x, t]), CONVERGENCE_DTS, transform)
        result["convergence_order"] = study.convergence_order
        result["convergence_history"] = study.history
    return result


def cmd_verify(config: RunConfig, convergence: bool = False, corrupt=None,
               out=None) -> int:
    result = run_verify(config, convergence, corrupt)
    text = _dump(result)
    _emit(text, out)
    if "json" in config.formats:
        _write_text(config.output_dir, "verify.json", text + "\n")
    return EXIT_OK if result["passed"] else EXIT_NUMERICAL


def sweep_points(config: RunConfig):
    """Axis names and the lexicographically ordered list of value tuples."""
    names = [name for name, _ in config.sweep.axes]
    values = [sorted(vals) for _, vals in config.sweep.axes]
    return names, list(itertools.product(*values))


def _sweep_row(config: RunConfig, names, point) -> dict:
    params = dataclasses.replace(config.params, **dict(zip(names, point)))
    row = {"point": point}
    if "classify" in config.sweep.actions:
        row["verdict"] = classify(params).to_dict()
    if "verify" in config.sweep.actions:
        try:
            row["verify"] = run_verify(dataclasses.replace(config, params=params))["passed"]
        except Ch2Error:
            row["verify"] = False
    return row


def _sweep_row_star(args):
    return _sweep_row(*args)


def sweep_csv(config: RunConfig, jobs: int = 1) -> str:
    names, points = sweep_points(config)
    if len(points) > config.sweep.cap:
        raise CapExceeded(f"sweep has {len(points)} points, cap is {config.sweep.cap}")
    tasks = [(config, names, p) for p in points]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_row_star, tasks))
    else:
        rows = [_sweep_row_star(t) for t in tasks]

    header = list(names)
    if "classify" in config.sweep.actions:
        header += ["case", "s_star", "t_star", "method"]
    if "verify" in config.sweep.actions:
        header.append("verify")
    lines = [",".join(header)]
    for row in rows:
        cells = [fmt(v) for v in row["point"]]
        if "verdict" in row:
            v = row["verdict"]
            cells += [v["case"], fmt(v["s_star"]), fmt(v["t_star"]), v["method"]]
        if "verify" in row:
            cells.append("pass" if row["verify"] else "fail")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_sweep(config: RunConfig, jobs: int = 1, out=None) -> int:
    text = sweep_csv(config, jobs)
    _emit(_write_text(config.output_dir, "sweep.csv", text), out)
    return EXIT_OK


# --- entry point ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    epilog = "configuration keys (key = value, '#' starts a comment):\n" + describe_keys()
    parser = _Parser(prog="ch2family",
                     description="Linear-velocity solution family: integrate, verify, classify.",
                     epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "classify": "print the blowup/global verdict as JSON",
        "integrate": "write trajectory.csv",
        "field": "write field.csv (and field.gp with formats=gnuplot)",
        "verify": "PDE residual check; exit 2 on failure",
        "sweep": "classify (and optionally verify) a parameter grid into sweep.csv",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text, epilog=epilog,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", metavar="PATH", help="configuration file")
        p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                       dest="overrides", help="override one key (repeatable)")
        if name == "verify":
            p.add_argument("--convergence", action="store_true",
                           help="also fit the residual order in dt_fd")
            # Test-only sensitivity control: perturb one profile coefficient.
            p.add_argument("--corrupt", nargs=2, metavar=("COEF", "DELTA"),
                           help=argparse.SUPPRESS)
        if name == "sweep":
            p.add_argument("--jobs", type=int, default=1, help="worker processes")
    return parser


def _load(args) -> RunConfig:
    text = ""
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    return parse_config(text, args.overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load(args)
        if args.command == "classify":
            return cmd_classify(config)
        if args.command == "integrate":
            return cmd_integrate(config)
        if args.command == "field":
            return cmd_field(config)
        if args.command == "verify":
            corrupt = None
            if args.corrupt:
                try:
                    corrupt = (args.corrupt[0], float(args.corrupt[1]))
                except ValueError:
                    raise UsageError(f"--corrupt delta must be a number, got {args.corrupt[1]!r}")
            return cmd_verify(config, args.convergence, corrupt)
        if args.command == "sweep":
            if args.jobs < 1:
                raise UsageError("--jobs must be >= 1")
            return cmd_sweep(config, args.jobs)
    except (UsageError, ParseError, InvalidParameters, CapExceeded) as exc:
        code = getattr(exc, "code", "USAGE_ERROR")
        print(f"ch2family: {code}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Ch2Error as exc:
        print(f"ch2family: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"ch2family: IO_ERROR: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ch2family import cli
from ch2family.config import RunConfig, parse_config
from ch2family.errors import CapExceeded, InvalidParameters, ParseError
from ch2family.fields import Geometry
from ch2family.ode_engine import Method

COUPLED = ["a1=0.3", "xi=0.5", "b0=0.2", "b1=-0.1", "alpha_sq=2"]
DRIFT = ["b1=1", "alpha_sq=4", "t_end=2"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def sets(pairs):
    out = []
    for p in pairs:
        out += ["--set", p]
    return out


@pytest.fixture
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv("CH2_OUTPUT_DIR", str(tmp_path))
    return tmp_path


# --- config parsing ------------------------------------------------------

def test_parse_full_example():
    cfg = parse_config("sigma = 1\na0 = 1\na1 = 0\nxi = 1\nb0 = 0\nb1 = 0\nalpha_sq = 1\nt_end = 1",
                       env={})
    assert cfg.params.xi == 1.0 and cfg.t_end == 1.0
    assert cfg.integrator.rel_tol == 1e-10 and cfg.grid.geometry is Geometry.LINE
    assert cfg == RunConfig(params=cfg.params)


def test_comments_blank_lines_and_options():
    text = """
    # a comment
    xi = -1      # trailing comment
    method = rk4_fixed
    h_init = 0.01
    h_max = 0.01
    geometry = radial
    x_min = 0
    formats = csv, gnuplot
    """
    cfg = parse_config(text, env={})
    assert cfg.params.xi == -1.0
    assert cfg.integrator.method is Method.RK4_FIXED
    assert cfg.grid.geometry is Geometry.RADIAL
    assert cfg.formats == ("csv", "gnuplot")


@pytest.mark.parametrize("text, message", [
    ("sigma = 0", "sigma must be 1 or -1"),
    ("a0 = -2", "a0 must be > 0"),
    ("t_end = 0", "t_end must be > 0"),
    ("formats = pdf", "unknown output format"),
    ("geometry = spherical", "geometry must be"),
    ("x_min = 1\nx_max = 0", "x_min must be < x_max"),
])
def test_validation_errors(text, message):
    with pytest.raises(InvalidParameters, match=message):
        parse_config(text, env={})


@pytest.mark.parametrize("text, line", [
    ("a0 = 1\nbogus = 3", 2),
    ("a0 = 1\n\nxi", 3),
    ("xi = one", 1),
    ("sweep.nope = 1,2", 1),
    ("sigma = 1.5", 1),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as info:
        parse_config(text, env={})
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


def test_overrides_and_env():
    cfg = parse_config("xi = 1\noutput_dir = here", ["xi=2"], env={"CH2_OUTPUT_DIR": "/tmp/x"})
    assert cfg.params.xi == 2.0 and cfg.output_dir == "/tmp/x"
    assert parse_config("output_dir = here", env={}).output_dir == "here"


def test_sweep_cap():
    with pytest.raises(CapExceeded):
        parse_config("sweep.a1 = 1,2,3\nsweep.xi = 1,2\nsweep.cap = 5", env={})
    cfg = parse_config("sweep.a1 = 1,2,3\nsweep.xi = 1,2", env={})
    assert cfg.sweep.n_points == 6 and cfg.sweep.cap == 100_000


def test_help_documents_defaults(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["classify", "--help"])
    assert info.value.code == 0
    out = capsys.readouterr().out
    for key in ("alpha_sq", "rel_tol", "verify_tol", "sweep.cap", "default 1e-10"):
        assert key in out


# --- classify ------------------------------------------------------------

def test_classify_examples(capsys, outdir):
    code, out, _ = run(capsys, "classify", *sets(["a1=-1"]))
    assert code == 0
    d = json.loads(out)
    assert d["case"] == "XI_ZERO_LINEAR_BLOWUP" and d["s_star"] == 1.0
    assert d["t_star"] == pytest.approx(1 / 3, abs=1e-15)
    assert json.loads(run(capsys, "classify", "--set", "xi=1")[1])["case"] == "GLOBAL"
    d = json.loads(run(capsys, "classify", "--set", "xi=-1")[1])
    assert d["case"] == "XI_NEGATIVE_TOUCHDOWN"
    assert d["s_star"] == pytest.approx(math.sqrt(3) * math.pi / 4, abs=1e-7)


def test_exit_codes(capsys, tmp_path, outdir):
    assert run(capsys, "classify", "--set", "sigma=0")[0] == 1
    assert run(capsys, "classify", "--set", "nope=1")[0] == 1
    assert run(capsys, "classify", "--config", str(tmp_path / "missing.cfg"))[0] == 3
    with pytest.raises(SystemExit) as info:
        cli.main(["classify", "--no-such-flag"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        cli.main([])
    assert info.value.code == 1


def test_io_error_exit_code(capsys, tmp_path, monkeypatch):
    blocker = tmp_path / "file"
    blocker.write_text("")
    monkeypatch.setenv("CH2_OUTPUT_DIR", str(blocker / "sub"))
    assert run(capsys, "integrate")[0] == 3


# --- integrate -----------------------------------------------------------

def read_trajectory(path):
    lines = path.read_text().splitlines()
    assert lines[0] == cli.TRAJECTORY_HEADER
    data = np.loadtxt(path, delimiter=",", skiprows=1, comments="#", ndmin=2)
    return data, lines


def test_integrate_static(capsys, outdir):
    assert run(capsys, "integrate")[0] == 0
    data, lines = read_trajectory(outdir / "trajectory.csv")
    assert np.all(data[:, 1:] == data[0, 1:])
    assert lines[-1] == "# termination=REACHED_T_END"


def test_integrate_drift(capsys, outdir):
    assert run(capsys, "integrate", *sets(DRIFT))[0] == 0
    data, _ = read_trajectory(outdir / "trajectory.csv")
    t, b, R = data[-1, 0], data[-1, 3], data[-1, 5]
    assert t == 2.0 and abs(b - 2.0) <= 1e-8 and abs(R - 8.0) <= 1e-8


def test_integrate_collapse_metadata(capsys, outdir):
    assert run(capsys, "integrate", *sets(["a1=-1", "t_end=1"]))[0] == 0
    data, lines = read_trajectory(outdir / "trajectory.csv")
    assert lines[-1] in ("# termination=STEP_UNDERFLOW", "# termination=BLOWUP_GUARD")
    assert data[-1, 0] < 1 / 3


def test_integrate_round_trip_and_determinism(capsys, outdir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("\n".join(COUPLED) + "\n")
    assert run(capsys, "integrate", "--config", str(cfg))[0] == 0
    first = (outdir / "trajectory.csv").read_bytes()
    data, _ = read_trajectory(outdir / "trajectory.csv")
    from ch2family.dynamics import integrate_family
    traj = integrate_family(parse_config(cfg.read_text(), env={}).params, 1.0)
    table = np.column_stack([traj.times_t, traj.direct, traj.emden, traj.energy])
    assert np.array_equal(data, table)
    assert run(capsys, "integrate", "--config", str(cfg))[0] == 0
    assert (outdir / "trajectory.csv").read_bytes() == first


@settings(max_examples=200, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_seventeen_digits_round_trip(x):
    assert float(cli.fmt(x)) == x


# --- field ---------------------------------------------------------------

def read_field(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def test_field_static(capsys, outdir):
    args = sets(["x_min=-1", "x_max=1", "x_count=3", "t_count=1"])
    assert run(capsys, "field", *args)[0] == 0
    rows = read_field(outdir / "field.csv")
    assert (outdir / "field.csv").read_text().splitlines()[0] == cli.FIELD_HEADER
    assert rows.shape == (3, 5)
    assert np.all(rows[:, 2] == 1.0) and np.all(rows[:, 4] == 0.0)
    assert not (outdir / "field.gp").exists()


def test_field_drift_point_and_gnuplot(capsys, outdir):
    args = sets(DRIFT + ["x_min=0", "x_max=2", "x_count=3", "t_count=3", "formats=csv,gnuplot"])
    assert run(capsys, "field", *args)[0] == 0
    rows = read_field(outdir / "field.csv")
    at = rows[(rows[:, 0] == 1.0) & (rows[:, 1] == 1.0)][0]
    assert at[2] == pytest.approx(3.0, abs=1e-10) and at[4] == pytest.approx(1.0, abs=1e-12)
    blocks = (outdir / "field.gp").read_text().strip().split("\n\n\n")
    assert len(blocks) == 3
    assert all(len([l for l in b.splitlines() if not l.startswith("#")]) == 3 for b in blocks)


def test_field_velocity_linear(capsys, outdir):
    args = sets(["xi=1", "x_min=0.5", "x_max=2", "x_count=4", "t_count=2"])
    assert run(capsys, "field", *args)[0] == 0
    rows = read_field(outdir / "field.csv")
    for t in np.unique(rows[:, 0]):
        sl = rows[rows[:, 0] == t]
        ratio = sl[:, 4] / sl[:, 1]
        assert np.allclose(ratio, ratio[0], rtol=1e-14)


def test_field_radial_rejects_negative_x(capsys, outdir):
    assert run(capsys, "field", *sets(["geometry=RADIAL", "x_min=-1"]))[0] == 1


# --- verify --------------------------------------------------------------

def test_verify_drift(capsys, outdir):
    code, out, _ = run(capsys, "verify", *sets(DRIFT))
    d = json.loads(out)
    assert code == 0 and d["momentum_linf"] <= 1e-8


def test_verify_coupled_and_corrupted(capsys, outdir):
    code, out, _ = run(capsys, "verify", *sets(COUPLED))
    assert code == 0 and json.loads(out)["passed"]
    code, out, _ = run(capsys, "verify", *sets(COUPLED), "--corrupt", "q2", "1e-3")
    d = json.loads(out)
    assert code == 2 and not d["passed"] and d["mass_linf"] > 1e-6


def test_verify_convergence_and_json_file(capsys, outdir):
    code, out, _ = run(capsys, "verify", *sets(["xi=1", "formats=csv,json"]), "--convergence")
    d = json.loads(out)
    assert code == 0
    assert d["convergence_order"] == pytest.approx(2.0, abs=0.2)
    assert json.loads((outdir / "verify.json").read_text()) == d


def test_verify_bad_corrupt_args(capsys, outdir):
    assert run(capsys, "verify", "--corrupt", "q7", "1")[0] == 1
    assert run(capsys, "verify", "--corrupt", "q2", "abc")[0] == 1


# --- sweep ---------------------------------------------------------------

def read_sweep(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return header, [dict(zip(header, l.split(","))) for l in lines[1:]]


def test_sweep_classification_grid(capsys, outdir, tmp_path):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text("a0 = 1\nsweep.a1 = 2, 1, 0, -1, -2\nsweep.xi = -2,-1,0,1,2\n")
    assert run(capsys, "sweep", "--config", str(cfg))[0] == 0
    header, rows = read_sweep(outdir / "sweep.csv")
    assert header[:2] == ["a1", "xi"] and len(rows) == 25
    keys = [(float(r["a1"]), float(r["xi"])) for r in rows]
    assert keys == sorted(keys)
    for r in rows:
        a1, xi = float(r["a1"]), float(r["xi"])
        if xi < 0:
            assert r["case"] == "XI_NEGATIVE_TOUCHDOWN"
        if xi == 0:
            assert r["case"] == ("XI_ZERO_LINEAR_BLOWUP" if a1 < 0 else "GLOBAL")
    # Same bytes with worker processes.
    serial = (outdir / "sweep.csv").read_bytes()
    assert run(capsys, "sweep", "--config", str(cfg), "--jobs", "2")[0] == 0
    assert (outdir / "sweep.csv").read_bytes() == serial


def test_single_point_sweep_equals_classify(capsys, outdir):
    _, out, _ = run(capsys, "classify", "--set", "xi=-1")
    verdict = json.loads(out)
    assert run(capsys, "sweep", "--set", "xi=-1", "--set", "sweep.xi=-1")[0] == 0
    _, rows = read_sweep(outdir / "sweep.csv")
    assert len(rows) == 1
    assert rows[0]["case"] == verdict["case"]
    assert float(rows[0]["s_star"]) == verdict["s_star"]
    assert float(rows[0]["t_star"]) == verdict["t_star"]


def test_sweep_verify_action(capsys, outdir):
    args = sets(["sweep.xi=0.5,1,2", "sweep.actions=classify,verify"])
    assert run(capsys, "sweep", *args)[0] == 0
    _, rows = read_sweep(outdir / "sweep.csv")
    assert [r["case"] for r in rows] == ["GLOBAL"] * 3
    assert [r["verify"] for r in rows] == ["pass"] * 3


def test_sweep_cap_exit_code(capsys, outdir):
    args = sets(["sweep.a1=1,2,3", "sweep.cap=2"])
    code, _, err = run(capsys, "sweep", *args)
    assert code == 1 and "CAP_EXCEEDED" in err


def test_module_entry_point(tmp_path):
    import subprocess
    import sys
    env = dict(os.environ, CH2_OUTPUT_DIR=str(tmp_path))
    res = subprocess.run([sys.executable, "-m", "ch2family", "classify", "--set", "a1=-1"],
                         capture_output=True, text=True, env=env)
    assert res.returncode == 0
    assert json.loads(res.stdout)["s_star"] == 1.0

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from grushinlab import io
from grushinlab.cli import main, overlay_curves, resolve_config
from grushinlab.semigroup import Gaussian, GridSpec, apply_semigroup, sample_function

SMALL = ["grid.nx=65", "grid.ny=64"]


def _run(kind, out, *sets, config=None):
    argv = [kind, "--out", str(out)]
    if config:
        argv += ["--config", str(config)]
    for s in sets:
        argv += ["--set", s]
    return main(argv)


def _summary(out):
    return json.loads((out / "summary.json").read_text())


def test_config_overrides_and_fractions(tmp_path):
    toml = tmp_path / "c.toml"
    toml.write_text('[params]\np2 = "7/3"\n[grid]\nnx = 65\n')
    cfg = resolve_config(str(toml), ["params.p1=4", "solver.scheme='predictorCorrector'"])
    assert cfg["params"]["p1"] == 4
    assert cfg["params"]["p2"] == "7/3"
    assert cfg["grid"]["nx"] == 65 and cfg["grid"]["ny"] == 128
    assert cfg["solver"]["scheme"] == "predictorCorrector"


def test_exponents(tmp_path, capsys):
    code = _run("exponents", tmp_path, "params.p2='7/3'", "assert.expect_case='GlobalCaseI'")
    assert code == 0
    s = _summary(tmp_path)
    assert s["results"]["exponents"]["p1_star"] == pytest.approx(2.5, abs=1e-12)
    assert s["results"]["verdict"]["case_tag"] == "GlobalCaseI"
    assert json.loads(capsys.readouterr().out)["passed"]


def test_failed_assertion_exits_one(tmp_path):
    assert _run("exponents", tmp_path, "assert.expect_case='GlobalCaseV'") == 1


def test_kernel_check(tmp_path):
    assert _run("kernel-check", tmp_path, "kernel.t=0.5", "kernel.n_samples=20") == 0
    rows = io.read_csv(tmp_path / "kernel_check.csv")
    assert abs(float(rows[0]["normalization"]) - 1) < 1e-3


def test_decay_fit(tmp_path):
    assert _run("decay-fit", tmp_path) == 0
    assert (tmp_path / "decay_1_inf.csv").exists()
    fits = _summary(tmp_path)["results"]["fits"]
    assert fits[0]["slope"] == pytest.approx(-1.5, abs=0.08)


def test_linear_solve_matches_semigroup(tmp_path):
    code = _run("solve", tmp_path, *SMALL, "params.coeff1=0", "params.coeff2=0",
                "time.steps=32", "profile.amplitude=1.0")
    assert code == 0
    u = io.read_grid_function(tmp_path / "final_state.bin")
    u0 = sample_function(GridSpec(8, 8, 65, 64), Gaussian(1.0))
    assert np.abs(u.values - apply_semigroup(u0, 32 / 256).values).max() < 1e-10
    rows = io.read_csv(tmp_path / "trace.csv")
    assert rows[-1]["status"] == "completed"


def test_solve_is_byte_deterministic(tmp_path):
    sets = (*SMALL, "time.steps=16")
    _run("solve", tmp_path / "a", *sets)
    _run("solve", tmp_path / "b", *sets)
    for name in ("summary.json", "trace.csv", "final_state.bin"):
        a = (tmp_path / "a" / name).read_bytes()
        b = (tmp_path / "b" / name).read_bytes()
        if name == "summary.json":
            a, b = a.replace(b"/a", b""), b.replace(b"/b", b"")
        assert a == b


def test_picard(tmp_path):
    assert _run("picard", tmp_path, *SMALL, "picard.t_start=0.25") == 0
    s = _summary(tmp_path)
    assert s["assertions"]["contraction"]["passed"]
    assert s["assertions"]["picard_matches_solve"]["passed"]


def test_compare(tmp_path):
    assert _run("compare", tmp_path, *SMALL, "time.steps=32", "profile.amplitude=0.4") == 0
    rep = json.loads((tmp_path / "ordering.json").read_text())
    assert rep["passed"]


def test_compare_bad_data_is_config_error(tmp_path, capsys):
    code = _run("compare", tmp_path, *SMALL, "time.steps=8", "compare.lower_scale=2")
    assert code == 2
    err = json.loads(capsys.readouterr().out)["error"]
    assert err["type"] == "PreconditionError"
    assert (tmp_path / "error.json").exists()


def test_invalid_config_exit_two(tmp_path):
    assert _run("solve", tmp_path, "params.gamma=1.5") == 2
    assert _run("solve", tmp_path, "solver.scheme='rk4'") == 2
    assert _run("solve", tmp_path, "nonsense") == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("[params\n")
    assert _run("solve", tmp_path, config=bad) == 2


def test_nan_abort_exit_three(tmp_path):
    code = _run("solve", tmp_path, *SMALL, "profile.amplitude=1e100", "params.p2=4",
                "params.coeff1=0", "solver.blowup_threshold=1e300", "time.dt=0.1", "time.steps=5")
    assert code == 3
    assert _summary(tmp_path)["results"]["status"] == "nan_abort"


def test_phase_scan_and_export(tmp_path):
    out = tmp_path / "scan"
    code = _run("phase-scan", out, *SMALL, "time.steps=16", "time.dt=0.015625",
                "scan.p1=[2.0, 3.0]", "scan.p2=[1.5, 3.0]")
    assert code == 0
    rows = io.read_csv(out / "phase_scan.csv")
    assert len(rows) == 4
    assert {r["status"] for r in rows} <= {"completed", "blowup_detected", "nan_abort", "inconclusive"}
    assert main(["export", str(out / "phase_scan.csv"), str(out / "phase_overlay.csv"),
                 "--out", str(tmp_path / "plots")]) == 0
    written = sorted(p.name for p in (tmp_path / "plots").iterdir())
    assert "phase_scan.dat" in written
    assert "phase_overlay_p2_tilde.dat" in written
    first = (tmp_path / "plots" / "phase_scan.dat").read_text().splitlines()
    assert first[0].startswith("#")
    assert len(first) == 5


def test_phase_scan_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("GRUSHINLAB_THREADS", "2")
    code = _run("phase-scan", tmp_path, *SMALL, "time.steps=8", "time.dt=0.015625",
                "scan.p1=[2.0, 3.0]", "scan.p2=[2.0]")
    assert code == 0
    monkeypatch.setenv("GRUSHINLAB_THREADS", "many")
    assert _run("phase-scan", tmp_path, *SMALL, "time.steps=8", "scan.p1=[2.0]", "scan.p2=[2.0]") == 2


def test_export_missing_file_exit_two(tmp_path):
    assert main(["export", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2


def test_overlay_passes_through_critical_point():
    rows = overlay_curves(0.5, (2.0, 4.0), (1.5, 3.0))
    tilde = [(p1, p2) for name, p1, p2 in rows if name == "p2_tilde"]
    p1s = np.array([r[0] for r in tilde])
    p2s = np.array([r[1] for r in tilde])
    assert np.interp(3.0, p1s, p2s) == pytest.approx(7 / 3, abs=1e-12)
    names = {r[0] for r in rows}
    assert names == {"p1_star", "p2_star", "p2_star_star", "p2_tilde"}
    assert all(math.isfinite(r[2]) for r in rows)


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "grushinlab.cli", "exponents", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["kind"] == "exponents"

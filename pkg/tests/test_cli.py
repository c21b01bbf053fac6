import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from hessquot import cli

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"
BOX = str(PROBLEMS / "box_manufactured.json")
TORUS = str(PROBLEMS / "torus_identity.json")


def run(tmp_path, *argv):
    return cli.main(["--out", str(tmp_path), *argv])


def only_run_dir(tmp_path, prefix):
    dirs = [d for d in tmp_path.iterdir() if d.name.startswith(prefix)]
    assert len(dirs) == 1
    return dirs[0]


@pytest.fixture(scope="module")
def box_state(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    assert cli.main(["--out", str(out), "--run-id", "box", "solve", BOX, "--resolution", "9"]) == cli.EXIT_OK
    return out / "box"


def test_validate_writes_manifest(tmp_path, capsys):
    assert run(tmp_path, "validate", BOX, "--resolution", "7") == cli.EXIT_OK
    assert "PASS  subsolution" in capsys.readouterr().out
    d = only_run_dir(tmp_path, "validate-")
    man = json.loads((d / "manifest.json").read_text())
    assert man["command"] == "validate"
    assert man["problem_hash"] == cli.file_hash(BOX)
    assert man["summary"]["passed"] is True
    assert man["backend"] in ("python", "cython")
    rep = json.loads((d / "report.json").read_text())
    assert set(rep["checks"]) == {"admissible", "subsolution", "cone"}


def test_validate_fails_on_inadmissible_subsolution(tmp_path):
    doc = json.loads(Path(BOX).read_text())
    concave = {"kind": "radial", "coeffs": [0, -1]}
    doc.update(phi=concave, usub=concave, psi=1.0)
    doc.pop("exact")
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    assert run(tmp_path, "validate", str(p), "--resolution", "5") == cli.EXIT_FAIL
    assert run(tmp_path, "solve", str(p), "--resolution", "5") == cli.EXIT_FAIL


def test_solve_outputs(box_state):
    for name in ("solution.bin", "solution.json", "log.csv", "report.json", "manifest.json"):
        assert (box_state / name).exists(), name
    meta = json.loads((box_state / "solution.json").read_text())
    assert meta["resolution"] == 9 and Path(meta["problem"]).is_absolute()
    rows = list(csv.DictReader(open(box_state / "log.csv")))
    assert float(rows[-1]["t"]) == 1.0
    rep = json.loads((box_state / "report.json").read_text())
    assert rep["solve"]["converged"]


def test_solve_is_deterministic_and_reuses_run_dir(tmp_path):
    args = ("solve", BOX, "--resolution", "5", "--alpha", "2")
    assert run(tmp_path, *args) == cli.EXIT_OK
    d = only_run_dir(tmp_path, "solve-")
    first = (d / "solution.bin").read_bytes()
    assert run(tmp_path, *args) == cli.EXIT_OK
    assert only_run_dir(tmp_path, "solve-") == d
    assert (d / "solution.bin").read_bytes() == first


def test_solver_failure_exit_code(tmp_path):
    assert run(tmp_path, "solve", BOX, "--resolution", "5", "--max-newton", "0") == cli.EXIT_SOLVER
    d = only_run_dir(tmp_path, "solve-")
    rep = json.loads((d / "report.json").read_text())
    assert rep["type"] == "NonconvergenceError"
    assert (d / "log.csv").exists()


def test_verify_glz_and_block(tmp_path, capsys):
    assert run(tmp_path, "verify", "glz", "--trials", "300") == cli.EXIT_OK
    assert run(tmp_path, "verify", "block-lemma", "--trials", "500", "--seed", "7") == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "PASS  verify glz" in out and "PASS  verify block-lemma" in out
    runs = sorted(tmp_path.glob("verify-*"))
    assert len(runs) == 2
    assert all(json.loads((d / "manifest.json").read_text())["command"] == "verify" for d in runs)


def test_verify_state_suites(tmp_path, box_state):
    for suite in ("key-lemma", "barrier", "m0"):
        assert run(tmp_path, "verify", suite, "--state", str(box_state)) == cli.EXIT_OK, suite


def test_verify_needs_state(tmp_path):
    assert run(tmp_path, "verify", "barrier") == cli.EXIT_IO
    assert run(tmp_path, "verify", "scalings") == cli.EXIT_IO


def test_torus_state_unsupported_suites(tmp_path):
    assert run(tmp_path, "--run-id", "t", "solve", TORUS, "--resolution", "5") == cli.EXIT_OK
    assert run(tmp_path, "verify", "barrier", "--state", str(tmp_path / "t")) == cli.EXIT_IO
    assert run(tmp_path, "verify", "m0", "--state", str(tmp_path / "t")) == cli.EXIT_IO
    # at u = usub the key lemma cannot find theta > 0
    assert run(tmp_path, "verify", "key-lemma", "--state", str(tmp_path / "t")) == cli.EXIT_FAIL


def test_global_flags_after_subcommand(tmp_path):
    assert cli.main(["verify", "glz", "--trials", "150", "--out", str(tmp_path), "--run-id", "g", "--threads", "2"]) == 0
    assert (tmp_path / "g" / "report.json").exists()


def test_io_and_usage_errors(tmp_path, capsys):
    assert run(tmp_path, "solve", str(tmp_path / "missing.json")) == cli.EXIT_IO
    bad = tmp_path / "bad.json"
    bad.write_text("{ nope")
    assert run(tmp_path, "validate", str(bad)) == cli.EXIT_IO
    assert "line 1" in capsys.readouterr().err
    with pytest.raises(SystemExit) as info:
        run(tmp_path, "verify", "nonsense")
    assert info.value.code == cli.EXIT_IO
    with pytest.raises(SystemExit) as info:
        run(tmp_path, "solve", BOX, "--resolution", "seven")
    assert info.value.code == cli.EXIT_IO


def test_study_writes_orders(tmp_path):
    fam = tmp_path / "study.json"
    fam.write_text(json.dumps({"problem": str(PROBLEMS / "box_sine.json"), "resolutions": [5, 9], "alphas": [1]}))
    assert run(tmp_path, "--run-id", "s", "study", str(fam)) == cli.EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "s" / "study.csv")))
    assert [int(r["resolution"]) for r in rows] == [5, 9]
    assert rows[0]["order"] == "" and float(rows[1]["order"]) > 1.0


def test_measured_order():
    assert cli.measured_order(4e-2, 1e-2, 0.2, 0.1) == pytest.approx(2.0)
    assert cli.measured_order(0.0, 1e-2, 0.2, 0.1) is None


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "hessquot", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "hessquot" in out.stdout

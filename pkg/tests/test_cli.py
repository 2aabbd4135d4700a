import csv
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from twistrmt.cli import main
from twistrmt.dataio import read_retained_dump, read_sample_dump

SVG = "{http://www.w3.org/2000/svg}"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def summary_of(out):
    return json.loads(out.strip().splitlines()[-1])


def svg_classes(path):
    root = ET.parse(path).getroot()
    return {el.get("class") for el in root.iter() if el.get("class")}


# --- sample ---------------------------------------------------------------


def test_sample_haar_retention(tmp_path, capsys):
    code, out, _ = run(capsys, "sample", "--haar", "--n", 12, "--count", 100_000, "--seed", 7, "--out", tmp_path)
    assert code == 0
    s = summary_of(out)
    assert s["retention_rate"] == 1.0 and s["count"] == 100_000
    assert json.loads((tmp_path / "sample.json").read_text()) == s
    assert len(read_sample_dump(tmp_path / "sample.csv")) == 100_000


def test_sample_excised_dump_above_threshold(tmp_path, capsys):
    code, out, _ = run(capsys, "sample", "--excised", "--threshold", 0.0048, "--n", 12, "--count", 20_000,
                       "--seed", 7, "--out", tmp_path)
    assert code == 0
    batch = read_sample_dump(tmp_path / "sample.csv")
    assert np.all(batch.values >= 0.0048)
    v, a, m = read_retained_dump(tmp_path / "retained.csv")
    assert np.all(v >= 0.0048) and np.all(m == 1)
    assert summary_of(out)["retention_rate"] < 1.0


def test_sample_deterministic_and_replay(tmp_path, capsys):
    argv = ["sample", "--spec", "two_param:0.005,0.02", "--n", 6, "--count", 3000, "--seed", 11]
    assert run(capsys, *argv, "--out", tmp_path / "a")[0] == 0
    assert run(capsys, *argv, "--out", tmp_path / "b")[0] == 0
    for name in ("sample.csv", "retained.csv", "sample.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = tmp_path / "a" / "sample.manifest.json"
    m = json.loads(manifest.read_text())
    assert "--out" not in m["argv"] and m["config"]["seed"] == 11 and set(m["outputs"]) >= {"sample.csv"}
    code, out, _ = run(capsys, "replay", manifest, "--out", tmp_path / "c")
    assert code == 0 and json.loads(out.strip().splitlines()[-1])["identical"] is True


def test_sample_parallel_workers_reproducible(tmp_path, capsys):
    argv = ["sample", "--haar", "--n", 4, "--count", 2000, "--seed", 3, "--workers", 2]
    run(capsys, *argv, "--out", tmp_path / "a")
    run(capsys, *argv, "--out", tmp_path / "b")
    assert (tmp_path / "a" / "sample.csv").read_bytes() == (tmp_path / "b" / "sample.csv").read_bytes()


def test_tampered_manifest_fails_replay(tmp_path, capsys):
    run(capsys, "sample", "--haar", "--n", 3, "--count", 100, "--out", tmp_path / "a")
    manifest = tmp_path / "a" / "sample.manifest.json"
    m = json.loads(manifest.read_text())
    m["outputs"]["sample.csv"] = "0" * 64
    manifest.write_text(json.dumps(m))
    code, _, err = run(capsys, "replay", manifest, "--out", tmp_path / "b")
    assert code == 4 and "sample.csv" in err


def test_output_dir_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("TWISTRMT_OUTPUT_DIR", str(tmp_path / "env"))
    assert run(capsys, "sample", "--n", 2, "--count", 10)[0] == 0
    assert (tmp_path / "env" / "sample.csv").exists()
    assert (tmp_path / "env" / "sample.manifest.json").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["sample", "--excised", "--n", 4],
        ["sample", "--inverse-cubic", "--A", "1", "--n", 4],
        ["sample", "--spec", "wobbly:1", "--n", 4],
        ["sample", "--spec", "excised:-1", "--n", 4],
        ["sample", "--haar"],
        ["sample", "--haar", "--n", 4, "--count", 0],
        ["sweep", "--kind", "cutoff"],
        ["nonsense"],
    ],
)
def test_usage_errors_exit_2(tmp_path, capsys, argv):
    assert run(capsys, *argv, "--out", tmp_path)[0] == 2


def test_dimension_from_conductor(tmp_path, capsys):
    code, out, _ = run(capsys, "sample", "--conductor", 11, "--x", 400000, "--count", 10, "--out", tmp_path)
    assert code == 0 and summary_of(out)["spec"]["half_dim"] == 12


# --- density and calibrate ------------------------------------------------


def test_density_command(tmp_path, capsys):
    code, out, _ = run(capsys, "density", "--n", 3, "--points", 300, "--out", tmp_path)
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "density.csv")))
    assert rows[0] == ["y", "pdf", "cdf"] and len(rows) == 301
    assert float(rows[-1][2]) == pytest.approx(1.0, abs=1e-6)
    ET.parse(tmp_path / "density.svg")


def test_calibrate_delta(tmp_path, capsys):
    code, out, _ = run(capsys, "calibrate", "--constant", 0.2834620, "--out", tmp_path)
    assert code == 0
    assert summary_of(out)["delta"] == pytest.approx(0.185116, abs=1e-6)


def test_calibrate_a1_plug_in(tmp_path, capsys):
    code, out, _ = run(capsys, "calibrate", "--s-l", 0.5, "--s-h", 0.5, "--kappa", 1, "--x", 1, "--out", tmp_path)
    assert code == 0
    rep = json.loads((tmp_path / "calibrate.json").read_text())
    assert rep["A1"] == pytest.approx(16 / 15, rel=1e-12)
    assert rep["implied_S_L"] == pytest.approx(0.5)
    assert rep["inputs"]["s_l"] == 0.5 and rep["inputs"]["kappa"] == 1.0


def test_calibrate_curve_report(tmp_path, capsys):
    code, out, _ = run(capsys, "calibrate", "--bundled", "E11.a3", "--kappa", 6.4, "--x", 400000,
                       "--prime-bound", 10000, "--out", tmp_path)
    assert code == 0
    rep = summary_of(out)
    assert rep["prime_bound"] == 10000 and 0 <= rep["tail_estimate"] < 1e-2
    assert rep["a_half"] == pytest.approx(0.7327, abs=2e-3)
    assert rep["threshold"] == pytest.approx(rep["c"] * np.exp(-rep["half_dim"] / 2), rel=1e-12)


def test_calibrate_missing_kappa_exit_3(tmp_path, capsys):
    code, _, err = run(capsys, "calibrate", "--bundled", "E11.a3", "--x", 400000, "--prime-bound", 1000,
                       "--out", tmp_path)
    assert code == 3 and "kappa" in err


def test_missing_file_exit_3(tmp_path, capsys):
    code, _, _ = run(capsys, "compare", "--model", tmp_path / "nope.csv", "--data", tmp_path / "nope.csv",
                     "--out", tmp_path)
    assert code == 3


def test_bad_twist_file_exit_3(tmp_path, capsys):
    run(capsys, "synth", "--bundled", "E11.a3", "--kappa", 2.0, "--x", 200, "--out", tmp_path)
    (tmp_path / "bad.csv").write_text("d,c,central_value,gamma1,vanishing\n8,1,,0.3,false\n")
    code, _, err = run(capsys, "compare", "--model", tmp_path / "bad.csv", "--data", tmp_path / "bad.csv",
                       "--curve", tmp_path / "curve.csv", "--out", tmp_path)
    assert code == 3 and "row 2" in err


# --- compare --------------------------------------------------------------


def test_compare_self_is_zero(tmp_path, capsys):
    run(capsys, "sample", "--n", 4, "--count", 500, "--out", tmp_path)
    code, out, _ = run(capsys, "compare", "--model", tmp_path / "retained.csv", "--data", tmp_path / "sample.csv",
                       "--out", tmp_path)
    assert code == 0 and summary_of(out)["rms"] == 0.0
    with open(tmp_path / "compare.csv") as fh:
        assert next(csv.reader(fh)) == ["bin_left", "bin_right", "cdf_model", "cdf_data"]
    ET.parse(tmp_path / "compare.svg")


def test_compare_disjoint_supports_exit_2(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("lambda1,first_angle,multiplicity\n1.0,0.1,1\n1.0,0.2,1\n")
    b.write_text("lambda1,first_angle,multiplicity\n1.0,2.0,1\n1.0,2.5,1\n")
    assert run(capsys, "compare", "--model", a, "--data", b, "--no-mean-match", "--out", tmp_path)[0] == 2


@pytest.fixture(scope="module")
def synthetic_run(tmp_path_factory):
    """Synthetic E11.a3 family at X = 400000 with zeros from Excised{0.01}, plus Haar/excised model dumps."""
    d = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--bundled", "E11.a3", "--kappa", "6.4", "--x", "400000", "--zeros", "excised:0.01",
                 "--seed", "5", "--out", str(d / "fam")]) == 0
    assert main(["sample", "--haar", "--n", "12", "--count", "100000", "--seed", "6", "--out", str(d / "haar")]) == 0
    assert main(["sample", "--excised", "--threshold", "0.01", "--n", "12", "--count", "100000", "--seed", "6",
                 "--out", str(d / "exc")]) == 0
    return d


@pytest.mark.slow
def test_compare_excised_beats_haar(synthetic_run, capsys):
    d = synthetic_run
    rms = {}
    for name in ("haar", "exc"):
        code, out, _ = run(capsys, "compare", "--model", d / name / "retained.csv", "--data", d / "fam" / "twists.csv",
                           "--curve", d / "fam" / "curve.csv", "--out", d / f"cmp_{name}")
        assert code == 0
        rms[name] = summary_of(out)["rms"]
    assert rms["haar"] > rms["exc"]


@pytest.mark.slow
def test_synth_outputs(synthetic_run):
    s = json.loads((synthetic_run / "fam" / "synth.json").read_text())
    assert s["generating_spec"] == {"variant": "excised", "half_dim": 12, "threshold": 0.01}
    assert s["c_distribution_authoritative"] is False
    assert s["records"] > s["vanishing"] > 0


# --- sweep ----------------------------------------------------------------


@pytest.mark.slow
def test_cutoff_and_two_param_sweeps(synthetic_run, capsys):
    d = synthetic_run
    data = ["--data", d / "fam" / "twists.csv", "--curve", d / "fam" / "curve.csv"]
    code, out, _ = run(capsys, "sweep", "--kind", "cutoff", "--n", 12, "--grid", "0.0025:0.02:8", *data,
                       "--seed", 9, "--baseline-threshold", 0.0048, "--out", d / "cut")
    assert code == 0
    s = summary_of(out)
    assert abs(s["argmin"][0] - 0.01) <= 0.0025 + 1e-12
    classes = svg_classes(d / "cut" / "sweep.svg")
    assert {"baseline", "argmin"} <= classes

    code, out, _ = run(capsys, "sweep", "--kind", "two_param", "--n", 12, "--chi1-grid", "0.0025:0.02:8",
                       "--chi2-grid", "0.0025:0.02:8", *data, "--seed", 9, "--out", d / "two")
    assert code == 0
    assert "diagonal" in svg_classes(d / "two" / "sweep.svg")
    cut = {float(r["param"]): float(r["rms"]) for r in csv.DictReader(open(d / "cut" / "sweep.csv"))}
    diag = {float(r["chi1"]): float(r["rms"]) for r in csv.DictReader(open(d / "two" / "sweep.csv"))
            if r["chi1"] == r["chi2"]}
    assert cut.keys() == diag.keys()
    for k in cut:
        assert diag[k] == pytest.approx(cut[k], abs=1e-12)
    matrix = list(csv.reader(open(d / "two" / "sweep_matrix.csv")))
    assert len(matrix) == 9 and len(matrix[0]) == 9

    code, out, _ = run(capsys, "replay", d / "two" / "sweep.manifest.json", "--out", d / "two_again")
    assert code == 0


@pytest.mark.slow
def test_a_sweep_marks_a1(synthetic_run, capsys):
    d = synthetic_run
    code, out, _ = run(capsys, "sweep", "--kind", "A", "--n", 12, "--grid", "5e-6:6e-5:12", "--kappa", 6.4,
                       "--x", 400000, "--a1", 2.6e-5, "--baseline-threshold", 0.0048,
                       "--data", d / "fam" / "twists.csv", "--curve", d / "fam" / "curve.csv",
                       "--pool-count", 50_000, "--seed", 9, "--out", d / "asweep")
    assert code == 0
    s = summary_of(out)
    assert s["markers"]["A1"] == 2.6e-5 and s["baseline_rms"] is not None
    assert {"baseline", "marker", "argmin"} <= svg_classes(d / "asweep" / "sweep.svg")


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "twistrmt.cli", "sample", "--n", "2", "--count", "5",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout.strip().splitlines()[-1])["count"] == 5
    proc = subprocess.run([sys.executable, "-m", "twistrmt.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "0.1.0"

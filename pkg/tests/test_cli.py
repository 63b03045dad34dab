import json

import pytest

from adhesionlab import cli


def write_config(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def test_validate_all_green(tmp_path, capsys):
    cfg = write_config(tmp_path, "val.json", {
        "kernel": {"d": 1, "beta": 1 / 3, "n": 64},
        "velocity": {"b": {"kind": "zero"}, "g": {"kind": "saturating"}},
        "energy": {"family": "derouler", "c": 0.6}})
    code = cli.main(["validate", "--config", cfg,
                     "--out-dir", str(tmp_path / "out")])
    out = capsys.readouterr().out
    assert code == 0
    assert out.count("[PASS]") == 3
    report = json.loads((tmp_path / "out/validation.json").read_text())
    assert set(report) == {"kernel", "velocity", "energy"}


def test_validate_empty_config_is_an_error(tmp_path, capsys):
    cfg = write_config(tmp_path, "empty.json", {})
    assert cli.main(["validate", "--config", cfg]) == 2
    assert "no validators" in capsys.readouterr().err


def test_missing_config_file(capsys):
    assert cli.main(["validate", "--config", "/does/not/exist.json"]) == 2
    assert "error:" in capsys.readouterr().err


def test_supercritical_beta_needs_override(tmp_path, capsys):
    payload = {"kernel": {"d": 1, "beta": 0.9, "n": 64}}
    cfg = write_config(tmp_path, "super.json", payload)
    assert cli.main(["validate", "--config", cfg]) == 2
    assert cli.main(["validate", "--config", cfg, "--override-beta-bound"]) == 0


def test_simulate_writes_run_artifacts(tmp_path, capsys):
    cfg = write_config(tmp_path, "sim.json", {
        "system": "local", "model": {"family": "zero"}, "n": 200,
        "T": 0.01, "m": 64, "record_times": [0.005],
        "init": {"kind": "uniform"}})
    out = tmp_path / "run"
    code = cli.main(["simulate", "--config", cfg, "--seed", "9",
                     "--out-dir", str(out)])
    assert code == 0
    assert (out / "diagnostics.csv").is_file()
    assert (out / "snapshot_t0.csv").is_file()
    assert (out / "snapshot_t2.csv").is_file()
    run = json.loads((out / "run.json").read_text())
    assert run["seed"] == 9
    assert run["times"] == [0.0, 0.005, 0.01]


def test_solve_pde_nonlocal(tmp_path):
    cfg = write_config(tmp_path, "pde.json", {
        "system": "nonlocal",
        "model": {"b": {"kind": "zero"}, "g": {"kind": "zero"}},
        "m": 64, "T": 0.01, "record_times": [0.005]})
    out = tmp_path / "pde"
    assert cli.main(["solve-pde", "--config", cfg, "--out-dir", str(out)]) == 0
    meta = json.loads((out / "pde.json").read_text())
    assert meta["meta"]["form"] == "nonlocal"
    assert (out / "t2.csv").is_file()


def test_converge_exit_tracks_checks(tmp_path, capsys):
    study = {
        "system": "local", "model": {"family": "derouler", "c": 0.6},
        "ns": [50, 3200], "seeds": [0, 1, 2, 3], "T": 0.02, "m": 128,
        "record_times": [0.01], "init": {"kind": "cosine", "amp": 0.4},
        "out_dir": str(tmp_path / "ignored"), "chunk_seeds": 2}
    cfg = write_config(tmp_path, "study.json", study)
    out = tmp_path / "study-out"
    code = cli.main(["converge", "--config", cfg, "--threads", "2",
                     "--out-dir", str(out)])
    text = capsys.readouterr().out
    assert (out / "study.csv").is_file()
    assert (out / "manifest.json").is_file()
    # wide ladder: certification, monotonicity and the factor-2 drop all hold
    assert code == 0, text
    assert text.count("[PASS]") == 3


def test_moment_bound_command(tmp_path, capsys):
    cfg = write_config(tmp_path, "mb.json", {
        "init": {"kind": "uniform"}, "m": 256, "beta": 1 / 3,
        "ns": [100, 1000], "seeds": 30})
    out = tmp_path / "mb"
    code = cli.main(["moment-bound", "--config", cfg, "--out-dir", str(out)])
    assert code == 0
    report = json.loads((out / "moment_bound.json").read_text())
    assert report["passed"]
    assert capsys.readouterr().out.count("[PASS]") == 5


def test_fluctuations_command(tmp_path, capsys):
    cfg = write_config(tmp_path, "flu.json", {
        "ns": [500, 4000], "seeds_per_n": 32, "T": 0.05, "dt": 1e-3})
    code = cli.main(["fluctuations", "--config", cfg,
                     "--out-dir", str(tmp_path / "flu")])
    assert code == 0
    text = capsys.readouterr().out
    assert "variance slope" in text
    assert (tmp_path / "flu/fluctuations.json").is_file()


def test_unknown_subcommand_rejected(capsys):
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])

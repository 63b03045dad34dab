import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from adhesionlab import harness as H
from adhesionlab.measures import DensityField, field_distance


def small_config(out_dir, **over):
    base = dict(
        system="local", model={"family": "derouler", "c": 0.6},
        ns=[100, 400], seeds=[5, 6, 7], T=0.03, m=128,
        record_times=[0.015], init={"kind": "cosine", "amp": 0.4},
        out_dir=str(out_dir), chunk_seeds=2)
    base.update(over)
    return H.StudyConfig(**base)


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


# -- config ------------------------------------------------------------------

def test_config_roundtrip(tmp_path):
    cfg = small_config(tmp_path)
    again = H.StudyConfig.from_dict(cfg.to_dict())
    assert again == cfg


def test_config_hash_ignores_out_dir(tmp_path):
    a = small_config(tmp_path / "a")
    b = small_config(tmp_path / "b")
    assert a.config_hash() == b.config_hash()
    c = small_config(tmp_path / "a", T=0.04)
    assert c.config_hash() != a.config_hash()


def test_config_rejects_bad_fields(tmp_path):
    with pytest.raises(ValueError, match="unknown config fields"):
        H.StudyConfig.from_dict(dict(small_config(tmp_path).to_dict(), bogus=1))
    with pytest.raises(ValueError, match="system"):
        small_config(tmp_path, system="spectral")
    with pytest.raises(ValueError, match="particle count"):
        small_config(tmp_path, ns=[])
    with pytest.raises(ValueError, match="seed"):
        small_config(tmp_path, seeds=[])


def test_initial_density_builtins():
    for spec in ({"kind": "uniform"}, {"kind": "cosine", "amp": 0.5},
                 {"kind": "bimodal", "spread": 0.1}):
        f = H.initial_density(spec, 1, 128)
        assert f.mass() == pytest.approx(1.0, abs=1e-9)
        assert f.values.min() >= 0.0
    with pytest.raises(ValueError):
        H.initial_density({"kind": "spiral"}, 1, 64)
    with pytest.raises(ValueError):
        H.initial_density({"kind": "cosine", "amp": 1.5}, 1, 64)


# -- convergence study -------------------------------------------------------

def test_study_artifacts_and_schema(tmp_path):
    cfg = small_config(tmp_path / "study")
    manifest = H.run_convergence_study(cfg, threads=2)

    out = tmp_path / "study"
    assert (out / "manifest.json").is_file()
    lines = (out / "study.csv").read_text().splitlines()
    assert lines[0] == "n,seed,t,L1,L2,W1"
    # 2 ns x 3 seeds x 3 record times (0, 0.015, 0.03)
    assert len(lines) == 1 + 2 * 3 * 3
    cells = [ln.split(",") for ln in lines[1:]]
    assert all(len(c) == 6 for c in cells)
    keys = [(int(c[0]), int(c[1]), float(c[2])) for c in cells]
    assert keys == sorted(keys)

    for n in (100, 400):
        for k in range(3):
            assert (out / f"reference/n{n}/t{k}.csv").is_file()
        for s in (5, 6, 7):
            run = out / f"runs/n{n}_s{s}"
            assert (run / "diagnostics.csv").is_file()
            assert (run / "snapshot_t0.csv").is_file()

    assert manifest["certified"]
    assert manifest["checks"]["monotone"] in (True, False)
    assert manifest["config_hash"] == cfg.config_hash()
    disk = json.loads((out / "manifest.json").read_text())
    assert disk["config_hash"] == manifest["config_hash"]
    assert set(disk["stability"]) == {"100", "400"}
    for entry in disk["stability"].values():
        assert entry["pde_dt"] <= entry["pde_stability_limit"]


def test_study_error_decreases_with_n(tmp_path):
    cfg = small_config(tmp_path / "mono", ns=[50, 1600], seeds=[0, 1, 2, 3])
    manifest = H.run_convergence_study(cfg)
    errs = manifest["ensemble_mean_l2_final"]
    assert errs["1600"] < errs["50"]
    assert manifest["checks"]["monotone"]


def test_study_byte_identical_across_threads(tmp_path):
    import shutil
    out = tmp_path / "det"
    digests = []
    for threads in (1, 4):
        shutil.rmtree(out, ignore_errors=True)
        H.run_convergence_study(small_config(out), threads=threads)
        digests.append(tree_digest(out))
    assert digests[0] == digests[1]


def test_reference_distance_to_itself_is_zero(tmp_path):
    cfg = small_config(tmp_path / "self", ns=[100], seeds=[5])
    H.run_convergence_study(cfg)
    ref = DensityField.from_csv(tmp_path / "self/reference/n100/t1.csv")
    assert field_distance(ref, ref, "l2") == 0.0
    assert field_distance(ref, ref, "w1") == 0.0


def test_study_abort_preserves_partial_results(tmp_path, monkeypatch):
    import adhesionlab.harness as hmod
    real = hmod.simulate_batch

    def flaky(positions, seeds, *a, **kw):
        if positions.shape[1] == 400:
            raise RuntimeError("synthetic member failure")
        return real(positions, seeds, *a, **kw)

    monkeypatch.setattr(hmod, "simulate_batch", flaky)
    out = tmp_path / "abort"
    with pytest.raises(H.StudyAborted, match="partial results"):
        H.run_convergence_study(small_config(out))
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["aborted"]
    assert manifest["failures"]
    lines = (out / "study.csv").read_text().splitlines()
    assert len(lines) == 1 + 1 * 3 * 3          # only the n=100 rows
    assert all(ln.split(",")[0] == "100" for ln in lines[1:])


def test_study_rejects_under_resolved_grid(tmp_path):
    cfg = small_config(tmp_path / "coarse", ns=[100000], seeds=[0], m=64)
    with pytest.raises(ValueError, match="resolve"):
        H.run_convergence_study(cfg)


def test_nonlocal_study_runs(tmp_path):
    cfg = small_config(
        tmp_path / "nl", system="nonlocal",
        model={"b": {"kind": "fourier",
                     "terms": [{"component": 0, "k": [1], "sin": 0.25}]},
               "g": {"kind": "min", "cap": 1.0}},
        ns=[100], seeds=[1, 2])
    manifest = H.run_convergence_study(cfg)
    assert manifest["model_constants"]["drift_sup_bound"] == pytest.approx(0.25)
    assert manifest["certified"]


# -- moment bound ------------------------------------------------------------

def test_moment_bound_uniform_passes():
    rep = H.moment_bound_check(DensityField.uniform(1, 256), [100, 1000],
                               1 / 3, seeds=list(range(40)))
    assert rep["passed"]
    assert rep["coarse_bound"] == pytest.approx(35 / 16 + 1.0)
    for entry in rep["per_n"].values():
        assert entry["estimate"] <= rep["coarse_bound"] + 3 * entry["se"]
        assert entry["finer_bound"] < rep["coarse_bound"]


def test_moment_bound_cosine_bound_value():
    cos = DensityField.from_function(
        lambda p: 1 + 0.5 * np.cos(2 * np.pi * p[:, 0]), 1, 256)
    rep = H.moment_bound_check(cos, [100], 1 / 3, seeds=list(range(30)))
    assert rep["coarse_bound"] == pytest.approx(35 / 16 + 1.125)
    assert rep["passed"]


def test_moment_bound_single_particle_identity():
    rep = H.moment_bound_check(DensityField.uniform(1, 256), [100], 1 / 3,
                               seeds=[0, 1])
    sp = rep["single_particle"]
    assert sp["gap"] <= 1e-8
    assert sp["exact"] == pytest.approx(1.6317016317016317, abs=1e-9)


def test_moment_bound_rejects_coarse_grid():
    with pytest.raises(ValueError, match="under-resolves"):
        H.moment_bound_check(DensityField.uniform(1, 32), [100000], 1 / 3,
                             seeds=[0])


# -- fluctuation scaling -----------------------------------------------------

def test_fluctuation_small_ladder():
    rep = H.fluctuation_scaling_study([500, 4000], seeds_per_n=32, T=0.05,
                                      dt=1e-3)
    assert rep["constant_phi_variance"] == 0.0
    assert rep["slope_raw"] == pytest.approx(-1.0, abs=0.35)
    for n, entry in rep["per_n"].items():
        # raw variance of a uniform-in-law observable is Var(cos)/n = 1/(2n)
        assert entry["var_raw"] == pytest.approx(0.5 / int(n), rel=0.6)


def test_fluctuation_level_matches_quadratic_variation():
    rep = H.fluctuation_scaling_study([1000], seeds_per_n=8, T=0.05, dt=1e-3,
                                      level_n=1000, level_seeds=160)
    lvl = rep["level"]
    assert lvl["prediction"] == pytest.approx(4 * np.pi ** 2 * 0.05 / 1000)
    assert abs(lvl["ratio"] - 1.0) <= 0.25


def test_fluctuation_input_validation():
    with pytest.raises(ValueError, match="test function"):
        H.fluctuation_scaling_study([100], 4, phi="tan")
    with pytest.raises(ValueError, match="multiple"):
        H._observable_paths(50, [0], T=0.05, dt=0.0007, d=1, phi="cos")


# -- built-in stability and dissipation cases --------------------------------

def test_builtin_gronwall_report():
    rep = H.run_builtin_gronwall(T=0.04, m=96)
    assert rep["passed"]
    assert rep["zero_field_contracts"]
    assert rep["transport"]["bound"] >= 1.0
    assert max(rep["transport"]["ratios"]) <= rep["transport"]["bound"] * (1 + 1e-9)


def test_entropy_dissipation_study_small():
    rep = H.entropy_dissipation_study(n=500, seeds=range(6), T=0.02)
    assert rep["passed"]
    assert rep["n"] == 500
    assert rep["lambda"] == pytest.approx(0.15)
    assert np.all(np.isfinite(rep["mean_excess"]))

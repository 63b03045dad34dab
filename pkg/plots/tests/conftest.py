"""Shared fixtures: a hand-written study directory following the harness
output contract, so the renderer is tested against the schema itself."""

import json

import numpy as np
import pytest

RECORD_TIMES = [0.0, 0.005, 0.01]
NS = [100, 1000]
SEEDS = [0, 1]
M = 16


def _field_csv(path, values):
    xs = -0.5 + np.arange(M) / M
    with open(path, "w") as fh:
        fh.write("x0,value\n")
        for x, v in zip(xs, values):
            fh.write(f"{float(x)!r},{float(v)!r}\n")


def _profile(t, wobble):
    xs = -0.5 + np.arange(M) / M
    return 1.0 + (0.4 + wobble) * np.exp(-4 * np.pi ** 2 * t) \
        * np.cos(2 * np.pi * xs)


def write_study(root, runs=True):
    """Materialize a small but complete study tree under ``root``."""
    root.mkdir(parents=True, exist_ok=True)
    run_list, rows = [], []
    if runs:
        for n in NS:
            ref_dir = root / "reference" / f"n{n}"
            ref_dir.mkdir(parents=True)
            for k, t in enumerate(RECORD_TIMES):
                _field_csv(ref_dir / f"t{k}.csv", _profile(t, 0.0))
            for seed in SEEDS:
                run_dir = root / "runs" / f"n{n}_s{seed}"
                run_dir.mkdir(parents=True)
                wobble = 0.1 / np.sqrt(n) * (1 + seed)
                with open(run_dir / "diagnostics.csv", "w") as fh:
                    fh.write("time,entropy,fisher,l2sq,energy_n,"
                             "grad_energy_sq\n")
                    for t in RECORD_TIMES:
                        decay = float(np.exp(-8 * np.pi ** 2 * t))
                        fh.write(f"{t!r},{0.04 * decay!r},{3.2 * decay!r},"
                                 f"{1.08 * decay!r},{0.05 * decay!r},"
                                 f"{0.07 * decay!r}\n")
                for k, t in enumerate(RECORD_TIMES):
                    _field_csv(run_dir / f"snapshot_t{k}.csv",
                               _profile(t, wobble))
                    err = float(wobble * np.exp(-4 * np.pi ** 2 * t))
                    rows.append((n, seed, t, err, err / np.sqrt(2), err / 2))
                run_list.append({"n": n, "seed": seed,
                                 "dir": f"runs/n{n}_s{seed}"})
    with open(root / "study.csv", "w") as fh:
        fh.write("n,seed,t,L1,L2,W1\n")
        for n, seed, t, l1, l2, w1 in rows:
            fh.write(f"{n},{seed},{float(t)!r},{float(l1)!r},"
                     f"{float(l2)!r},{float(w1)!r}\n")
    manifest = {
        "config": {"system": "local", "d": 1,
                   "model": {"family": "derouler", "c": 0.6}},
        "config_hash": "f00dfeedf00dfeed",
        "record_times": RECORD_TIMES,
        "ns": NS if runs else [],
        "seeds": SEEDS if runs else [],
        "model_constants": {"lambda": 0.15, "energy_family": "derouler"},
        "kernel": {str(n): {"beta": 1.0 / 3.0, "grad_bound_c": 78.75}
                   for n in NS},
        "reference_dirs": {str(n): f"reference/n{n}" for n in NS},
        "runs": run_list,
        "checks": {"monotone": True, "factor2": True},
        "aborted": False,
    }
    with open(root / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return root


@pytest.fixture(scope="session")
def study_dir(tmp_path_factory):
    return write_study(tmp_path_factory.mktemp("study") / "out")

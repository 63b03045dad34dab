"""Command-line entry points.

Subcommands: validate, simulate, solve-pde, converge, moment-bound,
fluctuations. Every command reads a JSON config (--config), honors
--out-dir/--seed/--threads where meaningful, prints one PASS/FAIL line per
enabled check, and exits 0 only if all of them pass.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .harness import (StudyAborted, StudyConfig, fluctuation_scaling_study,
                      initial_density, moment_bound_check,
                      run_convergence_study)
from .models import (build_energy_model, build_velocity_model,
                     validate_energy_model, validate_velocity_model)
from .pde import solve_local, solve_nonlocal
from .sde import default_grid, simulate
from .measures import sample_iid
from .torus import make_kernel, validate_kernel


def _load_config(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _status(name: str, ok: bool) -> bool:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}")
    return ok


def _write_json(path: Path, data: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_validate(args) -> int:
    cfg = _load_config(args.config)
    reports, ok = {}, True
    if "kernel" in cfg:
        k = cfg["kernel"]
        spec = make_kernel(int(k.get("d", 1)), float(k["beta"]), int(k["n"]),
                           permissive=args.override_beta_bound)
        rep = validate_kernel(spec)
        reports["kernel"] = rep.as_dict()
        ok &= _status(f"kernel d={spec.d} beta={spec.beta:g} n={spec.n}", rep.passed)
    if "velocity" in cfg:
        vm = build_velocity_model(cfg["velocity"], d=int(cfg.get("d", 1)))
        rep = validate_velocity_model(vm)
        reports["velocity"] = rep.as_dict()
        ok &= _status("velocity model", rep.passed)
    if "energy" in cfg:
        em = build_energy_model(cfg["energy"])
        rep = validate_energy_model(em, d=int(cfg.get("d", 1)))
        reports["energy"] = rep.as_dict()
        ok &= _status(f"energy model ({em.name})", rep.passed)
    if not reports:
        print("config enables no validators (expected keys: kernel, velocity, energy)",
              file=sys.stderr)
        return 2
    if args.out_dir:
        _write_json(Path(args.out_dir) / "validation.json", reports)
    return 0 if ok else 1


def _single_run_pieces(cfg: dict, override: bool):
    system = cfg.get("system", "local")
    d = int(cfg.get("d", 1))
    if system == "nonlocal":
        model = build_velocity_model(cfg["model"], d=d)
        em_diag = None
    elif system == "local":
        model = build_energy_model(cfg["model"])
        em_diag = model
    else:
        raise ValueError(f"unknown system {system!r}")
    kernel = make_kernel(d, float(cfg.get("beta", 1 / 3)), int(cfg["n"]),
                         permissive=override)
    return system, model, em_diag, kernel


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    system, model, em_diag, kernel = _single_run_pieces(cfg, args.override_beta_bound)
    m = int(cfg["m"]) if cfg.get("m") else default_grid(kernel)
    rho_bar = initial_density(cfg.get("init", {"kind": "uniform"}), kernel.d, m)
    init = sample_iid(rho_bar, kernel.n, seed=args.seed)
    rec = simulate(init, kernel, model, float(cfg["T"]),
                   record_times=cfg.get("record_times"), dt=cfg.get("dt"),
                   m=m, seed=args.seed, em_diag=em_diag)
    out = Path(args.out_dir or "run-out")
    out.mkdir(parents=True, exist_ok=True)
    rec.diagnostics_to_csv(out / "diagnostics.csv")
    for k, snap in enumerate(rec.snapshots):
        snap.to_csv(out / f"snapshot_t{k}.csv")
    _write_json(out / "run.json", {
        "system": system, "seed": args.seed, "n": kernel.n, "m": m,
        "times": [float(t) for t in rec.times], "meta": rec.meta})
    finite = bool(np.all(np.isfinite(rec.entropy)))
    return 0 if _status(f"simulate n={kernel.n} ({system})", finite) else 1


def _cmd_solve_pde(args) -> int:
    cfg = _load_config(args.config)
    system = cfg.get("system", "local")
    d = int(cfg.get("d", 1))
    m = int(cfg.get("m", 256))
    rho0 = initial_density(cfg.get("init", {"kind": "cosine", "amp": 0.5}), d, m)
    if system == "nonlocal":
        vm = build_velocity_model(cfg["model"], d=d)
        run = solve_nonlocal(rho0, vm, float(cfg["T"]),
                             record_times=cfg.get("record_times"),
                             dt=cfg.get("dt"))
    else:
        em = build_energy_model(cfg["model"])
        run = solve_local(rho0, em, float(cfg["T"]),
                          record_times=cfg.get("record_times"),
                          dt=cfg.get("dt"), form=cfg.get("form", "diffusion"),
                          face=cfg.get("face", "upwind"))
    out = Path(args.out_dir or "pde-out")
    out.mkdir(parents=True, exist_ok=True)
    for k, st in enumerate(run.states):
        st.field.to_csv(out / f"t{k}.csv")
    _write_json(out / "pde.json", {"system": system, "meta": run.meta,
                                   "times": [s.t for s in run.states]})
    mass_ok = abs(run.final.mass() - 1.0) < 1e-8
    return 0 if _status(f"solve-pde {run.meta['form']} m={m}", mass_ok) else 1


def _cmd_converge(args) -> int:
    data = _load_config(args.config)
    if args.out_dir:
        data["out_dir"] = args.out_dir
    if args.override_beta_bound:
        data["override_beta_bound"] = True
    cfg = StudyConfig.from_dict(data)
    try:
        manifest = run_convergence_study(cfg, threads=args.threads)
    except StudyAborted as exc:
        print(f"[FAIL] study aborted: {exc}")
        return 1
    ok = _status("model/kernel certification", manifest["certified"])
    ok &= _status("final-time L2 error monotone over n ladder",
                  manifest["checks"]["monotone"])
    ok &= _status("error(max n) <= error(min n)/2",
                  manifest["checks"]["factor2"])
    print(f"study written to {cfg.out_dir} (hash {manifest['config_hash']})")
    return 0 if ok else 1


def _cmd_moment_bound(args) -> int:
    cfg = _load_config(args.config)
    d = int(cfg.get("d", 1))
    m = int(cfg.get("m", 256))
    rho_bar = initial_density(cfg.get("init", {"kind": "uniform"}), d, m)
    seeds = cfg.get("seeds", 200)
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    rep = moment_bound_check(rho_bar, cfg.get("ns", [100, 1000, 10000]),
                             float(cfg.get("beta", 1 / 3)), seeds)
    if args.out_dir:
        _write_json(Path(args.out_dir) / "moment_bound.json", rep)
    ok = True
    for n, entry in rep["per_n"].items():
        ok &= _status(f"moment bound n={n} (coarse)", entry["coarse_ok"])
        ok &= _status(f"moment bound n={n} (finer)", entry["finer_ok"])
    ok &= _status("single-particle norm identity", rep["single_particle"]["ok"])
    return 0 if ok else 1


def _cmd_fluctuations(args) -> int:
    cfg = _load_config(args.config)
    rep = fluctuation_scaling_study(
        cfg.get("ns", [1000, 10000, 100000]),
        int(cfg.get("seeds_per_n", 48)),
        T=float(cfg.get("T", 0.1)), dt=float(cfg.get("dt", 5e-4)),
        d=int(cfg.get("d", 1)), phi=cfg.get("phi", "cos"),
        level_n=cfg.get("level_n"), level_seeds=int(cfg.get("level_seeds", 512)))
    if args.out_dir:
        _write_json(Path(args.out_dir) / "fluctuations.json", rep)
    ok = True
    if rep["slope_ok"] is not None:
        ok &= _status(f"variance slope {rep['slope_raw']:+.3f} within -1 +/- 0.2",
                      rep["slope_ok"])
    if rep["level"] is not None:
        ok &= _status(
            f"martingale variance level ratio {rep['level']['ratio']:.3f}"
            " within 25%", rep["level"]["ok"])
    ok &= _status("constant observable variance is zero",
                  rep["constant_phi_variance"] == 0.0)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adhesionlab",
        description="Particle ensembles, limiting PDEs, and their cross-checks "
                    "on the periodic torus.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="JSON config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out-dir", default=None)
        p.add_argument("--override-beta-bound", action="store_true",
                       help="accept beta above the moderate-interaction limit")

    for name, fn, doc in [
            ("validate", _cmd_validate, "kernel and model validation reports"),
            ("simulate", _cmd_simulate, "one particle run with diagnostics"),
            ("solve-pde", _cmd_solve_pde, "one PDE trajectory"),
            ("converge", _cmd_converge, "full particle-vs-PDE study"),
            ("moment-bound", _cmd_moment_bound, "Monte Carlo moment bound"),
            ("fluctuations", _cmd_fluctuations, "observable variance scaling")]:
        p = sub.add_parser(name, help=doc)
        common(p)
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

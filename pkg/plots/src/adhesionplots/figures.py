"""Figure rendering for study directories.

All figures use a fixed style and are written without software/date
metadata, so re-rendering the same inputs yields byte-identical files.
"""

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (needs the backend pinned)

from .tables import StudyDir, StudyTable  # noqa: E402

STYLE = {
    "figure.dpi": 144,
    "savefig.dpi": 144,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "legend.framealpha": 0.9,
}
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b")


def _save(fig, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def error_vs_n(table: StudyTable, out_path) -> float | None:
    """Log-log ensemble-mean final-time error per n; returns the fitted
    slope of the L2 curve (None with fewer than two n values)."""
    out_path = Path(out_path)
    slope = None
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.2), constrained_layout=True)
        for metric, color in (("l2", PALETTE[0]), ("l1", PALETTE[1]),
                              ("w1", PALETTE[2])):
            means = table.mean_final(metric)
            ns = np.array(sorted(means))
            errs = np.array([means[n] for n in ns])
            if not len(ns) or not np.all(np.isfinite(errs)):
                continue
            ax.loglog(ns, errs, "o-", color=color, label=metric.upper())
            if metric == "l2" and len(ns) >= 2:
                slope = float(np.polyfit(np.log(ns), np.log(errs), 1)[0])
        if slope is not None:
            ax.annotate(f"fitted slope {slope:.2f}", xy=(0.05, 0.08),
                        xycoords="axes fraction")
        ax.set_xlabel("particles n")
        ax.set_ylabel("mean final-time distance to reference")
        ax.legend(loc="upper right")
        _save(fig, out_path)
    return slope


def filmstrip(snapshots, references, times, title: str, out_path) -> int:
    """One panel per record time: particle density over the reference.
    Returns the panel count."""
    k = len(times)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, k, figsize=(2.4 * k, 2.6), sharey=True,
                                 constrained_layout=True)
        axes = np.atleast_1d(axes)
        for ax, t, snap, ref in zip(axes, times, snapshots, references):
            if snap.d == 1:
                order = np.argsort(ref.coords[:, 0])
                ax.plot(ref.coords[order, 0], ref.values[order], "k--",
                        label="reference")
                order = np.argsort(snap.coords[:, 0])
                ax.plot(snap.coords[order, 0], snap.values[order],
                        color=PALETTE[0], label="particles")
                ax.set_xlabel("x")
            else:
                m = snap.m
                ax.imshow(snap.values.reshape(m, m).T, origin="lower",
                          extent=(-0.5, 0.5, -0.5, 0.5), cmap="viridis")
                ax.contour(ref.coords[:, 0].reshape(m, m),
                           ref.coords[:, 1].reshape(m, m),
                           ref.values.reshape(m, m), colors="w",
                           linewidths=0.6)
            ax.set_title(f"t = {t:g}")
        axes[0].set_ylabel("density")
        if snapshots and snapshots[0].d == 1:
            axes[-1].legend(loc="upper right")
        fig.suptitle(title)
        _save(fig, Path(out_path))
    return k


def diagnostic_traces(trace, meta: dict, title: str, out_path):
    """Entropy (with allowance band when constants are known), Fisher
    information, and the energy curves of one run."""
    t = trace.time
    with plt.rc_context(STYLE):
        fig, (ax_e, ax_f, ax_u) = plt.subplots(
            3, 1, figsize=(4.6, 6.2), sharex=True, constrained_layout=True)
        ax_e.plot(t, trace.entropy, color=PALETTE[0], label="entropy")
        if meta and len(t) > 1:
            fisher_int = np.concatenate(
                [[0.0], np.cumsum(0.5 * (trace.fisher[1:] + trace.fisher[:-1])
                                  * np.diff(t))])
            ceiling = trace.entropy[0] \
                - 0.5 * (1.0 - meta["lam"] ** 2) * fisher_int
            allow = meta["grad_c"] * t * meta["n"] ** (
                meta["beta"] * (2.0 / meta["d"] + 1.0) - 1.0)
            ax_e.plot(t, ceiling + allow, "--", color=PALETTE[1],
                      label="dissipation ceiling")
            ax_e.fill_between(t, ceiling, ceiling + allow, color=PALETTE[1],
                              alpha=0.15, label="allowance")
        ax_e.set_ylabel("entropy")
        ax_e.legend(loc="best")
        ax_f.semilogy(t, np.maximum(trace.fisher, 1e-300), color=PALETTE[2])
        ax_f.set_ylabel("fisher info")
        ax_u.plot(t, trace.energy_n, color=PALETTE[3], label="energy")
        ax_u.plot(t, trace.l2sq, color=PALETTE[4], label="L2 sq")
        ax_u.plot(t, trace.grad_energy_sq, color=PALETTE[0],
                  label="slope sq")
        ax_u.set_ylabel("energies")
        ax_u.set_xlabel("t")
        ax_u.legend(loc="best")
        fig.suptitle(title)
        _save(fig, Path(out_path))


def render_study(in_dir, out_dir) -> dict:
    """Render every figure for one study directory.

    Returns a summary: written image paths, the fitted error slope, and a
    notice when the study holds no runs (in which case nothing is drawn).
    """
    study = StudyDir(in_dir)
    out = Path(out_dir)
    if not study.runs:
        return {"images": [], "slope": None, "runs": 0,
                "notice": "study contains no runs; nothing to render"}
    out.mkdir(parents=True, exist_ok=True)
    images = []

    slope = error_vs_n(study.study_table(), out / "error_vs_n.png")
    images.append(str(out / "error_vs_n.png"))

    references = {int(n): study.reference_profiles(int(n))
                  for n in study.manifest["ns"]}
    times = study.record_times
    for run in study.runs:
        label = f"n{run['n']}_s{run['seed']}"
        strip = out / "filmstrips" / f"{label}.png"
        filmstrip(study.run_snapshots(run), references[int(run["n"])],
                  times, label, strip)
        images.append(str(strip))
        traces = out / "traces" / f"{label}.png"
        diagnostic_traces(study.run_trace(run),
                          study.dissipation_meta(int(run["n"])), label,
                          traces)
        images.append(str(traces))
    return {"images": images, "slope": slope, "runs": len(study.runs)}

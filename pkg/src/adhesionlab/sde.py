"""Euler–Maruyama particle dynamics on the torus with sqrt(2) noise.

Two drift mechanisms, both assembled on the mollification grid and
interpolated back to particles:

* non-local: V = b * [g(mu_kde)] (convolution of the velocity kernel with
  the transformed density), uniformly bounded by 2 c ||b||_inf;
* local: V = -(grad w_n) * [u'(mu_kde)], the mollified descent direction of
  the interaction energy. A second ordering, w_n * [-grad u'(mu_kde)] with
  a centered-difference gradient, is available for cross-checks.

Ensembles step in batch (positions (B, n, d)); every member draws from its
own counter-based stream addressed by (seed, step), so results are
independent of batch composition and identical to single runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as diag
from .measures import (DensityField, ParticleConfig, deposit_cic_batch,
                       interp_batch, kernel_grad_samples, kernel_samples,
                       min_grid_for_kernel, mollify_batch)
from .models import AdhesionVelocityModel, EnergyModel, build_energy_model
from .rng import CounterStream
from .torus import KernelSpec, wrap


@dataclass
class SimState:
    """Instantaneous particle-system state."""

    particles: ParticleConfig
    t: float
    step: int
    seed: int


@dataclass
class RunRecord:
    """One simulation run: diagnostic series at record times plus snapshots."""

    config_hash: str
    seed: int
    times: np.ndarray
    entropy: np.ndarray
    fisher: np.ndarray
    l2sq: np.ndarray
    energy_n: np.ndarray
    grad_energy_sq: np.ndarray
    snapshots: list = None
    distances: dict = None
    meta: dict = field(default_factory=dict)

    def diagnostics_to_csv(self, path):
        cols = [self.times, self.entropy, self.fisher, self.l2sq,
                self.energy_n, self.grad_energy_sq]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(diag.CSV_FIELDS) + "\n")
            for row in zip(*cols):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def default_grid(kernel: KernelSpec) -> int:
    """Mollification grid tied to the kernel: max(default, ceil(8 n^{beta/d}))."""
    base = 256 if kernel.d == 1 else 128
    return max(base, int(np.ceil(8.0 * kernel.scale)))


def default_dt(kernel: KernelSpec, drift_bound: float = 0.0) -> float:
    """Time step resolving the kernel scale: min(bw^2/4, 0.1 bw / drift bound)."""
    bw = kernel.bandwidth
    dt = bw * bw / 4.0
    if drift_bound > 0.0:
        dt = min(dt, 0.1 * bw / drift_bound)
    return dt


class _ZeroDriver:
    bound = 0.0
    needs_density = False

    def velocity(self, dens):
        return None


class _NonlocalDriver:
    """Precomputed spectra for V = b * [g(density)]."""

    needs_density = True

    def __init__(self, vm: AdhesionVelocityModel, kernel: KernelSpec, m: int):
        d = kernel.d
        h = 1.0 / m
        offs = wrap(np.arange(m) * h)
        if d == 1:
            pts = offs[:, None]
        else:
            mesh = np.meshgrid(*([offs] * d), indexing="ij")
            pts = np.stack([g.ravel() for g in mesh], axis=-1)
        bvals = vm.b(pts)                       # (m^d, d) samples at offsets
        axes = tuple(range(d))
        self.b_hat = [np.fft.rfftn(bvals[:, a].reshape((m,) * d), axes=axes)
                      for a in range(d)]
        self.g = vm.g
        self.d, self.m = d, m
        self.bound = vm.drift_sup_bound

    def velocity(self, dens):
        axes = tuple(range(1, self.d + 1))
        g_hat = np.fft.rfftn(self.g(dens), axes=axes)
        out = np.empty((dens.shape[0], self.d) + (self.m,) * self.d)
        for a in range(self.d):
            out[:, a] = np.fft.irfftn(g_hat * self.b_hat[a][None],
                                      s=(self.m,) * self.d, axes=axes)
        return out * (1.0 / self.m) ** self.d


class _LocalDriver:
    """Precomputed spectra for V = -(grad w_n) * [u'(density)]."""

    needs_density = True

    def __init__(self, em: EnergyModel, kernel: KernelSpec, m: int,
                 variant: str = "grad-kernel"):
        d = kernel.d
        axes = tuple(range(1, d + 1))
        self.grad_ker_hat = np.fft.rfftn(kernel_grad_samples(kernel, m), axes=axes)
        self.ker_hat = np.fft.rfftn(kernel_samples(kernel, m))
        self.em = em
        self.d, self.m = d, m
        self.variant = variant
        # metric-slope bound: lambda * sqrt(sup Fisher) has no uniform a priori
        # cap, so no drift_sup invariant is enforced for the local family
        self.bound = float("inf")

    def velocity(self, dens):
        d, m = self.d, self.m
        axes = tuple(range(1, d + 1))
        q = self.em.du(dens)
        out = np.empty((dens.shape[0], d) + (m,) * d)
        if self.variant == "grad-kernel":
            q_hat = np.fft.rfftn(q, axes=axes)
            for a in range(d):
                out[:, a] = -np.fft.irfftn(q_hat * self.grad_ker_hat[a][None],
                                           s=(m,) * d, axes=axes)
        elif self.variant == "kernel-grad":
            for a in range(d):
                dq = (np.roll(q, -1, axis=a + 1) - np.roll(q, 1, axis=a + 1)) * (0.5 * m)
                dq_hat = np.fft.rfftn(dq, axes=axes)
                out[:, a] = -np.fft.irfftn(dq_hat * self.ker_hat[None],
                                           s=(m,) * d, axes=axes)
        else:
            raise ValueError(f"unknown local drift variant {self.variant!r}")
        return out * (1.0 / m) ** d


def _make_driver(model, kernel, m, variant="grad-kernel"):
    if model is None:
        return _ZeroDriver()
    if isinstance(model, AdhesionVelocityModel):
        return _NonlocalDriver(model, kernel, m)
    if isinstance(model, EnergyModel):
        return _LocalDriver(model, kernel, m, variant=variant)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def drift_nonlocal(particles: ParticleConfig, kernel: KernelSpec,
                   vm: AdhesionVelocityModel, m: int) -> np.ndarray:
    """Drift vectors (n, d) of the non-local dynamics for one cloud."""
    pos = particles.positions[None]
    dens = mollify_batch(pos, kernel, m)
    fields = _NonlocalDriver(vm, kernel, m).velocity(dens)
    return _fields_at(fields, pos)[0]


def drift_local(particles: ParticleConfig, kernel: KernelSpec, em: EnergyModel,
                m: int, variant: str = "grad-kernel") -> np.ndarray:
    """Drift vectors (n, d) of the local dynamics for one cloud."""
    pos = particles.positions[None]
    dens = mollify_batch(pos, kernel, m)
    fields = _LocalDriver(em, kernel, m, variant=variant).velocity(dens)
    return _fields_at(fields, pos)[0]


def _fields_at(fields, pos) -> np.ndarray:
    """Interpolate velocity fields (B, d, grid) at positions (B, n, d)."""
    b, d = fields.shape[0], fields.shape[1]
    out = np.empty(pos.shape)
    for a in range(d):
        out[..., a] = interp_batch(fields[:, a], pos)
    return out


def em_step(state: SimState, drift: np.ndarray, dt: float) -> SimState:
    """One Euler–Maruyama step with additive sqrt(2) Brownian noise.

    The noise block is addressed by (seed, step), so replaying a step or
    resuming from a checkpoint reproduces the same increment.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    pos = state.particles.positions
    noise = CounterStream(state.seed).normals(state.step, pos.shape)
    new = wrap(pos + np.asarray(drift) * dt + np.sqrt(2.0 * dt) * noise)
    return SimState(ParticleConfig(new), state.t + dt, state.step + 1, state.seed)


def record_time_grid(record_times, T) -> np.ndarray:
    """Sorted record times in [0, T] with 0 and T always included."""
    times = np.asarray(sorted(set(float(t) for t in (record_times or []))), dtype=float)
    if times.size and (times[0] < -1e-12 or times[-1] > T + 1e-9):
        raise ValueError("record times must lie in [0, T]")
    if not times.size or times[0] > 1e-12:
        times = np.concatenate([[0.0], times])
    if abs(times[-1] - T) > 1e-9:
        times = np.concatenate([times, [T]])
    return times


def simulate_batch(positions, seeds, kernel: KernelSpec, model, T: float,
                   record_times=None, dt: float | None = None,
                   m: int | None = None, em_diag: EnergyModel | None = None,
                   store_snapshots: bool = True, config_hash: str = "",
                   drift_variant: str = "grad-kernel") -> list[RunRecord]:
    """Run an ensemble of particle systems sharing one configuration.

    positions: (B, n, d) initial clouds (wrapped internally); seeds: one per
    member, addressing the Brownian streams. Returns one RunRecord per
    member with diagnostics at t=0, the requested times, and T.
    """
    pos = wrap(np.asarray(positions, dtype=float))
    if pos.ndim == 2:
        pos = pos[None]
    b, n, d = pos.shape
    seeds = [int(s) for s in seeds]
    if len(seeds) != b:
        raise ValueError("need one seed per ensemble member")
    if m is None:
        m = default_grid(kernel)
    driver = _make_driver(model, kernel, m, variant=drift_variant)
    if dt is None:
        dt = default_dt(kernel, driver.bound if np.isfinite(driver.bound) else 0.0)
    times = record_time_grid(record_times, T)
    if em_diag is None:
        em_diag = model if isinstance(model, EnergyModel) else \
            build_energy_model({"family": "zero"})
    streams = [CounterStream(s) for s in seeds]
    ker_hat = np.fft.rfftn(kernel_samples(kernel, m))
    grad_ker_hat = np.fft.rfftn(kernel_grad_samples(kernel, m),
                                axes=tuple(range(1, d + 1)))

    series = {k: np.empty((b, times.size)) for k in
              ("entropy", "fisher", "l2sq", "energy_n", "grad_energy_sq")}
    snapshots = [[] for _ in range(b)] if store_snapshots else None
    max_drift = np.zeros(b)

    def record(idx):
        dens = mollify_batch(pos, kernel, m, ker_hat=ker_hat)
        series["entropy"][:, idx] = diag.entropy_values(dens, d)
        series["fisher"][:, idx] = diag.fisher_values(dens, d)
        series["l2sq"][:, idx] = diag.l2sq_values(dens, d)
        series["energy_n"][:, idx] = diag.energy_values(dens, d, em_diag)
        fields = diag.interaction_drift_fields(dens, kernel, em_diag,
                                               grad_ker_hat=grad_ker_hat)
        sq = np.zeros((b, n))
        for a in range(d):
            sq += interp_batch(fields[:, a], pos) ** 2
        series["grad_energy_sq"][:, idx] = sq.mean(axis=1)
        if store_snapshots:
            for i in range(b):
                snapshots[i].append(DensityField(d, m, dens[i].copy()))

    record(0)
    step = 0
    t = 0.0
    for idx in range(1, times.size):
        seg = times[idx] - times[idx - 1]
        nsub = max(1, int(np.ceil(seg / dt - 1e-9)))
        sub_dt = seg / nsub
        for _ in range(nsub):
            if driver.needs_density:
                dens = mollify_batch(pos, kernel, m, ker_hat=ker_hat)
                vel = driver.velocity(dens)
                drift = _fields_at(vel, pos)
                np.maximum(max_drift,
                           np.sqrt((drift ** 2).sum(axis=-1)).max(axis=-1),
                           out=max_drift)
            else:
                drift = 0.0
            noise = np.empty_like(pos)
            for i in range(b):
                noise[i] = streams[i].normals(step, (n, d))
            pos = wrap(pos + drift * sub_dt + np.sqrt(2.0 * sub_dt) * noise)
            step += 1
            t += sub_dt
        if not np.all(np.isfinite(pos)):
            raise FloatingPointError(f"non-finite positions at t={t:.6g}")
        record(idx)

    records = []
    for i in range(b):
        records.append(RunRecord(
            config_hash=config_hash, seed=seeds[i], times=times.copy(),
            entropy=series["entropy"][i].copy(), fisher=series["fisher"][i].copy(),
            l2sq=series["l2sq"][i].copy(), energy_n=series["energy_n"][i].copy(),
            grad_energy_sq=series["grad_energy_sq"][i].copy(),
            snapshots=snapshots[i] if store_snapshots else None,
            meta={"dt": float(dt), "m": int(m), "steps": int(step),
                  "max_drift": float(max_drift[i]),
                  "drift_bound": float(driver.bound)}))
    return records


def simulate(init: ParticleConfig, kernel: KernelSpec, model, T: float,
             record_times=None, dt: float | None = None, m: int | None = None,
             seed: int = 0, **kwargs) -> RunRecord:
    """Single run; identical to the matching member of any batch."""
    return simulate_batch(init.positions[None], [seed], kernel, model, T,
                          record_times=record_times, dt=dt, m=m, **kwargs)[0]


# -- checkpoints -------------------------------------------------------------

def write_checkpoint(state: SimState, path):
    """Binary state dump: header (n, d, t, step, seed) then positions."""
    with open(path, "wb") as fh:
        np.array([state.particles.n, state.particles.d], dtype="<i8").tofile(fh)
        np.array([state.t], dtype="<f8").tofile(fh)
        np.array([state.step, state.seed], dtype="<i8").tofile(fh)
        np.ascontiguousarray(state.particles.positions, dtype="<f8").tofile(fh)


def read_checkpoint(path) -> SimState:
    with open(path, "rb") as fh:
        n, d = (int(v) for v in np.fromfile(fh, dtype="<i8", count=2))
        t = float(np.fromfile(fh, dtype="<f8", count=1)[0])
        step, seed = (int(v) for v in np.fromfile(fh, dtype="<i8", count=2))
        pos = np.fromfile(fh, dtype="<f8", count=n * d).reshape(n, d)
    return SimState(ParticleConfig(pos), t, step, seed)

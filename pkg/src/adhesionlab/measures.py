"""Particle clouds, grid densities, and the mollified empirical measure.

Grids are cell-centered: m points per axis on the unit torus, node k at
-1/2 + (k + 1/2) h with h = 1/m. The mollified empirical measure of a cloud
X^1..X^n is the kernel-density field (1/n) sum_i w_n(X^i - x); it is built
either by direct summation over per-particle kernel windows (the oracle
path) or by cloud-in-cell deposition followed by FFT circular convolution
with the node-sampled kernel (the production path — the sampled kernel is
renormalized to exact discrete unit mass, so the output integrates to one
to float round-off on every admissible grid).

Batched variants operate on position arrays of shape (B, n, d) so ensembles
share the FFT plans; per-member results are identical to the single-cloud
calls because every operation is elementwise along the batch axis.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .rng import philox_generator, TAG_INIT
from .torus import KernelSpec, scaled_kernel_eval, scaled_kernel_grad, wrap


@dataclass
class ParticleConfig:
    """Positions of n particles on the torus, shape (n, d), wrapped."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        if not np.all(np.isfinite(pos)):
            raise ValueError("particle positions must be finite")
        self.positions = wrap(pos)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def to_csv(self, path):
        header = ",".join(f"x{j}" for j in range(self.d))
        _write_csv(path, header, self.positions)

    @classmethod
    def from_csv(cls, path) -> "ParticleConfig":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data)


@dataclass
class DensityField:
    """Scalar field sampled at cell centers of an m^d torus grid."""

    d: int
    m: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        expect = (self.m,) * self.d
        if vals.shape != expect:
            raise ValueError(f"values shape {vals.shape} != {expect}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        self.values = vals

    @property
    def h(self) -> float:
        return 1.0 / self.m

    def mass(self) -> float:
        return float(self.values.sum() * self.h ** self.d)

    def axis_coords(self) -> np.ndarray:
        return -0.5 + (np.arange(self.m) + 0.5) * self.h

    def node_points(self) -> np.ndarray:
        """All node coordinates, shape (m^d, d), row-major."""
        ax = self.axis_coords()
        if self.d == 1:
            return ax[:, None]
        mesh = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    @classmethod
    def uniform(cls, d: int, m: int) -> "DensityField":
        return cls(d, m, np.ones((m,) * d))

    @classmethod
    def from_function(cls, fn, d: int, m: int, normalize: bool = False) -> "DensityField":
        f = cls(d, m, np.asarray(fn(cls.uniform(d, m).node_points())).reshape((m,) * d))
        if normalize:
            f.values = f.values / f.mass()
        return f

    def copy(self) -> "DensityField":
        return DensityField(self.d, self.m, self.values.copy())

    # -- serialization ------------------------------------------------------

    def to_csv(self, path):
        header = ",".join(f"x{j}" for j in range(self.d)) + ",value"
        rows = np.column_stack([self.node_points(), self.values.ravel()])
        _write_csv(path, header, rows)

    @classmethod
    def from_csv(cls, path) -> "DensityField":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        d = data.shape[1] - 1
        m = round(data.shape[0] ** (1.0 / d))
        if m ** d != data.shape[0]:
            raise ValueError(f"row count {data.shape[0]} is not a d={d} grid")
        return cls(d, m, data[:, -1].reshape((m,) * d))

    def to_binary(self, path):
        with open(path, "wb") as fh:
            np.array([self.d, self.m], dtype="<i8").tofile(fh)
            np.ascontiguousarray(self.values, dtype="<f8").tofile(fh)

    @classmethod
    def from_binary(cls, path) -> "DensityField":
        with open(path, "rb") as fh:
            d, m = (int(v) for v in np.fromfile(fh, dtype="<i8", count=2))
            vals = np.fromfile(fh, dtype="<f8", count=m ** d)
        return cls(d, m, vals.reshape((m,) * d))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for row in np.atleast_2d(rows):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


# -- sampling ---------------------------------------------------------------

def sample_iid(density: DensityField, n: int, seed: int) -> ParticleConfig:
    """Draw n i.i.d. particles from a grid density (uniform within cells).

    Cell probabilities are values * h^d / total mass; rejects negative
    values or non-positive total mass. Reproducible from the seed alone via
    the counter-based init stream.
    """
    vals = density.values
    if np.any(vals < 0):
        raise ValueError("density has negative values")
    total = vals.sum()
    if not total > 0:
        raise ValueError("density has non-positive total mass")
    if n < 1:
        raise ValueError("need at least one particle")
    probs = (vals / total).ravel()
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    gen = philox_generator(seed, TAG_INIT)
    u = gen.random(n)
    flat = np.searchsorted(cdf, u, side="right")
    flat = np.minimum(flat, probs.size - 1)
    cells = np.stack(np.unravel_index(flat, vals.shape), axis=-1).astype(float)
    offs = gen.random((n, density.d))
    pos = -0.5 + (cells + offs) * density.h
    return ParticleConfig(pos)


# -- deposition / interpolation --------------------------------------------

def _batched(pos) -> tuple[np.ndarray, bool]:
    pos = np.asarray(pos, dtype=float)
    if pos.ndim == 2:
        return pos[None], True
    return pos, False


def deposit_cic_batch(pos, m: int) -> np.ndarray:
    """Cloud-in-cell deposit of clouds (B, n, d) onto the m^d grid.

    Returns density-unit arrays of shape (B, m, [m]); mass is exactly 1 per
    member since the linear weights sum to one.
    """
    pos, _ = _batched(pos)
    b, n, d = pos.shape
    h = 1.0 / m
    g = (pos + 0.5) / h - 0.5              # node-centered continuous index
    i0 = np.floor(g)
    frac = g - i0
    cells = m ** d
    member = (np.arange(b, dtype=np.int64)[:, None] * cells)
    acc = np.zeros(b * cells)
    if d == 1:
        lo = i0[..., 0].astype(np.int64) % m
        hi = lo + 1
        hi[hi == m] = 0
        fr = frac[..., 0]
        np.add.at(acc, member + lo, 1.0 - fr)
        np.add.at(acc, member + hi, fr)
    else:
        i0 = i0.astype(np.int64)
        for corner in itertools.product((0, 1), repeat=d):
            idx = np.zeros((b, n), dtype=np.int64)
            wgt = np.ones((b, n))
            for ax, c in enumerate(corner):
                idx = idx * m + (i0[..., ax] + c) % m
                wgt = wgt * (frac[..., ax] if c else 1.0 - frac[..., ax])
            np.add.at(acc, (member + idx).ravel(), wgt.ravel())
    dep = acc.reshape((b,) + (m,) * d)
    return dep / (n * h ** d)


def interp_batch(values, pos) -> np.ndarray:
    """Periodic multilinear interpolation; values (B, m, [m]), pos (B, n, d)."""
    values = np.asarray(values, dtype=float)
    pos, _ = _batched(pos)
    b, n, d = pos.shape
    m = values.shape[-1]
    h = 1.0 / m
    raw = np.ascontiguousarray(values).reshape(-1)
    cells = m ** d
    member = (np.arange(b, dtype=np.int64)[:, None] * cells)
    g = (pos + 0.5) / h - 0.5
    i0 = np.floor(g)
    frac = g - i0
    if d == 1:
        lo = i0[..., 0].astype(np.int64) % m
        hi = lo + 1
        hi[hi == m] = 0
        fr = frac[..., 0]
        v0 = np.take(raw, member + lo)
        v1 = np.take(raw, member + hi)
        return v0 + fr * (v1 - v0)
    i0 = i0.astype(np.int64)
    out = np.zeros((b, n))
    for corner in itertools.product((0, 1), repeat=d):
        idx = np.zeros((b, n), dtype=np.int64)
        wgt = np.ones((b, n))
        for ax, c in enumerate(corner):
            idx = idx * m + (i0[..., ax] + c) % m
            wgt = wgt * (frac[..., ax] if c else 1.0 - frac[..., ax])
        out += wgt * np.take(raw, member + idx)
    return out


def eval_field_at(fieldv: DensityField, points) -> np.ndarray:
    """Interpolate a field at torus points (k, d) -> (k,)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return interp_batch(fieldv.values[None], pts[None])[0]


# -- mollification ----------------------------------------------------------

def kernel_samples(kernel: KernelSpec, m: int, normalized: bool = True) -> np.ndarray:
    """Kernel sampled at node-offset displacements, shape (m, [m]).

    Entry o holds w_n(wrap(o * h)); with ``normalized`` the discrete mass
    h^d sum is rescaled to exactly one (the convolution then conserves the
    deposited mass to round-off).
    """
    h = 1.0 / m
    offs = wrap(np.arange(m) * h)
    if kernel.d == 1:
        pts = offs[:, None]
    else:
        mesh = np.meshgrid(*([offs] * kernel.d), indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=-1)
    ker = scaled_kernel_eval(kernel, pts).reshape((m,) * kernel.d)
    if normalized:
        ker = ker / (ker.sum() * h ** kernel.d)
    return ker


def kernel_grad_samples(kernel: KernelSpec, m: int) -> np.ndarray:
    """grad w_n at node offsets, shape (d, m, [m]); odd symmetry holds exactly."""
    h = 1.0 / m
    offs = wrap(np.arange(m) * h)
    if kernel.d == 1:
        pts = offs[:, None]
    else:
        mesh = np.meshgrid(*([offs] * kernel.d), indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=-1)
    g = scaled_kernel_grad(kernel, pts)
    return np.moveaxis(g.reshape((m,) * kernel.d + (kernel.d,)), -1, 0)


def circ_conv_batch(fields, ker_hat, d: int, m: int) -> np.ndarray:
    """Circular convolution (times h^d) of batch fields with a kernel spectrum."""
    axes = tuple(range(1, d + 1))
    spec = np.fft.rfftn(fields, axes=axes)
    out = np.fft.irfftn(spec * ker_hat[None], s=(m,) * d, axes=axes)
    return out * (1.0 / m) ** d


def min_grid_for_kernel(kernel: KernelSpec) -> int:
    """Smallest admissible grid: spacing <= (support half-width)/4."""
    return int(np.ceil(4.0 / kernel.support_half_width))


def mollify_batch(pos, kernel: KernelSpec, m: int, path: str = "fft",
                  ker_hat=None) -> np.ndarray:
    """Mollified empirical measures for clouds (B, n, d) -> (B, m, [m])."""
    pos, _ = _batched(pos)
    d = kernel.d
    h = 1.0 / m
    if h > kernel.support_half_width / 4 + 1e-12:
        raise ValueError(
            f"grid spacing {h:.3g} too coarse for kernel support half-width "
            f"{kernel.support_half_width:.3g} (need h <= shw/4, m >= {min_grid_for_kernel(kernel)})")
    if path == "fft":
        dep = deposit_cic_batch(pos, m)
        if ker_hat is None:
            ker_hat = np.fft.rfftn(kernel_samples(kernel, m))
        return circ_conv_batch(dep, ker_hat, d, m)
    if path == "direct":
        return _mollify_direct(pos, kernel, m)
    raise ValueError(f"unknown mollify path {path!r}")


def _mollify_direct(pos, kernel: KernelSpec, m: int) -> np.ndarray:
    """Literal nodal sums (1/n) sum_i w_n(X^i - x_node), window-accumulated."""
    b, n, d = pos.shape
    h = 1.0 / m
    r = int(np.ceil(kernel.support_half_width / h + 0.5))
    base = np.floor((pos + 0.5) / h).astype(np.int64)      # nearest-left node
    cells = m ** d
    member = np.arange(b, dtype=np.int64)[:, None] * cells
    acc = np.zeros(b * cells)
    offsets = itertools.product(range(-r, r + 1), repeat=d)
    for off in offsets:
        idx = np.zeros((b, n), dtype=np.int64)
        disp = np.empty((b, n, d))
        for ax, o in enumerate(off):
            node = base[..., ax] + o
            idx = idx * m + node % m
            disp[..., ax] = pos[..., ax] - (-0.5 + (node + 0.5) * h)
        vals = scaled_kernel_eval(kernel, disp.reshape(-1, d)).reshape(b, n)
        np.add.at(acc, (member + idx).ravel(), vals.ravel())
    return acc.reshape((b,) + (m,) * d) / n


def mollify(particles: ParticleConfig, kernel: KernelSpec, m: int,
            path: str = "fft") -> DensityField:
    """Mollified empirical measure of one cloud as a DensityField."""
    vals = mollify_batch(particles.positions, kernel, m, path=path)[0]
    return DensityField(kernel.d, m, vals)


def mollify_field(f: DensityField, kernel: KernelSpec) -> DensityField:
    """Circular convolution of a grid density with the scaled kernel."""
    ker = kernel_samples(kernel, f.m)
    out = circ_conv_batch(f.values[None], np.fft.rfftn(ker), f.d, f.m)[0]
    return DensityField(f.d, f.m, out)


# -- distances --------------------------------------------------------------

def field_distance(a: DensityField, b: DensityField, metric: str = "l2") -> float:
    """Grid distance between two fields on the same grid: l1, l2, or w1 (d=1).

    w1 is the exact 1-Wasserstein distance on the circle for measures
    carried by the shared grid, via the cumulative-difference formula with
    the optimal rotation constant (a median).
    """
    if a.d != b.d or a.m != b.m:
        raise ValueError("fields must share the same grid")
    h = a.h
    diff = a.values - b.values
    if metric == "l1":
        return float(np.sum(np.abs(diff)) * h ** a.d)
    if metric == "l2":
        return float(np.sqrt(np.sum(diff ** 2) * h ** a.d))
    if metric == "w1":
        if a.d != 1:
            raise ValueError("w1 distance implemented for d=1 only")
        if abs(a.mass() - b.mass()) > 1e-8:
            raise ValueError("w1 requires equal total mass")
        cum = np.cumsum(diff) * h
        c = np.median(cum)
        return float(np.sum(np.abs(cum - c)) * h)
    raise ValueError(f"unknown metric {metric!r}")

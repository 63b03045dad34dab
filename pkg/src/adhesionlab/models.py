"""Interaction models: velocity kernels b, nonlinearities g, energy densities u.

Two families of dynamics are supported. The non-local family transports
particles with the convolution field b * [g(density)] where b is a smooth
periodic vector field (truncated Fourier series, optionally a gradient of an
even potential) and g is Lipschitz with linear growth g(z) <= c (1 + z).
The local family descends an energy with density u; the produced pressure
is P(z) = z u'(z) - u(z) + z and the free energy F(z) = u(z) + z log z.
The admissibility condition is |z u''(z)| <= lambda < 1, which keeps
P' = z u'' + 1 inside [1 - lambda, 1 + lambda].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_B_PROBE_POINTS = 4096   # 1-d sampling resolution for sup estimates
_B_PROBE_POINTS_2D = 181


@dataclass(frozen=True)
class AdhesionVelocityModel:
    """Non-local transport model (b, g) with its certified constants."""

    d: int
    b: object                 # callable: points (..., d) -> (..., d)
    g: object                 # callable: z -> g(z), elementwise
    lip_g: float
    growth_c: float
    b_sup: float
    spec: dict = field(default_factory=dict)

    @property
    def drift_sup_bound(self) -> float:
        """Uniform drift bound 2 c ||b||_inf for unit-mass densities."""
        return 2.0 * self.growth_c * self.b_sup


@dataclass(frozen=True)
class EnergyModel:
    """Energy density u with derivatives and the induced pressure/free energy."""

    name: str
    u: object
    du: object
    d2u: object
    lam: float                # sup_z |z u''(z)|
    spec: dict = field(default_factory=dict)

    def F(self, z):
        """Free energy F(z) = u(z) + z log z (0 log 0 = 0)."""
        z = np.asarray(z, dtype=float)
        zl = np.where(z > 0.0, z * np.log(np.maximum(z, 1e-300)), 0.0)
        return self.u(z) + zl

    def dF(self, z):
        """F'(z) = u'(z) + log z + 1; the log uses a 1e-12 floor."""
        z = np.asarray(z, dtype=float)
        return self.du(z) + np.log(np.maximum(z, 1e-12)) + 1.0

    def P(self, z):
        """Pressure P(z) = z u'(z) - u(z) + z."""
        z = np.asarray(z, dtype=float)
        return z * self.du(z) - self.u(z) + z

    def dP(self, z):
        """P'(z) = z u''(z) + 1, pinned to [1 - lam, 1 + lam]."""
        z = np.asarray(z, dtype=float)
        return z * self.d2u(z) + 1.0


# -- velocity-model builders -------------------------------------------------

def _fourier_field(d: int, terms: list) -> object:
    """Vector field with components sum_j [s sin(2 pi k.x) + c cos(2 pi k.x)]."""
    parsed = []
    for t in terms:
        k = np.asarray(t.get("k", [1] + [0] * (d - 1)), dtype=float)
        if k.shape != (d,):
            raise ValueError(f"wave vector {t.get('k')} does not match d={d}")
        if np.any(k != np.round(k)):
            raise ValueError("wave vectors must be integral for periodicity")
        comp = int(t.get("component", 0))
        if not 0 <= comp < d:
            raise ValueError(f"component {comp} out of range for d={d}")
        parsed.append((comp, k, float(t.get("sin", 0.0)), float(t.get("cos", 0.0))))

    def b(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for comp, k, s, c in parsed:
            phase = 2 * np.pi * (x @ k)
            out[..., comp] += s * np.sin(phase) + c * np.cos(phase)
        return out

    return b


def _potential_gradient_field(d: int, terms: list) -> object:
    """b = -grad V for the even potential V = sum_j amp cos(2 pi k.x)."""
    parsed = []
    for t in terms:
        k = np.asarray(t.get("k", [1] + [0] * (d - 1)), dtype=float)
        if k.shape != (d,) or np.any(k != np.round(k)):
            raise ValueError("potential terms need integral wave vectors of length d")
        parsed.append((k, float(t.get("cos", 0.0))))

    def b(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for k, amp in parsed:
            phase = 2 * np.pi * (x @ k)
            out += amp * 2 * np.pi * np.sin(phase)[..., None] * k
        return out

    return b


def _measure_sup(b, d: int) -> float:
    if d == 1:
        x = np.linspace(-0.5, 0.5, _B_PROBE_POINTS, endpoint=False)[:, None]
    else:
        ax = np.linspace(-0.5, 0.5, _B_PROBE_POINTS_2D, endpoint=False)
        mesh = np.meshgrid(*([ax] * d), indexing="ij")
        x = np.stack([g.ravel() for g in mesh], axis=-1)
    vals = b(x)
    return float(np.max(np.sqrt(np.sum(vals ** 2, axis=-1))))


def build_velocity_model(spec: dict, d: int = 1) -> AdhesionVelocityModel:
    """Assemble an AdhesionVelocityModel from a config mapping.

    ``spec["b"]``: {"kind": "zero" | "fourier" | "potential", "terms": [...]}.
    ``spec["g"]``: {"kind": "zero" | "min" (cap K>0) | "saturating"}.
    Stored constants: Lip(g), the linear-growth constant c (smallest with
    g(z) <= c (1+z) on z >= 0), and the measured sup of |b|.
    """
    bspec = dict(spec.get("b", {"kind": "zero"}))
    gspec = dict(spec.get("g", {"kind": "min", "cap": 1.0}))

    kind = bspec.get("kind", "zero")
    if kind == "zero":
        def b(x):
            return np.zeros_like(np.asarray(x, dtype=float))
        b_sup = 0.0
    elif kind == "fourier":
        b = _fourier_field(d, bspec.get("terms", []))
        b_sup = _measure_sup(b, d)
    elif kind == "potential":
        b = _potential_gradient_field(d, bspec.get("terms", []))
        b_sup = _measure_sup(b, d)
    else:
        raise ValueError(f"unknown velocity kind {kind!r}")

    gkind = gspec.get("kind", "min")
    if gkind == "zero":
        def g(z):
            return np.zeros_like(np.asarray(z, dtype=float))
        lip, growth = 0.0, 0.0
    elif gkind == "min":
        cap = float(gspec.get("cap", 1.0))
        if cap <= 0:
            raise ValueError(f"min-cap must be positive, got {cap}")

        def g(z, cap=cap):
            return np.minimum(np.asarray(z, dtype=float), cap)
        # g(z) <= c (1+z): the binding point is z = cap
        lip, growth = 1.0, cap / (1.0 + cap)
    elif gkind == "saturating":
        def g(z):
            z = np.asarray(z, dtype=float)
            return z / (1.0 + z)
        # z/(1+z) <= (1+z)/4 with equality at z = 1; slope 1 at z = 0
        lip, growth = 1.0, 0.25
    else:
        raise ValueError(f"unknown nonlinearity kind {gkind!r}")

    return AdhesionVelocityModel(d=d, b=b, g=g, lip_g=lip, growth_c=growth,
                                 b_sup=b_sup, spec={"b": bspec, "g": gspec})


# -- energy-model builders ---------------------------------------------------

def build_energy_model(spec: dict) -> EnergyModel:
    """Assemble an EnergyModel from a config mapping.

    Families: {"family": "zero"} (pure diffusion, lambda = 0) and
    {"family": "derouler", "c": c} with u''(z) = c (1 - z)_+, the piecewise
    closed form integrating to u(0) = u'(0) = 0; lambda = |c|/4, attained at
    z = 1/2, and |c| >= 4 is rejected (the admissibility line lambda < 1).
    "plateau" is accepted as an alias for the curvature-plateau family.
    """
    family = spec.get("family", "zero")
    if family == "zero":
        def zero(z):
            return np.zeros_like(np.asarray(z, dtype=float))
        return EnergyModel("zero", zero, zero, zero, 0.0, dict(spec))
    if family in ("derouler", "plateau"):
        c = float(spec.get("c", 0.6))
        lam = abs(c) / 4.0
        if lam >= 1.0:
            raise ValueError(f"|c|/4 = {lam} >= 1 breaks admissibility")

        def u(z, c=c):
            z = np.asarray(z, dtype=float)
            low = c * (z ** 2 / 2 - z ** 3 / 6)
            high = c / 3.0 + (c / 2.0) * (z - 1.0)
            return np.where(z <= 1.0, low, high)

        def du(z, c=c):
            z = np.asarray(z, dtype=float)
            return np.where(z <= 1.0, c * (z - z ** 2 / 2), c / 2.0)

        def d2u(z, c=c):
            z = np.asarray(z, dtype=float)
            return c * np.maximum(1.0 - z, 0.0)

        return EnergyModel("derouler", u, du, d2u, lam, dict(spec))
    raise ValueError(f"unknown energy family {family!r}")


# -- validators --------------------------------------------------------------

@dataclass
class ModelReport:
    """Named residual checks for a model; ``passed`` is their conjunction."""

    checks: dict

    @property
    def passed(self) -> bool:
        return all(v["ok"] for v in self.checks.values())

    def as_dict(self) -> dict:
        return {"passed": self.passed, "checks": self.checks}


def validate_velocity_model(vm: AdhesionVelocityModel) -> ModelReport:
    """Certify periodicity of b, the stored sup, Lip(g), and linear growth."""
    checks = {}
    rng = np.random.default_rng(1729)
    x = rng.uniform(-0.5, 0.5, size=(512, vm.d))
    shift = rng.integers(-2, 3, size=(512, vm.d)).astype(float)
    per = float(np.max(np.abs(vm.b(x + shift) - vm.b(x))))
    checks["b_periodic"] = {"ok": per < 1e-9, "residual": per}

    sup = _measure_sup(vm.b, vm.d)
    checks["b_sup"] = {"ok": abs(sup - vm.b_sup) <= 1e-6 * max(1.0, vm.b_sup),
                       "residual": abs(sup - vm.b_sup)}

    z = np.concatenate([np.linspace(0, 5, 2001), np.logspace(0.7, 3, 200)])
    gz = vm.g(z)
    growth_viol = float(np.max(gz - vm.growth_c * (1.0 + z))) if z.size else 0.0
    checks["g_growth"] = {"ok": growth_viol <= 1e-12, "residual": growth_viol}

    dz = np.diff(z)
    slopes = np.abs(np.diff(gz)) / np.where(dz > 0, dz, 1.0)
    lip_viol = float(np.max(slopes) - vm.lip_g)
    checks["g_lipschitz"] = {"ok": lip_viol <= 1e-9, "residual": lip_viol}
    return ModelReport(checks)


def validate_energy_model(em: EnergyModel, d: int = 1, alpha: float | None = None,
                          ) -> ModelReport:
    """Certify the admissibility assumptions on F and lambda.

    Checks, each a named entry: F convex with F(0+) -> 0; superlinearity
    F(z)/z increasing at large z; the low-density lower bound F(z)/z^alpha
    bounded below for alpha slightly above d/(d+2); scale monotonicity
    (s -> s^d F(s^-d) convex non-increasing); lambda consistency
    sup|z u''| == lam; and P' within [1 - lam, 1 + lam] with a finite
    difference cross-check of P' = z u'' + 1.
    """
    if alpha is None:
        alpha = d / (d + 2.0) + 0.01
    checks = {}

    z = np.unique(np.concatenate([np.logspace(-6, 3, 600),
                                  np.linspace(0.05, 3.0, 400)]))
    Fz = em.F(z)

    slopes = np.diff(Fz) / np.diff(z)
    conv_viol = float(np.max(np.maximum(slopes[:-1] - slopes[1:], 0.0)))
    checks["F_convex"] = {"ok": conv_viol <= 1e-9, "residual": conv_viol}

    f0 = float(abs(em.F(np.array([1e-6]))[0]))
    checks["F_zero_limit"] = {"ok": f0 < 1e-4, "residual": f0}

    top = z[z >= 50.0]
    ratio = em.F(top) / top
    sup_viol = float(np.max(np.maximum(ratio[:-1] - ratio[1:], 0.0)))
    checks["F_superlinear"] = {"ok": sup_viol <= 1e-12, "residual": sup_viol}

    small = np.logspace(-6, -2, 200)
    low = em.F(small) / small ** alpha
    checks["F_lower_bound"] = {"ok": bool(np.all(low > -1.0)),
                               "residual": float(-np.min(low))}

    s = np.logspace(-1, 2, 400)
    G = s ** d * em.F(s ** (-d * 1.0))
    mono_viol = float(np.max(np.maximum(np.diff(G), 0.0)))
    gs = np.diff(G) / np.diff(s)
    gconv_viol = float(np.max(np.maximum(gs[:-1] - gs[1:], 0.0)))
    checks["scale_monotone"] = {"ok": mono_viol <= 1e-9, "residual": mono_viol}
    checks["scale_convex"] = {"ok": gconv_viol <= 1e-9, "residual": gconv_viol}

    zz = np.linspace(1e-4, 20.0, 20001)
    lam_obs = float(np.max(np.abs(zz * em.d2u(zz))))
    checks["lambda_value"] = {"ok": lam_obs <= em.lam + 1e-9 and em.lam < 1.0,
                              "residual": lam_obs - em.lam,
                              "near_bound": bool(em.lam > 0.95)}

    dP = em.dP(zz)
    band_viol = float(max(np.max(dP) - (1 + em.lam), (1 - em.lam) - np.min(dP)))
    checks["dP_band"] = {"ok": band_viol <= 1e-12, "residual": band_viol}

    # central-difference cross-check of P' away from curvature kinks
    zfd = zz[(np.abs(zz - 1.0) > 1e-3) & (zz > 1e-2)]
    hfd = 1e-6 * np.maximum(zfd, 1.0)
    fd = (em.P(zfd + hfd) - em.P(zfd - hfd)) / (2 * hfd)
    fd_err = float(np.max(np.abs(fd - em.dP(zfd))))
    checks["dP_consistency"] = {"ok": fd_err < 1e-6, "residual": fd_err}

    return ModelReport(checks)


def model_constants(vm: AdhesionVelocityModel | None = None,
                    em: EnergyModel | None = None) -> dict:
    """Flat mapping of certified constants for manifests."""
    out = {}
    if vm is not None:
        out.update({"lip_g": vm.lip_g, "growth_c": vm.growth_c,
                    "b_sup": vm.b_sup, "drift_sup_bound": vm.drift_sup_bound})
    if em is not None:
        out.update({"lambda": em.lam, "dP_min": 1.0 - em.lam,
                    "dP_max": 1.0 + em.lam, "energy_family": em.name})
    return out

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adhesionlab import torus as T


# Oracle constants for the base bump phi(t) = (35/16)(1-4t^2)^3, frozen from
# dense trapezoid quadrature (2e6+1 points) and closed forms:
#   phi(0) = 35/16, int phi = 1, ||phi||_2^2 = 1.6317016317..., c = 1260/16.
PHI_SUP = 2.1875
PHI_L2_SQ = 1.6317016317016317
PHI_DERIV_L2_SQ = 25.454545454545453   # = 280/11
GRAD_CONST_1D = 78.75                  # = 1260/16, attained at t^2 = 1/8


def dense_axis(m=400001):
    return np.linspace(-0.5, 0.5, m)


def test_bump_oracle_values():
    t = dense_axis()
    phi = T.bump(t)
    assert phi.max() == pytest.approx(PHI_SUP, abs=0)
    assert np.trapezoid(phi, t) == pytest.approx(1.0, abs=1e-10)
    assert np.trapezoid(phi**2, t) == pytest.approx(PHI_L2_SQ, rel=1e-9)
    dphi = T.bump_deriv(t)
    assert np.trapezoid(dphi**2, t) == pytest.approx(PHI_DERIV_L2_SQ, rel=1e-9)


def test_bump_deriv_matches_finite_differences():
    t = np.linspace(-0.49, 0.49, 1001)
    h = 1e-6
    fd = (T.bump(t + h) - T.bump(t - h)) / (2 * h)
    assert np.max(np.abs(fd - T.bump_deriv(t))) < 1e-6


def test_bump_is_c2_at_support_edge():
    # value, first and second derivative all -> 0 approaching |t| = 1/2
    eps = np.array([1e-4, 1e-5, 1e-6])
    assert np.all(T.bump(0.5 - eps) < 3e-10)
    assert np.all(np.abs(T.bump_deriv(0.5 - eps)) < 5e-6)
    h = 1e-7
    second = (T.bump(0.5 - eps - h) - 2 * T.bump(0.5 - eps) + T.bump(0.5 - eps + h)) / h**2
    # phi'' vanishes linearly approaching the edge
    assert np.all(np.abs(second) < 0.1)
    assert np.all(np.abs(second[1:]) < np.abs(second[:-1]) / 5)


def test_wrap_fundamental_domain():
    x = np.array([0.0, 0.5, -0.5, 0.75, -0.75, 1.0, -1.0, 12.3, -12.3])
    w = T.wrap(x)
    assert np.all(w >= -0.5) and np.all(w < 0.5)
    assert w[0] == 0.0 and w[1] == -0.5 and w[2] == -0.5
    assert w[3] == pytest.approx(-0.25) and w[4] == pytest.approx(0.25)


def test_displacement_examples():
    assert T.torus_displacement(0.45, -0.45) == pytest.approx(-0.1)
    v = T.torus_displacement(np.array([0.4, 0.0]), np.array([-0.4, 0.1]))
    assert v == pytest.approx([-0.2, -0.1])


def test_displacement_reconstructs_target():
    rng = np.random.default_rng(7)
    x = T.wrap(rng.uniform(-0.5, 0.5, size=(200, 2)))
    y = T.wrap(rng.uniform(-0.5, 0.5, size=(200, 2)))
    v = T.torus_displacement(x, y)
    assert np.max(np.abs(T.wrap(y + v) - x)) < 1e-12


def test_displacement_minimality_against_shift_enumeration():
    # brute-force minimal image: smallest |x - y + k| over k in {-1, 0, 1}^d
    rng = np.random.default_rng(3)
    x = T.wrap(rng.uniform(-0.5, 0.5, size=(500, 1)))
    y = T.wrap(rng.uniform(-0.5, 0.5, size=(500, 1)))
    v = T.torus_displacement(x, y)
    cands = np.stack([x - y + k for k in (-1.0, 0.0, 1.0)], axis=0)
    best = np.min(np.abs(cands), axis=0)
    assert np.max(np.abs(np.abs(v) - best)) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(-3, 3, allow_nan=False), st.floats(-3, 3, allow_nan=False))
def test_displacement_antisymmetry_after_wrapping(a, b):
    v = T.torus_displacement(a, b)
    u = T.torus_displacement(b, a)
    assert float(np.abs(T.wrap(v + u))) < 1e-9


def test_make_kernel_beta_validation():
    with pytest.raises(ValueError):
        T.make_kernel(1, 0.0, 10)
    with pytest.raises(ValueError):
        T.make_kernel(1, 0.34, 10)           # above 1/3
    with pytest.raises(ValueError):
        T.make_kernel(2, 0.51, 10)           # above 1/2
    with pytest.raises(ValueError):
        T.make_kernel(1, 0.25, 0)
    sp = T.make_kernel(1, 0.34, 10, permissive=True)
    assert sp.supercritical
    assert not T.make_kernel(1, 1 / 3, 10).supercritical  # boundary admissible
    assert not T.make_kernel(2, 0.5, 10).supercritical


def test_scaled_kernel_pointwise_scaling():
    sp = T.make_kernel(1, 1 / 3, 8)
    # n^beta w(n^{beta/d} x) with n=8, beta=1/3: amplitude doubles, support halves
    assert T.scaled_kernel_eval(sp, [[0.0]])[0] == pytest.approx(2 * PHI_SUP)
    assert T.scaled_kernel_eval(sp, [[0.26]])[0] == 0.0
    x = 0.1
    expect = 2.0 * T.base_kernel_eval([[2 * x]])[0]
    assert T.scaled_kernel_eval(sp, [[x]])[0] == pytest.approx(expect, rel=1e-14)


def test_kernel_norm_examples_and_scaling_law():
    # spec'd p=inf example: d=1, n=8, beta=1/3 -> 8^{1/3} * 2.1875 = 4.375
    sp = T.make_kernel(1, 1 / 3, 8)
    assert T.kernel_norm(sp, math.inf) == pytest.approx(4.375, abs=0)
    base = T.make_kernel(1, 1 / 3, 1)
    for p in (1.0, 2.0, 3.0):
        bn = T.kernel_norm(base, p)
        for n in (10, 100, 1000):
            spn = T.make_kernel(1, 1 / 3, n)
            expect = n ** (spn.beta * (p - 1) / p) * bn
            assert T.kernel_norm(spn, p) == pytest.approx(expect, rel=1e-6)


def test_kernel_norm_l2_against_dense_oracle():
    sp = T.make_kernel(1, 1 / 3, 50)
    got = T.kernel_norm(sp, 2.0)
    expect = math.sqrt(50 ** (1 / 3) * PHI_L2_SQ)
    assert got == pytest.approx(expect, rel=1e-8)


def test_kernel_norm_rejects_p_below_one():
    sp = T.make_kernel(1, 1 / 3, 10)
    with pytest.raises(ValueError):
        T.kernel_norm(sp, 0.5)


def test_unit_mass_all_n():
    for n in (1, 10, 100, 10000):
        sp = T.make_kernel(1, 1 / 3, n)
        assert abs(T.kernel_mass(sp) - 1.0) < 1e-8
    sp2 = T.make_kernel(2, 0.5, 50)
    assert abs(T.kernel_mass(sp2) - 1.0) < 1e-8


def test_grad_bound_constant_matches_analytic():
    assert T.grad_bound_constant(1) == pytest.approx(GRAD_CONST_1D, rel=1e-10)
    # d=2 maximizer sits on a coordinate axis: c_2 = c_1 * phi(0)
    assert T.grad_bound_constant(2) == pytest.approx(GRAD_CONST_1D * PHI_SUP, rel=1e-9)


def test_grad_inequality_on_random_points():
    rng = np.random.default_rng(11)
    for d, beta in ((1, 1 / 3), (2, 0.5)):
        sp = T.make_kernel(d, beta, 64)
        c = sp.grad_bound_c
        x = rng.uniform(-sp.support_half_width, sp.support_half_width, size=(20000, d))
        w = T.scaled_kernel_eval(sp, x)
        g2 = np.sum(T.scaled_kernel_grad(sp, x) ** 2, axis=-1)
        bound = (c + 1e-9) * 64 ** (beta * (2 / d + 1)) * w
        assert np.all(g2 <= bound + 1e-12)


def test_validate_kernel_report():
    rep = T.validate_kernel(T.make_kernel(1, 1 / 3, 100))
    assert rep.passed
    assert rep.symmetry_residual == 0.0
    assert rep.normalization_residual < 1e-8
    assert rep.norm_scaling_residual < 1e-6
    assert rep.grad_constant_drift < 0.01
    vals = list(rep.grad_constants.values())
    assert max(vals) / min(vals) - 1 < 0.01
    rep2 = T.validate_kernel(T.make_kernel(2, 0.5, 100))
    assert rep2.passed

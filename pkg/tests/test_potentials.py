import math
import warnings

import numpy as np
import pytest
from scipy import integrate
from scipy.special import erf

from isoland.core import DomainError, Params, RadialField, make_grid, riesz_constant, sphere_area
from isoland.evolve import gaussian_density
from isoland.potentials import (a_lower_bound, a_sup_bound, a_sup_bound_numeric,
                                compute_potentials, convolution_matrix, convolve_power,
                                delta_identity_residual, radial_kernel, sphere_mean)


def _kernel_oracle(lam, r, s, d):
    # brute-force integral over the sphere |y| = s, in polar angle
    def integrand(t):
        return (r * r + s * s - 2 * r * s * math.cos(t)) ** (lam / 2) * math.sin(t) ** (d - 2)
    pts = [math.acos(min(1.0, max(-1.0, (r * r + s * s) / (2 * r * s))))] if r != s else None
    val, _ = integrate.quad(integrand, 0.0, math.pi, epsabs=0, epsrel=1e-13, limit=400,
                            points=pts)
    return sphere_area(d - 1) * val


def test_kernel_constant_and_newton():
    for r, s in [(0.3, 1.7), (2.0, 2.0), (5.0, 0.1)]:
        assert radial_kernel(0.0, r, s, 3) == pytest.approx(4 * math.pi, rel=1e-13)
        assert radial_kernel(-1.0, r, s, 3) == pytest.approx(4 * math.pi / max(r, s), rel=1e-12)


def test_kernel_against_sphere_quadrature():
    assert radial_kernel(-0.5, 1.0, 2.0, 3) == pytest.approx(_kernel_oracle(-0.5, 1.0, 2.0, 3),
                                                             rel=1e-8)
    for lam, r, s in [(-2.5, 1.0, 1.3), (-1.7, 0.2, 3.0), (-0.5, 4.0, 3.9)]:
        assert radial_kernel(lam, r, s, 3) == pytest.approx(_kernel_oracle(lam, r, s, 3), rel=1e-8)
    for lam, r, s in [(-2.0, 1.0, 2.0), (-3.0, 0.7, 1.1), (-0.6, 2.0, 0.5)]:
        assert radial_kernel(lam, r, s, 4) == pytest.approx(_kernel_oracle(lam, r, s, 4), rel=1e-8)


def test_kernel_symmetric_and_positive():
    rng = np.random.default_rng(1)
    for _ in range(20):
        r, s = rng.uniform(0.01, 5.0, 2)
        lam = rng.uniform(-2.9, 0.0)
        k1, k2 = radial_kernel(lam, r, s, 3), radial_kernel(lam, s, r, 3)
        assert k1 > 0 and k1 == pytest.approx(k2, rel=1e-12)


def test_kernel_rejects_nonintegrable_exponent():
    with pytest.raises(DomainError):
        radial_kernel(-3.0, 1.0, 2.0, 3)


def test_sphere_mean_near_diagonal_is_finite():
    for eps in (1e-6, 1e-10, 1e-14):
        m = sphere_mean(-2.5, 1.0, 1.0 + eps, 3)
        assert np.isfinite(m) and m > 0


def test_convolve_power_mass_and_coulomb_gaussian():
    g = make_grid(12, 512)
    f = gaussian_density(g)
    c0 = convolve_power(f, 0.0)
    assert np.max(np.abs(c0.values - 1.0)) <= 1e-12
    with pytest.raises(DomainError):
        convolve_power(f, -3.0)


def test_coulomb_potential_of_gaussian_pointwise():
    g = make_grid(12, 4096)
    f = RadialField(g, np.exp(-0.5 * g.r ** 2) / (2 * math.pi) ** 1.5)
    u = convolve_power(f, -1.0, check_tail=False).values
    exact = erf(g.r / math.sqrt(2)) / g.r
    inner = g.r < 0.9 * g.r_max
    assert np.max(np.abs(u - exact)[inner]) <= 1e-6


def test_coulomb_potential_second_order():
    errs = []
    for n in (256, 512, 1024):
        g = make_grid(12, n)
        f = RadialField(g, np.exp(-0.5 * g.r ** 2) / (2 * math.pi) ** 1.5)
        u = convolve_power(f, -1.0, check_tail=False).values
        errs.append(np.max(np.abs(u - erf(g.r / math.sqrt(2)) / g.r)))
    assert np.all(np.log2(np.array(errs[:-1]) / errs[1:]) >= 1.5)


def test_dirac_limit_of_potentials():
    from isoland.core import geometric_grid
    P = Params.make(3, -2.5)
    g = geometric_grid(50, 1e-6, 1.02)
    f = gaussian_density(g, 0.003)
    pair = compute_potentials(f, P, check_tail=False)
    sel = (g.r > 0.5) & (g.r < 5)
    r = g.r[sel]
    assert np.allclose(pair.a.values[sel], P.c_coupling * r ** -0.5, rtol=1e-4)
    assert np.allclose(pair.h.values[sel], riesz_constant(3, 0.5) * r ** -2.5, rtol=1e-4)


def test_zero_density_gives_zero_potentials():
    g = make_grid(8, 128)
    pair = compute_potentials(RadialField(g, np.zeros(g.n)), Params.make(3, -2.5))
    assert not np.any(pair.a.values) and not np.any(pair.h.values)


def test_self_adjointness_converges_at_second_order():
    # int g (f * k) = int f (g * k) holds for the continuous operator; the
    # collocation scheme reproduces it up to its O(h^2) discretisation error
    for lam in (-0.4, -1.0, -2.4):
        gaps = []
        for n in (256, 512, 1024):
            g = make_grid(10, n)
            W = convolution_matrix(g, lam)
            f = np.exp(-((g.r - 1.0) / 0.8) ** 2)
            h = np.exp(-((g.r - 2.0) / 1.3) ** 2)
            lhs, rhs = g.w @ (h * (W @ f)), g.w @ (f * (W @ h))
            gaps.append(abs(lhs - rhs) / abs(lhs))
        assert gaps[-1] <= 2e-5
        assert np.all(np.log2(np.array(gaps[:-1]) / gaps[1:]) >= 1.9)


def test_potentials_positive():
    g = make_grid(10, 512)
    P = Params.make(3, -2.4)
    pair = compute_potentials(gaussian_density(g), P, check_tail=False)
    assert np.all(pair.a.values > 0) and np.all(pair.h.values >= 0)


def test_potentials_converge_under_refinement():
    P = Params.make(3, -2.5)
    ref_g = make_grid(8, 2048)
    ref = compute_potentials(gaussian_density(ref_g), P, check_tail=False)
    errs = []
    for n in (128, 256, 512):
        g = make_grid(8, n)
        pair = compute_potentials(gaussian_density(g), P, check_tail=False)
        errs.append(np.max(np.abs(pair.h.values - ref_g.interpolate(ref.h.values, g.r))))
    assert np.all(np.log2(np.array(errs[:-1]) / errs[1:]) >= 1.5)


def test_delta_identity_sign_and_order():
    P = Params.make(3, -2.5)
    res = []
    for n in (128, 256, 512, 1024):
        g = make_grid(12, n)
        f = gaussian_density(g)
        res.append(delta_identity_residual(compute_potentials(f, P, check_tail=False), f, P))
    assert res[2] <= 1e-2
    assert np.all(np.log2(np.array(res[:-1]) / res[1:]) >= 1.5)


def test_delta_identity_trivial_cases():
    g = make_grid(12, 256)
    f = gaussian_density(g)
    P2 = Params.make(3, -2.0)
    assert delta_identity_residual(compute_potentials(f, P2), f, P2) == 0.0
    z = RadialField(g, np.zeros(g.n))
    P = Params.make(3, -2.5)
    assert delta_identity_residual(compute_potentials(z, P), z, P) == 0.0
    gc = make_grid(1, 20)
    fc = gaussian_density(gc)
    with pytest.raises(DomainError):
        delta_identity_residual(compute_potentials(fc, P, check_tail=False), fc, P)


def test_a_sup_bound_dominates_random_bumps():
    P = Params.make(3, -2.5)
    g = make_grid(10, 512)
    rng = np.random.default_rng(3)
    for _ in range(20):
        c, w = rng.uniform(0.0, 3.0), rng.uniform(0.3, 1.5)
        x = (g.r - c) / w
        vals = np.where(np.abs(x) < 1, np.exp(1 - 1 / (1 - np.minimum(x * x, 1 - 1e-16))), 0.0)
        f = RadialField(g, vals * rng.uniform(0.1, 5.0))
        a = compute_potentials(f, P, check_tail=False).a.values
        assert a.max() <= a_sup_bound(f, 2.0, P)


def test_a_sup_bound_closed_form_and_homogeneity():
    P = Params.make(3, -2.5)
    g = make_grid(10, 512)
    f = gaussian_density(g)
    b = a_sup_bound(f, 2.0, P)
    assert b == pytest.approx(a_sup_bound_numeric(f, 2.0, P), rel=1e-5)
    assert a_sup_bound(f.scaled(3.0), 2.0, P) == pytest.approx(3.0 * b, rel=1e-12)
    with pytest.raises(DomainError):
        a_sup_bound(f, P.p_min_linfty, P)
    # theta -> 1 as p decreases to the threshold
    rec = a_lower_bound(f, P, p=P.p_min_linfty * (1 + 1e-9))
    assert rec.theta == pytest.approx(1.0, abs=1e-8)


def test_a_lower_bound_properties():
    P = Params.make(3, -2.5)
    g = make_grid(12, 512)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rec = a_lower_bound(gaussian_density(g), P)
        assert rec.holds and rec.ell > 0 and 0 < rec.theta < 1
        heavier = a_lower_bound(gaussian_density(g, 1.0, 2.0), P)
        assert heavier.ell > rec.ell
        wider = a_lower_bound(gaussian_density(g, 1.5), P)
        assert wider.r_concentration > rec.r_concentration and wider.ell < rec.ell
    with pytest.raises(DomainError):
        a_lower_bound(RadialField(g, np.zeros(g.n)), P)

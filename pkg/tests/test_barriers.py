import math

import numpy as np
import pytest

from slitfb.barriers import (
    BarrierSpec,
    MaxPrincipleSpec,
    comparison_quadratic,
    comparison_quadratic_pucci,
    cone_barrier,
    eval_phi0,
    eval_series_barrier,
    hopf_barrier,
    hopf_certificate,
    hopf_min_N,
    in_cone,
    max_principle_check,
    phi0_certificate,
    phi0_hessian,
    phi0_N,
    psi_sub,
    series_certificate,
    series_upper_bound,
    series_weights,
    slit_subsolution,
)
from slitfb.elliptic import EllipticityPair, pucci_plus
from slitfb.grid import Grid, GridFunction

ELL = EllipticityPair(1, 2)


def test_phi0_values():
    assert eval_phi0(np.zeros(3), ELL) == 0.0
    assert eval_phi0(np.array([1.2, 0.0]), ELL) == 1.0
    assert eval_phi0(np.array([0.6, 0.8, 0.1]), ELL) == 1.0
    for dim in (2, 3):
        assert pucci_plus(phi0_hessian(dim, phi0_N(ELL, dim)), ELL) == 0.0


@pytest.mark.parametrize("dim, h", [(2, 1 / 16), (3, 1 / 4)])
def test_phi0_certificate(dim, h):
    cert = phi0_certificate(ELL, dim, h=h)
    assert cert.passed, cert.failed()


def test_series_reduces_to_phi0():
    rng = np.random.Generator(np.random.Philox(1))
    X = rng.uniform(-1.5, 1.5, size=(100, 2))
    np.testing.assert_allclose(eval_series_barrier(X, [1.0], ELL, 2), eval_phi0(X, ELL, 2), atol=1e-14)


def test_series_certificate_and_upper_bound():
    a = 2.0 ** -np.arange(10)
    cert = series_certificate(a, ELL, 2, j_max=6)
    assert cert.passed, cert.failed()
    # the ball bound grows with j like the partial weighted sums
    assert series_upper_bound(3, a, ELL, 2) > series_upper_bound(1, a, ELL, 2)


def test_series_weights_examples():
    k = np.arange(1, 41)
    a = 4.0 ** -k
    w = series_weights(a, tail=4.0 ** -40 / 3)
    np.testing.assert_allclose(w.b, math.sqrt(3) / 2 * 2.0 ** -k, rtol=1e-12)
    a = 2.0 ** -k
    w = series_weights(a, tail=2.0 ** -40)
    np.testing.assert_allclose(w.b, 2.0 ** (-k / 2) / math.sqrt(2), rtol=1e-12)
    assert w.bound_holds
    assert np.all(np.diff(w.ratios) > 0)


def test_series_weights_large_sum():
    w = series_weights(np.array([3.0, 1.0, 0.5]))
    assert w.bound == pytest.approx(2 * 4.5)
    with pytest.raises(ValueError):
        series_weights(np.array([1.0, -1.0]))


def test_hopf():
    rho = 0.4
    assert hopf_barrier(np.array([0.0, rho / 2]), 5.0, rho) == pytest.approx(0.0, abs=1e-15)
    N = hopf_min_N(ELL, rho, 3)
    assert N == pytest.approx(4 * 2 * 2 / rho)
    assert hopf_certificate(1.01 * N, rho, ELL, 3).passed
    assert not hopf_certificate(0.0, rho, ELL, 3).passed
    assert not hopf_certificate(0.99 * N, rho, ELL, 3).passed


def test_barrier_spec_validation():
    with pytest.raises(ValueError):
        BarrierSpec("wall")
    with pytest.raises(ValueError):
        BarrierSpec("series", weights=(1.0, -0.5))
    with pytest.raises(ValueError):
        BarrierSpec("hopf", rho=1.5)


def test_cone_functions():
    e = np.array([0.6, 0.8])
    t = np.linspace(0.1, 2, 7)
    np.testing.assert_allclose(psi_sub(t[:, None] * e, e, 0.3), t, rtol=1e-14)
    assert in_cone(np.array([[1.0, 0.0]]), np.array([1.0, 0.0]), 0.1)[0]
    assert not in_cone(np.array([[0.0, 1.0]]), np.array([1.0, 0.0]), 0.1)[0]
    # one thin dimension: the correction term vanishes
    x = np.array([[0.5], [-0.25]])
    np.testing.assert_allclose(psi_sub(x, [1.0], 0.2), x[:, 0])


@pytest.mark.parametrize("kind", ["cone_sub", "cone_super"])
def test_cone_barrier_sign_2d(kind):
    rep = cone_barrier(kind, dim=2, h=1 / 32, ell=EllipticityPair(1, 1.5))
    assert rep.sign_ok, (rep.normal_derivative_extreme, rep.message)


@pytest.mark.slow
def test_cone_barrier_sign_3d():
    rep = cone_barrier("cone_sub", dim=3, h=1 / 16, ell=EllipticityPair(1, 1.5))
    assert rep.sign_ok and rep.n_samples >= 4


def test_slit_subsolution_coarse():
    sub = slit_subsolution(rho=0.1, ell=EllipticityPair(1, 1), h=1 / 32)
    assert sub.certificate.passed, sub.certificate.failed()
    assert sub.phi.values.min() >= -1e-9
    assert sub.kappa > 0 and sub.scale >= 1


def test_comparison_quadratic():
    for dim in (2, 3):
        assert comparison_quadratic_pucci(ELL, dim) == pytest.approx(-2 * ELL.Lam)
    assert comparison_quadratic(np.array([0.3, 0.0]), np.array([0.3, 0.0]), ELL) == 0.0


def test_max_principle_verifier():
    spec = MaxPrincipleSpec(0.5, 0.1, 0.01, 1e-3)
    ell = EllipticityPair(1, 1)
    g = Grid.box(2, 1.0, 1 / 32)
    good = GridFunction.sample(g, lambda P: spec.c0 / spec.c1 * np.abs(P[:, -1]))
    v = max_principle_check(good, spec, np.flatnonzero(g.thin), ell)
    assert v.passed and v.c2_fitted >= spec.c2
    bad = GridFunction(g, np.full(g.n_nodes, -2 * spec.sigma))
    v = max_principle_check(bad, spec, [], ell)
    assert not v.passed
    assert "lower_bound_minus_sigma" in v.failed_hypotheses
    with pytest.raises(ValueError):
        max_principle_check(good, MaxPrincipleSpec(0.5, 0.5, 0.01, 1e-3), [], ell)

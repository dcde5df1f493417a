import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slitfb import exponents as ex
from slitfb.elliptic import EllipticityPair, pucci_minus, pucci_plus
from slitfb.exponents import (
    ExponentPair,
    SlitSolutionSpec,
    derivative_constant,
    find_beta,
    polar_hessian,
    solve_profile,
    w0_eval,
    write_exponent_table,
)

# values from scripts/oracle_exponents.py (adaptive DOP853 + scalar root solve)
ORACLE_BETAS = {
    1.05: (0.4844016426, 0.5154542971),
    1.1: (0.4694179051, 0.5300336849),
    1.2: (0.4411821575, 0.5568284992),
    1.5: (0.3685479291, 0.6220679892),
    2.0: (0.2783415526, 0.6971705875),
    4.0: (0.1085752727, 0.8320887291),
}
ORACLE_C_HALF = (0.32176252707069086, -0.40580017470555046)  # (plus, minus) at lambda=1, Lambda=2


def test_polar_hessian_examples():
    np.testing.assert_allclose(polar_hessian(2.0, 1.0, 0.0, 0.0), 2 * np.eye(2))
    th = 0.7
    np.testing.assert_allclose(polar_hessian(1.0, math.cos(th), -math.sin(th), -math.cos(th)), 0, atol=1e-15)
    g, dg, d2g = math.cos(th / 2), -0.5 * math.sin(th / 2), -0.25 * math.cos(th / 2)
    assert np.trace(polar_hessian(0.5, g, dg, d2g)) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(-2, 2))
def test_laplacian_profiles_closed_form(beta, b):
    prof = solve_profile(beta, EllipticityPair(1, 1), "plus", 1.0, b * beta)
    exact = np.cos(beta * prof.theta) + b * np.sin(beta * prof.theta)
    assert np.abs(prof.g - exact).max() <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-3, 3), st.floats(-3, 3), st.floats(1, 5), st.sampled_from(["plus", "minus"]))
def test_closed_form_root_solves_equation(beta, g, dg, ratio, sign):
    ell = EllipticityPair(1, ratio)
    q = ex._gpp_closed(beta, g, dg, ell.lam, ell.Lam, sign)
    H = polar_hessian(beta, g, dg, q)
    val = pucci_plus(H, ell) if sign == "plus" else pucci_minus(H, ell)
    assert abs(val) <= 1e-10 * (1 + np.abs(H).max()) * ell.Lam
    assert q == pytest.approx(ex._gpp_bisect(beta, g, dg, ell.lam, ell.Lam, sign), abs=1e-9)


@pytest.mark.parametrize("beta", [0.25, 0.4, 0.5, 0.6])
def test_derivative_constant_laplacian(beta):
    c = derivative_constant(beta, EllipticityPair(1, 1))
    assert c == pytest.approx(-beta / math.tan(beta * math.pi), abs=1e-8)


def test_derivative_constant_signs_and_oracle():
    ell = EllipticityPair(1, 2)
    cp, cm = derivative_constant(0.5, ell, "plus"), derivative_constant(0.5, ell, "minus")
    assert cp > 0 > cm
    assert cp == pytest.approx(ORACLE_C_HALF[0], abs=1e-8)
    assert cm == pytest.approx(ORACLE_C_HALF[1], abs=1e-8)


def test_shooting_paths_agree():
    ell = EllipticityPair(1, 2)
    a = derivative_constant(0.4, ell, "plus")
    b = derivative_constant(0.4, ell, "plus", warm_start=False, root="bisect")
    assert a == pytest.approx(b, abs=1e-8)


@pytest.mark.parametrize("ratio", sorted(ORACLE_BETAS))
def test_find_beta_oracle(ratio):
    ell = EllipticityPair(1, ratio)
    b1, b2 = ORACLE_BETAS[ratio]
    assert find_beta(ell, "plus") == pytest.approx(b1, abs=1e-8)
    assert find_beta(ell, "minus") == pytest.approx(b2, abs=1e-8)


def test_find_beta_scale_invariant():
    assert find_beta(EllipticityPair(3, 6)) == pytest.approx(ORACLE_BETAS[2.0][0], abs=1e-8)


def test_bracket_failure_reports_samples(monkeypatch):
    monkeypatch.setattr(ex, "BETA_BRACKET", (0.6, 0.9))
    with pytest.raises(ex.BetaSearchError) as info:
        find_beta(EllipticityPair(1, 1))
    assert len(info.value.samples) == 19


def test_ode_residual_small():
    ell = EllipticityPair(1, 2)
    b = find_beta(ell, "plus")
    prof = solve_profile(b, ell, "plus", 1.0, 0.0)
    assert prof.ode_residual() <= 1e-5
    assert abs(prof.g[-1]) <= 1e-8


def test_w0_properties():
    ell = EllipticityPair(1, 2)
    b = find_beta(ell, "plus")
    spec = SlitSolutionSpec((1.0, 0.0), "plus", b)
    assert w0_eval(np.array([1.0, 0.0, 0.0]), spec, ell) == pytest.approx(1.0)
    assert w0_eval(np.array([-0.5, 0.3, 0.0]), spec, ell) == 0.0
    rng = np.random.Generator(np.random.Philox(7))
    X = rng.normal(size=(50, 3))
    np.testing.assert_allclose(w0_eval(2 * X, spec, ell), 2 ** b * w0_eval(X, spec, ell), rtol=1e-12)
    with pytest.raises(ValueError):
        SlitSolutionSpec((1.0, 1.0), "plus", b)


def test_exponent_table(tmp_path):
    pair = ExponentPair.compute(EllipticityPair(1, 1))
    assert pair.beta1 == pytest.approx(0.5, abs=1e-6) and pair.beta2 == pytest.approx(0.5, abs=1e-6)
    path = write_exponent_table([pair], tmp_path / "t.csv")
    rows = list(csv.DictReader(path.open()))
    assert float(rows[0]["beta1"]) == pair.beta1

import json

import numpy as np
import pytest
from conftest import comparison_violation
from hypothesis import given, settings
from hypothesis import strategies as st

from slitfb.cli import explicit_laplacian
from slitfb.elliptic import EllipticityPair, Pucci
from slitfb.grid import Grid
from slitfb.solver import (
    ObstacleSpec,
    SignoriniProblem,
    extension_solve,
    residual,
    solve_signorini,
    zero_obstacle,
)

LAP = EllipticityPair(1, 1)


def test_zero_problem():
    g = Grid.box(2, 1.0, 1 / 8)
    p = SignoriniProblem(g, Pucci(LAP), 0.0, zero_obstacle())
    rep = solve_signorini(p)
    assert not rep.failed
    assert np.abs(rep.solution.values).max() == 0.0
    assert set(rep.contact_nodes) >= set(g.thin_nodes)
    assert residual(p, rep.solution) == (0.0, 0.0)


def test_explicit_solution(laplace32):
    p, rep = laplace32
    g = p.grid
    err = np.abs(rep.solution.values - explicit_laplacian(g.points)).max()
    assert err <= 0.05 * np.sqrt(g.h)
    xs = g.points[rep.contact_nodes, 0]
    assert xs.max() <= 1e-12
    left = g.thin_nodes[g.points[g.thin_nodes, 0] <= -2 * g.h]
    assert set(left) <= set(rep.contact_nodes)
    assert max(residual(p, rep.solution)) <= rep.tol


def test_linear_data_is_exact():
    g = Grid.box(3, 1.0, 1 / 4)
    a = np.array([0.3, -0.7, 0.0])
    obst = ObstacleSpec(lambda xp: xp @ a[:-1] - 1.0, 0.0)
    p = SignoriniProblem(g, Pucci(EllipticityPair(1, 3)), lambda P: P @ a, obst)
    rep = solve_signorini(p)
    assert np.abs(rep.solution.values - g.points @ a).max() <= 1e-12
    assert rep.contact_nodes.size == 0


def test_one_node_perturbation():
    g = Grid.box(2, 1.0, 1 / 8)
    ell = EllipticityPair(1, 2)
    p = SignoriniProblem(g, Pucci(ell), explicit_laplacian, zero_obstacle())
    rep = solve_signorini(p, tol=1e-10)
    u = rep.solution.values.copy()
    u[g.node_at([0.5, 0.5])] += 1.0
    assert residual(p, u)[0] >= ell.lam / g.h ** 2 - 2 * rep.tol


def test_policy_and_relaxation_agree():
    g = Grid.box(2, 1.0, 1 / 8)
    p = SignoriniProblem(g, Pucci(EllipticityPair(1, 2), "minus"), explicit_laplacian, zero_obstacle())
    a = solve_signorini(p, tol=1e-11)
    b = solve_signorini(p, tol=1e-11, method="relaxation")
    assert not a.failed and not b.failed
    assert np.abs(a.solution.values - b.solution.values).max() <= 1e-9


def test_reflected_thin_scheme_close_to_one_sided():
    g = Grid.box(2, 1.0, 1 / 16)
    kw = dict(operator=Pucci(LAP), dirichlet=explicit_laplacian, obstacle=zero_obstacle())
    a = solve_signorini(SignoriniProblem(g, **kw))
    b = solve_signorini(SignoriniProblem(g, thin_scheme="reflected", **kw))
    assert not b.failed
    assert np.abs(a.solution.values - b.solution.values).max() <= 0.05


def test_infeasible_obstacle_flagged():
    g = Grid.box(2, 1.0, 1 / 4)
    p = SignoriniProblem(g, Pucci(LAP), 0.0, ObstacleSpec(lambda xp: np.ones(len(xp)), 0.0))
    rep = solve_signorini(p)
    assert rep.failed and "obstacle above" in rep.message


def test_c11_bound_enforced():
    g = Grid.box(2, 1.0, 1 / 8)
    obst = ObstacleSpec(lambda xp: -(xp[:, 0] ** 2) - 1, c11_bound=1.0)
    with pytest.raises(ValueError):
        solve_signorini(SignoriniProblem(g, Pucci(LAP), 0.0, obst))


def test_problem_validation():
    g = Grid.box(2, 1.0, 1 / 4)
    with pytest.raises(ValueError):
        SignoriniProblem(g, Pucci(LAP), 0.0)
    with pytest.raises(ValueError):
        SignoriniProblem(g, Pucci(LAP), 0.0, mode="slit")
    with pytest.raises(ValueError):
        SignoriniProblem(Grid.box(2, 1.0, 1 / 4, symmetric_in_xn=False), Pucci(LAP), 0.0, zero_obstacle())


def test_report_json(tmp_path, laplace32):
    _, rep = laplace32
    rep.to_json(tmp_path / "r.json")
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["residuals"]["interior"] <= d["tol"]
    assert d["contact_tol"] == 10 * d["tol"]
    assert d["problem"]["mode"] == "signorini"


def test_extension_trivial_traces():
    g = Grid.box(2, 1.0, 1 / 8)
    ext = extension_solve(lambda xp: np.zeros(len(xp)), EllipticityPair(1, 2), "plus", g)
    assert np.abs(ext.solution.values).max() == 0.0
    a = 0.75
    ext = extension_solve(lambda xp: a * xp[:, 0], EllipticityPair(1, 2), "minus", g,
                          far_field=lambda P: a * P[:, 0])
    assert np.abs(ext.solution.values - a * g.points[:, 0]).max() <= 1e-12


def test_extension_barrier_brackets():
    g = Grid.box(2, 2.0, 1 / 8)
    ext = extension_solve(lambda xp: np.cos(3 * xp[:, 0]), EllipticityPair(1, 2), "plus", g, eval_radius=0.5)
    assert not ext.failed
    assert np.all(ext.lower.values <= ext.upper.values + 1e-12)
    assert ext.truncation_gap > 0


def test_harmonic_extension_converges():
    def exact(P):
        r = np.hypot(P[:, 0], P[:, 1])
        return np.sqrt(r) * np.cos(0.5 * np.arctan2(np.abs(P[:, 1]), P[:, 0]))

    errs = []
    for h in (1 / 8, 1 / 16, 1 / 32):
        g = Grid.box(2, 1.0, h)
        ext = extension_solve(lambda xp: np.sqrt(np.maximum(xp[:, 0], 0)), LAP, "plus", g, far_field=exact)
        errs.append(np.abs(ext.solution.values - exact(g.points)).max())
    assert errs[2] < errs[1] < errs[0]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_comparison_principle(seed):
    rng = np.random.Generator(np.random.Philox(seed))
    assert comparison_violation(rng) <= 1e-10

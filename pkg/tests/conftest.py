import numpy as np
import pytest

from slitfb.cli import explicit_laplacian
from slitfb.elliptic import EllipticityPair, Pucci
from slitfb.grid import Grid
from slitfb.solver import SignoriniProblem, solve_signorini, zero_obstacle

# lines collected by test_acceptance.py, echoed at the end of the session
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def laplace_signorini(h):
    grid = Grid.box(2, 1.0, h)
    p = SignoriniProblem(grid, Pucci(EllipticityPair(1, 1), "plus"), explicit_laplacian, zero_obstacle())
    return p, solve_signorini(p)


@pytest.fixture(scope="session")
def laplace32():
    return laplace_signorini(1 / 32)


@pytest.fixture(scope="session")
def laplace64():
    return laplace_signorini(1 / 64)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


def comparison_violation(rng, h=1 / 8, dim=2):
    """Solve two random ordered Signorini problems; return max(u1 - u2)."""
    from slitfb.solver import ObstacleSpec

    grid = Grid.box(dim, 1.0, h)
    lam = rng.uniform(0.5, 2.0)
    op = Pucci(EllipticityPair(lam, lam * rng.uniform(1.0, 4.0)), rng.choice(["plus", "minus"]))
    g1 = rng.normal(size=grid.n_nodes)
    g2 = g1 + rng.exponential(0.5, size=grid.n_nodes)
    # obstacles live on the thin lattice and sit below the data on the thin boundary
    thin_keys = {tuple(k): i for i, k in zip(np.flatnonzero(grid.thin), grid.index[grid.thin, :-1].tolist())}
    ph1 = np.minimum(rng.normal(size=grid.n_nodes), g1)
    ph2 = np.minimum(ph1 + rng.exponential(0.5, size=grid.n_nodes), g2)

    def obstacle(vals):
        def phi(xp):
            keys = np.rint(np.asarray(xp) / h).astype(np.int64).tolist()
            return np.array([vals[thin_keys[tuple(k)]] for k in keys])
        return ObstacleSpec(phi)

    sols = []
    for g, ph in ((g1, ph1), (g2, ph2)):
        rep = solve_signorini(SignoriniProblem(grid, op, g, obstacle(ph)), tol=1e-10)
        assert not rep.failed, rep.message
        sols.append(rep.solution.values)
    return float((sols[0] - sols[1]).max())

"""Thin obstacle (Signorini) and Dirichlet extension solves on grids.

Two routes reach the same discrete fixed point:

* ``method="policy"``: Howard policy iteration. Frame/member choices and the
  contact/no-contact choice are frozen, the resulting linear M-matrix system
  is solved with a sparse direct solver, and the choices are refreshed.
* ``method="relaxation"``: nonlinear Jacobi sweeps; each node solves its
  scalar monotone equation by bisection, thin nodes are then projected with
  ``u <- max(phi, neumann value)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elliptic import EllipticityPair, Pucci
from .grid import Grid, GridFunction
from .scheme import DirectionSet, DiscreteOperator, direction_set

DIRICHLET, PDE, PDE_REFLECT, OBST_ONESIDED, OBST_REFLECT = range(5)
MODES = ("signorini", "dirichlet", "slit")
BISECTION_STEPS = 64
STALL_ITERS = 10


@dataclass
class ObstacleSpec:
    """Obstacle ``phi(x')`` on the thin space with a declared C^{1,1} bound."""

    phi: Callable
    c11_bound: float = np.inf

    def __call__(self, xprime) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.phi(xprime), dtype=float), xprime.shape[:1]).copy()

    def on_nodes(self, grid: Grid) -> np.ndarray:
        """Obstacle extended constantly in x_n, evaluated at every node."""
        vals = self(grid.points[:, :-1])
        if not np.all(np.isfinite(vals)):
            raise ValueError("obstacle values must be finite")
        return vals

    def check_c11(self, grid: Grid) -> float:
        """Largest thin-axis second difference; raises if above the declared bound."""
        vals = self.on_nodes(grid)
        thin = np.flatnonzero(grid.thin)
        worst = 0.0
        for k in range(grid.dim - 1):
            off = np.zeros(grid.dim, dtype=np.int64)
            off[k] = 1
            p, m = grid.neighbor(thin, off), grid.neighbor(thin, -off)
            ok = (p >= 0) & (m >= 0)
            d2 = (vals[p[ok]] + vals[m[ok]] - 2 * vals[thin[ok]]) / grid.h ** 2
            if d2.size:
                worst = max(worst, float(np.abs(d2).max()))
        if worst > self.c11_bound * (1 + 1e-9) + 1e-9:
            raise ValueError(f"obstacle second differences {worst:.3g} exceed bound {self.c11_bound}")
        return worst


def zero_obstacle() -> ObstacleSpec:
    return ObstacleSpec(lambda xp: np.zeros(len(xp)), 0.0)


@dataclass
class SignoriniProblem:
    """Input bundle for a thin obstacle, Dirichlet or slit solve.

    ``dirichlet`` (callable on points, or one value per node) supplies the
    outer-boundary data, and in ``"dirichlet"`` mode also the thin trace. In
    ``"slit"`` mode thin nodes with ``slit(x')`` true take Dirichlet data and
    the remaining thin nodes are even-reflection (zero flux) nodes.
    ``source`` is the right-hand side ``f`` in ``F(D^2 u) = f``.
    """

    grid: Grid
    operator: object
    dirichlet: object
    obstacle: ObstacleSpec | None = None
    mode: str = "signorini"
    source: object = None
    thin_scheme: str = "one-sided"
    slit: Callable | None = None
    directions: DirectionSet | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.thin_scheme not in ("one-sided", "reflected"):
            raise ValueError("thin_scheme must be 'one-sided' or 'reflected'")
        if self.mode == "signorini":
            if not self.grid.symmetric_in_xn:
                raise ValueError("signorini mode needs a grid symmetric in x_n")
            if self.obstacle is None:
                raise ValueError("signorini mode needs an obstacle")
        if self.mode == "slit" and self.slit is None:
            raise ValueError("slit mode needs a slit predicate")
        if self.directions is None:
            self.directions = direction_set(self.grid.dim)

    @property
    def ell(self) -> EllipticityPair:
        return self.operator.ell

    def roles(self) -> np.ndarray:
        g = self.grid
        roles = np.full(g.n_nodes, PDE, dtype=np.int8)
        roles[g.outer] = DIRICHLET
        thin = g.thin_nodes
        if self.mode == "signorini":
            roles[thin] = OBST_ONESIDED if self.thin_scheme == "one-sided" else OBST_REFLECT
        elif self.mode == "dirichlet":
            if g.symmetric_in_xn:
                roles[thin] = DIRICHLET
        else:
            on_slit = np.asarray(self.slit(g.points[thin, :-1]), dtype=bool)
            roles[thin] = np.where(on_slit, DIRICHLET, PDE_REFLECT)
        return roles

    def dirichlet_values(self) -> np.ndarray:
        d = self.dirichlet
        vals = np.asarray(d(self.grid.points) if callable(d) else d, dtype=float)
        vals = np.broadcast_to(vals, (self.grid.n_nodes,)).copy()
        mask = self.roles() == DIRICHLET
        if not np.all(np.isfinite(vals[mask])):
            raise ValueError("Dirichlet data must be finite")
        vals[~mask] = 0.0
        return vals

    def source_values(self) -> np.ndarray:
        f = self.source
        if f is None:
            return np.zeros(self.grid.n_nodes)
        vals = np.asarray(f(self.grid.points) if callable(f) else f, dtype=float)
        return np.broadcast_to(vals, (self.grid.n_nodes,)).copy()

    def describe(self) -> dict:
        return {
            "grid": self.grid.describe(),
            "operator": self.operator.describe(),
            "mode": self.mode,
            "thin_scheme": self.thin_scheme,
            "n_frames": len(self.directions.frames),
        }


@dataclass
class SolveReport:
    solution: GridFunction
    iterations: int
    interior_residual: float
    complementarity_residual: float
    contact_nodes: np.ndarray
    failed: bool
    tol: float
    contact_tol: float
    method: str
    message: str = ""
    problem: dict = field(default_factory=dict)
    obstacle: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "residuals": {
                "interior": self.interior_residual,
                "complementarity": self.complementarity_residual,
            },
            "contact_nodes": [int(i) for i in self.contact_nodes],
            "failed": bool(self.failed),
            "message": self.message,
            "tol": self.tol,
            "contact_tol": self.contact_tol,
            "method": self.method,
            "problem": self.problem,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


class _Discrete:
    """Everything a solve needs, precomputed once per problem."""

    def __init__(self, p: SignoriniProblem):
        self.p = p
        g = p.grid
        self.roles = p.roles()
        self.g = p.dirichlet_values()
        self.f = p.source_values()
        op_nodes_mask = np.isin(self.roles, (PDE, PDE_REFLECT, OBST_REFLECT))
        self.op_nodes = np.flatnonzero(op_nodes_mask)
        reflect = self.roles[self.op_nodes] != PDE
        self.D = DiscreteOperator(g, p.operator, p.directions, self.op_nodes, reflect)
        self.op_role = self.roles[self.op_nodes]
        self.dir_nodes = np.flatnonzero(self.roles == DIRICHLET)
        self.one_nodes = np.flatnonzero(self.roles == OBST_ONESIDED)
        up = np.zeros(g.dim, dtype=np.int64)
        up[-1] = 1
        self.above = g.neighbor(self.one_nodes, up)
        if np.any(self.above < 0):
            raise ValueError("thin nodes without a node above")
        self.obst_nodes = np.flatnonzero(np.isin(self.roles, (OBST_ONESIDED, OBST_REFLECT)))
        if p.obstacle is not None:
            self.phi = p.obstacle.on_nodes(g)
        else:
            self.phi = np.full(g.n_nodes, -np.inf)
        self.refl_obst = self.op_role == OBST_REFLECT

    def initial(self):
        u = self.g.copy()
        obst = self.obst_nodes
        u[obst] = np.maximum(self.phi[obst], 0.0)
        return u

    def infeasible(self):
        """Thin Dirichlet nodes where the obstacle is above the data."""
        if self.p.mode != "signorini":
            return np.array([], dtype=np.int64)
        thin_dir = self.dir_nodes[self.p.grid.thin[self.dir_nodes]]
        return thin_dir[self.phi[thin_dir] > self.g[thin_dir] + 1e-12]

    def residuals(self, u):
        F = self.D.evaluate(u) - self.f[self.op_nodes]
        pde = ~self.refl_obst
        interior = float(np.abs(F[pde]).max(initial=0.0))
        comp = 0.0
        if self.one_nodes.size:
            a = (u[self.one_nodes] - u[self.above]) / self.p.grid.h
            b = u[self.one_nodes] - self.phi[self.one_nodes]
            comp = float(np.abs(np.minimum(a, b)).max())
        if self.refl_obst.any():
            nodes = self.op_nodes[self.refl_obst]
            r = np.minimum(-F[self.refl_obst], u[nodes] - self.phi[nodes])
            comp = max(comp, float(np.abs(r).max()))
        return interior, comp


def _policy_iteration(d: _Discrete, u, tol, max_iters):
    g = d.p.grid
    N = g.n_nodes
    h = g.h
    last = None
    it = 0
    best, stall = np.inf, 0
    for it in range(1, max_iters + 1):
        F, C = d.D.policy(u)
        F = F - d.f[d.op_nodes]
        # contact choices
        one_contact = np.zeros(d.one_nodes.size, dtype=bool)
        if d.one_nodes.size:
            a = (u[d.one_nodes] - u[d.above]) / h
            b = u[d.one_nodes] - d.phi[d.one_nodes]
            one_contact = b <= a
        refl_contact = np.zeros(d.op_nodes.size, dtype=bool)
        if d.refl_obst.any():
            b = u[d.op_nodes] - d.phi[d.op_nodes]
            refl_contact = d.refl_obst & (b <= -F)
        key = (C.tobytes(), one_contact.tobytes(), refl_contact.tobytes())
        # tied frame choices can make the policy cycle between equivalent
        # systems, so the residual test is needed besides policy repetition
        res = max(d.residuals(u)) if it > 1 else np.inf
        if key == last or res <= 0.1 * tol:
            return u, it - 1, True
        # near roundoff the policy can wander without lowering the residual
        best, stall = (res, 0) if res < 0.5 * best else (best, stall + 1)
        if stall >= STALL_ITERS:
            return u, it - 1, False
        last = key
        rows, cols, vals = [], [], []
        rhs = np.zeros(N)
        # Dirichlet rows and contact rows: identity
        fixed = np.concatenate([d.dir_nodes, d.one_nodes[one_contact], d.op_nodes[refl_contact]])
        rows.append(fixed)
        cols.append(fixed)
        vals.append(np.ones(fixed.size))
        rhs[d.dir_nodes] = d.g[d.dir_nodes]
        rhs[d.one_nodes[one_contact]] = d.phi[d.one_nodes[one_contact]]
        rhs[d.op_nodes[refl_contact]] = d.phi[d.op_nodes[refl_contact]]
        # operator rows (sign flipped so the diagonal is positive)
        active = ~refl_contact
        r, c, v = d.D.linear_rows(C)
        keep = active[r]
        rows.append(d.op_nodes[r[keep]])
        cols.append(c[keep])
        vals.append(-v[keep])
        rhs[d.op_nodes[active]] = -d.f[d.op_nodes[active]]
        # one-sided zero-flux rows: u - u_above = 0
        free = d.one_nodes[~one_contact]
        rows += [free, free]
        cols += [free, d.above[~one_contact]]
        vals += [np.ones(free.size), -np.ones(free.size)]
        A = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
        )
        new = spla.spsolve(A.tocsc(), rhs)
        moved = np.abs(new - u).max()
        u = new
        if moved <= 1e-13 * (1.0 + np.abs(u).max()):
            return u, it, True
    return u, it, False


def _bisect_nodes(d: _Discrete, u):
    """Solve F(u with u(node)=t) = f for t at every operator node."""
    D = d.D
    S = D.neighbor_sums(u)
    half = np.where(D.fits, S / 2, np.nan)
    smin, _ = D.center_slope_bounds()
    f = d.f[d.op_nodes]
    pad = np.abs(f) / smin
    lo = np.nanmin(half, axis=1) - pad
    hi = np.nanmax(half, axis=1) + pad
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        up = D.evaluate_center(S, mid) - f > 0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    return 0.5 * (lo + hi)


def _relaxation(d: _Discrete, u, tol, max_iters, check_every=10):
    it = 0
    for it in range(1, max_iters + 1):
        new = u.copy()
        t = _bisect_nodes(d, u)
        nodes = d.op_nodes
        refl = d.refl_obst
        new[nodes[~refl]] = t[~refl]
        new[nodes[refl]] = np.maximum(d.phi[nodes[refl]], t[refl])
        if d.one_nodes.size:
            new[d.one_nodes] = np.maximum(d.phi[d.one_nodes], u[d.above])
        u = new
        if it % check_every == 0:
            ri, rc = d.residuals(u)
            if ri <= tol and rc <= tol:
                return u, it, True
    ri, rc = d.residuals(u)
    return u, it, ri <= tol and rc <= tol


def solve_signorini(
    p: SignoriniProblem,
    tol: float = 1e-8,
    max_iters: int | None = None,
    method: str = "policy",
    contact_tol: float | None = None,
    initial=None,
) -> SolveReport:
    """Solve the discrete problem; non-convergence returns a report flagged failed."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if p.mode == "signorini":
        p.obstacle.check_c11(p.grid)
    d = _Discrete(p)
    contact_tol = 10 * tol if contact_tol is None else contact_tol
    u = d.initial() if initial is None else np.array(initial, dtype=float)
    u[d.dir_nodes] = d.g[d.dir_nodes]
    bad = d.infeasible()
    if bad.size:
        return SolveReport(
            GridFunction(p.grid, np.where(np.isfinite(u), u, 0.0)), 0, np.inf, np.inf,
            np.array([], dtype=np.int64), True, tol, contact_tol, method,
            f"obstacle above Dirichlet data at {bad.size} thin boundary nodes", p.describe(),
        )
    if method == "policy":
        u, iters, _ = _policy_iteration(d, u, tol, max_iters or 200)
    elif method == "relaxation":
        u, iters, _ = _relaxation(d, u, tol, max_iters or 200000)
    else:
        raise ValueError(f"unknown method {method!r}")
    ri, rc = d.residuals(u)
    failed = not (ri <= tol and rc <= tol) or not np.all(np.isfinite(u))
    contact = d.obst_nodes[u[d.obst_nodes] - d.phi[d.obst_nodes] <= contact_tol]
    msg = "" if not failed else f"residuals ({ri:.3g}, {rc:.3g}) above tol after {iters} iterations"
    return SolveReport(
        GridFunction(p.grid, np.where(np.isfinite(u), u, 0.0)), iters, ri, rc, contact,
        failed, tol, contact_tol, method, msg, p.describe(),
        d.phi.copy() if p.obstacle is not None else None,
    )


def residual(p: SignoriniProblem, u) -> tuple:
    """(interior residual, complementarity residual) in the max norm."""
    vals = u.values if isinstance(u, GridFunction) else np.asarray(u, dtype=float)
    return _Discrete(p).residuals(vals)


@dataclass
class Extension:
    """Bracketed Dirichlet extension: ``lower <= solution <= upper``."""

    solution: GridFunction
    lower: GridFunction
    upper: GridFunction
    truncation_gap: float
    eval_radius: float
    far_field: str
    reports: list

    @property
    def failed(self) -> bool:
        return any(r.failed for r in self.reports)


def _series_far_field(g, grid: Grid, ell):
    from .barriers import eval_series_barrier

    thin = np.flatnonzero(grid.thin)
    xp = grid.points[thin, :-1]
    r = np.linalg.norm(xp, axis=1)
    gv = np.abs(np.asarray(g(xp), dtype=float))
    base = float(gv[r <= 1 + 1e-12].max(initial=0.0))
    n_shells = max(1, int(np.ceil(np.log2(max(r.max(), 1.0)))) + 1)
    a = np.zeros(n_shells)
    for i in range(n_shells):
        shell = (r >= 2.0 ** i - 1e-12) & (r <= 2.0 ** (i + 1) + 1e-12)
        a[i] = 2.0 ** -i * float(gv[shell].max(initial=0.0))

    def barrier(P):
        return base + eval_series_barrier(P, a, ell, grid.dim)

    return barrier


def extension_solve(
    g: Callable,
    ell: EllipticityPair,
    sign: str,
    grid: Grid,
    far_field="barrier",
    tol: float = 1e-8,
    eval_radius: float | None = None,
    directions: DirectionSet | None = None,
    method: str = "policy",
) -> Extension:
    """Discrete M+/- extension of the thin trace ``g(x')`` into x_n > 0.

    ``far_field="barrier"`` runs the solve twice with outer data +/- the
    series barrier built from |g| and returns the midpoint; the bracket width
    over ``B_{eval_radius}`` is the truncation gap. A callable ``far_field``
    supplies exact outer data instead (single run, zero gap).
    """
    if not grid.symmetric_in_xn:
        raise ValueError("extension grids cover the half space x_n >= 0")
    op = Pucci(ell, sign)
    thin = grid.thin

    def data(outer):
        def fn(P):
            vals = np.asarray(outer(P), dtype=float).copy()
            vals[thin] = np.asarray(g(P[thin, :-1]), dtype=float)
            return vals
        return fn

    eval_radius = min(grid.extent) / 4 if eval_radius is None else eval_radius
    if callable(far_field):
        p = SignoriniProblem(grid, op, data(far_field), mode="dirichlet", directions=directions)
        rep = solve_signorini(p, tol=tol, method=method)
        return Extension(rep.solution, rep.solution, rep.solution, 0.0, eval_radius, "exact", [rep])
    if far_field != "barrier":
        raise ValueError("far_field must be 'barrier' or a callable")
    barrier = _series_far_field(g, grid, ell)
    runs = []
    for s in (1.0, -1.0):
        p = SignoriniProblem(
            grid, op, data(lambda P, s=s: s * barrier(P)), mode="dirichlet", directions=directions
        )
        runs.append(solve_signorini(p, tol=tol, method=method))
    up, lo = runs[0].solution.values, runs[1].solution.values
    region = np.linalg.norm(grid.points, axis=1) <= eval_radius + 1e-12
    gap = float((up - lo)[region].max(initial=0.0))
    mid = GridFunction(grid, 0.5 * (up + lo))
    return Extension(mid, runs[1].solution, runs[0].solution, gap, eval_radius, "barrier", runs)

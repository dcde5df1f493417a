"""Homogeneous slit solutions r^beta g(theta) of the 2D Pucci equations.

A function ``u = r^beta g(theta)`` on the upper half plane solves
``M(D^2 u) = 0`` iff the angular profile solves an implicit second order ODE;
the polar Hessian at ``r = 1`` is

    [[beta (beta - 1) g, (beta - 1) g'], [(beta - 1) g', g'' + beta g]].

Given ``(g, g')`` the equation ``M(H) = 0`` is solved for ``g''`` in closed
form (see ``_gpp_closed``); a bisection version is kept as a cross-check.
Profiles with ``g(0) = 1`` and ``g(pi) = 0`` have trace ``x_+^beta`` and
normal derivative ``g'(0) x^(beta - 1)`` on the positive axis, so the
critical exponents are the roots of ``beta -> g'(0)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .elliptic import EllipticityPair

N_STEPS = 2048
BETA_BRACKET = (0.05, 0.95)
G_CAP = 1e8


class ShootingError(RuntimeError):
    pass


class BetaSearchError(RuntimeError):
    """No sign change of the derivative constant; ``samples`` holds the curve."""

    def __init__(self, msg, samples):
        super().__init__(msg)
        self.samples = samples


def polar_hessian(beta, g, dg, d2g) -> np.ndarray:
    """Hessian of r^beta g(theta) at r=1 in the (e_r, e_theta) frame."""
    off = (beta - 1.0) * dg
    return np.array([[beta * (beta - 1.0) * g, off], [off, d2g + beta * g]])


def _pucci2(p, b, q, lam, Lam, sign):
    mean = 0.5 * (p + q)
    rad = math.hypot(0.5 * (p - q), b)
    e1, e2 = mean - rad, mean + rad
    hi, lo = (Lam, lam) if sign == "plus" else (lam, Lam)
    return sum(hi * e if e > 0 else lo * e for e in (e1, e2))


def _gpp_closed(beta, g, dg, lam, Lam, sign):
    # With H_rr = p, H_rt = b fixed, M(H) = 0 forces eigenvalues (-m, r m),
    # m >= 0, r = lam/Lam (plus) or Lam/lam (minus); trace and determinant
    # give r m^2 + p (r - 1) m - (p^2 + b^2) = 0.
    p = beta * (beta - 1.0) * g
    b = (beta - 1.0) * dg
    r = lam / Lam if sign == "plus" else Lam / lam
    c = p * (r - 1.0)
    m = (-c + math.sqrt(c * c + 4.0 * r * (p * p + b * b))) / (2.0 * r)
    return m * (r - 1.0) - p - beta * g


def _gpp_bisect(beta, g, dg, lam, Lam, sign, tol=1e-12):
    p = beta * (beta - 1.0) * g
    b = (beta - 1.0) * dg
    R = (Lam / lam) * (abs(p) + 2.0 * abs(b) + abs(beta * g)) + 1.0
    lo, hi = -R, R
    f = lambda x: _pucci2(p, b, x + beta * g, lam, Lam, sign)  # increasing in x
    if f(lo) > 0 or f(hi) < 0:
        raise ShootingError(f"g'' bracket failed at g={g}, g'={dg}")
    while hi - lo > tol * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _integrate(beta, lam, Lam, sign, g0, dg0, theta0, theta1, n, root):
    gpp = _gpp_closed if root == "closed" else _gpp_bisect
    k = (theta1 - theta0) / n

    def rhs(y0, y1):
        return y1, gpp(beta, y0, y1, lam, Lam, sign)

    th = theta0 + k * np.arange(n + 1)
    G = np.empty(n + 1)
    DG = np.empty(n + 1)
    y0, y1 = float(g0), float(dg0)
    G[0], DG[0] = y0, y1
    for i in range(n):
        a0, a1 = rhs(y0, y1)
        b0, b1 = rhs(y0 + 0.5 * k * a0, y1 + 0.5 * k * a1)
        c0, c1 = rhs(y0 + 0.5 * k * b0, y1 + 0.5 * k * b1)
        d0, d1 = rhs(y0 + k * c0, y1 + k * c1)
        y0 += k / 6.0 * (a0 + 2 * b0 + 2 * c0 + d0)
        y1 += k / 6.0 * (a1 + 2 * b1 + 2 * c1 + d1)
        if not (abs(y0) < G_CAP and abs(y1) < G_CAP):
            raise ShootingError(f"profile blew up near theta={th[i + 1]:.4f}")
        G[i + 1], DG[i + 1] = y0, y1
    return th, G, DG


@dataclass
class AngularProfile:
    beta: float
    sign: str
    ell: EllipticityPair
    theta: np.ndarray
    g: np.ndarray
    dg: np.ndarray

    def __post_init__(self):
        self._spline = CubicHermiteSpline(self.theta, self.g, self.dg)

    def __call__(self, theta):
        return self._spline(np.clip(theta, self.theta[0], self.theta[-1]))

    def second_derivative(self) -> np.ndarray:
        return np.array([
            _gpp_closed(self.beta, g, d, self.ell.lam, self.ell.Lam, self.sign)
            for g, d in zip(self.g, self.dg)
        ])

    def ode_residual(self) -> float:
        """max |M(H)| at interior samples with g'' from differencing g'."""
        k = self.theta[1] - self.theta[0]
        d2 = (self.dg[2:] - self.dg[:-2]) / (2 * k)
        res = [
            _pucci2(*_entries(self.beta, g, d, dd), self.ell.lam, self.ell.Lam, self.sign)
            for g, d, dd in zip(self.g[1:-1], self.dg[1:-1], d2)
        ]
        return float(np.max(np.abs(res)))


def _entries(beta, g, dg, d2g):
    H = polar_hessian(beta, g, dg, d2g)
    return H[0, 0], H[0, 1], H[1, 1]


def solve_profile(beta, ell: EllipticityPair, sign="plus", g0=1.0, dg0=0.0,
                  theta_end=math.pi, n_steps=None, root="closed") -> AngularProfile:
    """Integrate the angular ODE from theta=0 with RK4 (step pi/2048)."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if not 0 < theta_end <= math.pi + 1e-15:
        raise ValueError("theta_end must lie in (0, pi]")
    if sign not in ("plus", "minus"):
        raise ValueError("sign must be 'plus' or 'minus'")
    n = n_steps or max(1, math.ceil(theta_end / (math.pi / N_STEPS) - 1e-9))
    th, G, DG = _integrate(beta, ell.lam, ell.Lam, sign, g0, dg0, 0.0, theta_end, n, root)
    return AngularProfile(float(beta), sign, ell, th, G, DG)


def _end_value(beta, ell, sign, s, root):
    _, G, _ = _integrate(beta, ell.lam, ell.Lam, sign, 1.0, s, 0.0, math.pi, N_STEPS, root)
    return G[-1]


def _warm_start(beta, ell, sign, root):
    # integrate back from theta=pi with g=0, g'=-1; positive homogeneity of
    # the ODE turns the landing state into a slope estimate at theta=0
    _, G, DG = _integrate(beta, ell.lam, ell.Lam, sign, 0.0, -1.0, math.pi, 0.0, N_STEPS, root)
    if G[-1] <= 0:
        return None
    return DG[-1] / G[-1]


def derivative_constant(beta, ell: EllipticityPair, sign="plus", tol=1e-10,
                        warm_start=True, root="closed", max_iter=100) -> float:
    """g'(0) of the profile with g(0)=1, g(pi)=0 (shooting on g'(0))."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    f = lambda s: _end_value(beta, ell, sign, s, root)
    s0 = _warm_start(beta, ell, sign, root) if warm_start else None
    if s0 is None:
        s0 = 0.0
    f0 = f(s0)
    if abs(f0) <= tol:
        return float(s0)
    s1 = s0 + (1e-3 if f0 < 0 else -1e-3)
    f1 = f(s1)
    # secant iteration, keeping a bracket for the bisection fallback
    lo = hi = None
    for s, v in ((s0, f0), (s1, f1)):
        if v < 0:
            lo = s if lo is None else max(lo, s)
        else:
            hi = s if hi is None else min(hi, s)
    for _ in range(max_iter):
        if abs(f1) <= tol:
            return float(s1)
        if f1 != f0:
            s2 = s1 - f1 * (s1 - s0) / (f1 - f0)
        else:
            s2 = s1 + (1.0 if f1 < 0 else -1.0)
        if lo is not None and hi is not None and not (lo < s2 < hi):
            s2 = 0.5 * (lo + hi)
        s0, f0 = s1, f1
        s1, f1 = s2, f(s2)
        if f1 < 0:
            lo = s1 if lo is None else max(lo, s1)
        else:
            hi = s1 if hi is None else min(hi, s1)
    raise ShootingError(f"shooting did not converge at beta={beta} (g(pi)={f1:.3g})")


def find_beta(ell: EllipticityPair, sign="plus", tol=1e-10) -> float:
    """Root of beta -> derivative_constant on (0.05, 0.95): beta1 (plus) or beta2 (minus)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    f = lambda b: derivative_constant(b, ell, sign)
    a, b = BETA_BRACKET
    fa, fb = f(a), f(b)
    if fa * fb > 0:
        grid = np.linspace(a, b, 19)
        raise BetaSearchError(
            f"no sign change on {BETA_BRACKET}", [(float(x), f(x)) for x in grid]
        )
    return float(brentq(f, a, b, xtol=tol, rtol=4 * np.finfo(float).eps))


@dataclass
class ExponentPair:
    beta1: float
    beta2: float
    ell: EllipticityPair
    tol: float = 1e-10

    def __post_init__(self):
        if not 0 < self.beta1 <= 0.5 + 1e-6 and 0.5 - 1e-6 <= self.beta2 < 1:
            raise ValueError(f"exponents out of order: {self.beta1}, {self.beta2}")

    @classmethod
    def compute(cls, ell: EllipticityPair, tol=1e-10) -> "ExponentPair":
        return cls(find_beta(ell, "plus", tol), find_beta(ell, "minus", tol), ell, tol)

    def as_row(self) -> dict:
        return {
            "lambda": self.ell.lam,
            "Lambda": self.ell.Lam,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "C_bar_half": derivative_constant(0.5, self.ell, "plus"),
            "C_under_half": derivative_constant(0.5, self.ell, "minus"),
            "tol": self.tol,
        }


TABLE_COLUMNS = ("lambda", "Lambda", "beta1", "beta2", "C_bar_half", "C_under_half", "tol")


def write_exponent_table(pairs, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_COLUMNS)
        for pair in pairs:
            row = pair.as_row()
            w.writerow([repr(float(row[c])) for c in TABLE_COLUMNS])
    return path


@dataclass(frozen=True)
class SlitSolutionSpec:
    """w0(x) = r^beta g(theta) in the plane spanned by e and e_n."""

    direction: tuple
    sign: str
    exponent: float

    def __post_init__(self):
        e = np.asarray(self.direction, dtype=float)
        if e.ndim != 1 or e.size < 1 or abs(np.linalg.norm(e) - 1) > 1e-12:
            raise ValueError("direction must be a unit vector in the thin space")
        if self.sign not in ("plus", "minus"):
            raise ValueError("sign must be 'plus' or 'minus'")
        object.__setattr__(self, "direction", tuple(float(c) for c in e))


@lru_cache(maxsize=64)
def _slit_profile(beta, lam, Lam, sign):
    ell = EllipticityPair(lam, Lam)
    c = derivative_constant(beta, ell, sign)
    return solve_profile(beta, ell, sign, 1.0, c)


def w0_eval(x, spec: SlitSolutionSpec, ell: EllipticityPair):
    """Slit solution at points ``x`` (last coordinate x_n); vectorized over rows."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    e = np.asarray(spec.direction)
    if X.shape[1] != e.size + 1:
        raise ValueError("point dimension must be len(direction) + 1")
    s = X[:, :-1] @ e
    y = np.abs(X[:, -1])
    r = np.hypot(s, y)
    th = np.arctan2(y, s)
    prof = _slit_profile(float(spec.exponent), ell.lam, ell.Lam, spec.sign)
    val = np.where(r > 0, r ** spec.exponent * prof(th), 0.0)
    val = np.where((y == 0) & (s <= 0), 0.0, val)
    return float(val[0]) if single else val


@dataclass
class GridExponentReport:
    beta_grid: float
    beta_ode: float
    h: float
    fit_range: tuple
    n_points: int
    solve_failed: bool
    details: dict = field(default_factory=dict)


def grid_slit_exponent(ell: EllipticityPair, sign="plus", h=1 / 128, fit_range=(0.125, 0.5),
                       outer="profile", n_frames=None) -> GridExponentReport:
    """Exponent of the slit solution measured on a half-disc grid.

    Solves ``M(D^2 u) = 0`` on the upper half disc with u = 0 on the slit
    {x <= 0, y = 0}, zero flux on {x > 0, y = 0} and outer data on the
    circle, then fits the log-log slope of u along the positive axis.
    ``outer="profile"`` uses the ODE profile g(theta) on the circle;
    ``outer="generic"`` uses cos(theta/2), whose solution is homogeneous
    only to leading order.
    """
    from .elliptic import Pucci
    from .grid import Grid
    from .scheme import direction_set
    from .solver import SignoriniProblem, solve_signorini

    beta = find_beta(ell, sign)
    spec = SlitSolutionSpec((1.0,), sign, beta)
    if outer == "profile":
        data = lambda P: w0_eval(P, spec, ell)
    elif outer == "generic":
        data = lambda P: np.where(
            (P[:, 1] == 0) & (P[:, 0] <= 0), 0.0,
            np.hypot(P[:, 0], P[:, 1]) ** 0.5 * np.cos(0.5 * np.arctan2(P[:, 1], P[:, 0])),
        )
    else:
        raise ValueError("outer must be 'profile' or 'generic'")
    grid = Grid.half_ball(2, 1.0, h)
    prob = SignoriniProblem(
        grid, Pucci(ell, sign), data, mode="slit", slit=lambda xp: xp[:, 0] <= 0,
        directions=direction_set(2, n_frames),
    )
    rep = solve_signorini(prob, tol=1e-9)
    P = grid.points
    sel = grid.thin & (P[:, 0] >= fit_range[0] - 1e-12) & (P[:, 0] <= fit_range[1] + 1e-12)
    xs, us = P[sel, 0], rep.solution.values[sel]
    slope = float(np.polyfit(np.log(xs), np.log(us), 1)[0])
    return GridExponentReport(slope, beta, h, tuple(fit_range), int(sel.sum()), rep.failed,
                              {"iterations": rep.iterations, "outer": outer})

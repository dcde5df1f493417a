"""Explicit barriers and numerical certificates for their inequalities.

Each certificate is a list of named conditions with the worst violation
found and where it occurred; a certificate passes when every condition does.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .elliptic import EllipticityPair, Pucci, pucci_minus, pucci_plus
from .grid import Grid, GridFunction
from .scheme import DiscreteOperator, direction_set, discrete_extremal


# -- certificates ----------------------------------------------------------------


@dataclass
class Condition:
    name: str
    satisfied: bool
    worst_violation: float
    location: list | None = None


@dataclass
class Certificate:
    barrier: str
    conditions: list = field(default_factory=list)
    data: dict = field(default_factory=dict)

    def add(self, name, violation, location=None, tol=0.0):
        """Record a condition; ``violation`` > tol means it fails."""
        violation = float(violation)
        loc = None if location is None else [float(c) for c in np.atleast_1d(location)]
        self.conditions.append(Condition(name, bool(violation <= tol), violation, loc))

    @property
    def passed(self) -> bool:
        return all(c.satisfied for c in self.conditions)

    def failed(self) -> list:
        return [c.name for c in self.conditions if not c.satisfied]

    def to_dict(self) -> dict:
        return {"barrier": self.barrier, "conditions": [asdict(c) for c in self.conditions],
                "passed": self.passed, "data": self.data}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _worst(values, points):
    """(max value, point where attained); (-inf, None) for empty input."""
    if values.size == 0:
        return -np.inf, None
    k = int(np.argmax(values))
    return float(values[k]), points[k]


@dataclass(frozen=True)
class BarrierSpec:
    """Parameters of one barrier; only the fields used by ``kind`` matter."""

    kind: str
    dim: int = 2
    N: float | None = None
    weights: tuple = ()
    rho: float = 0.1
    center: tuple = (0.5,)
    radius: float = 0.25
    eta: float = 0.1
    gamma: float | None = None
    direction: tuple = (1.0,)

    KINDS = ("phi0", "series", "slit_subsol", "hopf", "cone_sub", "cone_super")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"kind must be one of {self.KINDS}")
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.kind == "series" and (any(a < 0 for a in self.weights) or not self.weights):
            raise ValueError("series weights must be a nonempty nonnegative sequence")
        if self.kind in ("slit_subsol", "hopf") and not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if self.kind.startswith("cone") and self.eta <= 0:
            raise ValueError("eta must be positive")


# -- phi0 and the series barrier ----------------------------------------------------


def phi0_N(ell: EllipticityPair, dim: int) -> float:
    return (dim - 1) * ell.Lam / ell.lam


def eval_phi0(x, ell: EllipticityPair, dim: int | None = None, N: float | None = None):
    """min{1, |x'|^2 + N(2|x_n| - x_n^2)} inside |x'| <= 1, |x_n| <= 1; 1 elsewhere."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    dim = X.shape[1] if dim is None else dim
    N = phi0_N(ell, dim) if N is None else N
    xp2 = (X[:, :-1] ** 2).sum(1)
    t = np.abs(X[:, -1])
    inside = (xp2 <= 1.0) & (t <= 1.0)
    val = np.where(inside, np.minimum(1.0, xp2 + N * (2 * t - t * t)), 1.0)
    return float(val[0]) if single else val


def phi0_hessian(dim: int, N: float) -> np.ndarray:
    """Exact Hessian of the quadratic branch (constant)."""
    return np.diag([2.0] * (dim - 1) + [-2.0 * N])


def phi0_certificate(ell: EllipticityPair, dim=2, h=1 / 32, tol=1e-12, n_samples=2000, seed=0):
    """Exact-Hessian and discrete supersolution checks for phi0."""
    N = phi0_N(ell, dim)
    cert = Certificate("phi0", data={"N": N, "dim": dim, "h": h})
    cert.add("smooth_branch_exact", abs(pucci_plus(phi0_hessian(dim, N), ell)), tol=tol)
    rng = np.random.Generator(np.random.Philox(seed))
    X = rng.uniform(-2, 2, size=(n_samples, dim))
    X[:, -1] = np.abs(X[:, -1])
    low = np.minimum(1.0, (X ** 2).sum(1)) - eval_phi0(X, ell, dim)
    cert.add("lower_bound_min_1_r2", *_clip_worst(low, X), tol)
    # discrete scheme on a half box: the min of the quadratic and 1 needs no collar
    # because the monotone scheme of a minimum is below the scheme of either piece
    grid = Grid.box(dim, 2.0, h)
    f = GridFunction.sample(grid, lambda P: eval_phi0(P, ell, dim))
    nodes, vals = discrete_extremal(f, ell, direction_set(dim), "plus")
    w, loc = _worst(vals, grid.points[nodes])
    cert.add("discrete_supersolution", max(w, 0.0), loc, 1e-9)
    return cert


def _clip_worst(v, P):
    w, loc = _worst(v, P)
    return max(w, 0.0), loc


def eval_series_barrier(x, a, ell: EllipticityPair, dim: int | None = None, tail_sum: float = 0.0,
                        rtol: float | None = 1e-8):
    """sum_i 2^i a_i phi0(2^{-i} x) over the given prefix of weights.

    ``tail_sum`` declares sum_{i > k} a_i for the omitted terms; their total
    is bounded by (1 + 2N)|x| tail_sum and must be below ``rtol`` times the
    partial sum (pass ``rtol=None`` to skip that check).
    """
    a = np.asarray(a, dtype=float)
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise ValueError("weights must be finite and nonnegative")
    if not (np.isfinite(tail_sum) and tail_sum >= 0):
        raise ValueError("tail sum must be finite and nonnegative")
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    dim = X.shape[1] if dim is None else dim
    val = np.zeros(X.shape[0])
    for i, ai in enumerate(a):
        if ai:
            val += 2.0 ** i * ai * eval_phi0(X / 2.0 ** i, ell, dim)
    if tail_sum and rtol is not None:
        bound = series_tail_bound(X, ell, dim, tail_sum)
        if np.any(bound > rtol * val):
            raise ValueError("declared tail is too large for the requested tolerance")
    return float(val[0]) if single else val


def series_tail_bound(x, ell, dim, tail_sum):
    N = phi0_N(ell, dim)
    return (1 + 2 * N) * np.linalg.norm(np.atleast_2d(x), axis=1) * tail_sum


def series_upper_bound(j, a, ell, dim):
    """Bound for the series barrier on the closed half ball of radius 2^j.

    Terms with i <= j are at most 2^i a_i, and terms with i > j at most
    (1 + 2N) 2^j a_i because phi0(y) <= (1 + 2N)|y|.
    """
    a = np.asarray(a, dtype=float)
    N = phi0_N(ell, dim)
    i = np.arange(a.size)
    return float((2.0 ** i * a)[i <= j].sum() + (1 + 2 * N) * 2.0 ** j * a[i > j].sum())


def series_certificate(a, ell: EllipticityPair, dim=2, j_max=6, n_samples=400, seed=0, tol=1e-12):
    """Annulus lower bounds and ball upper bounds at random and boundary samples."""
    a = np.asarray(a, dtype=float)
    rng = np.random.Generator(np.random.Philox(seed))
    cert = Certificate("series", data={"weights": a.tolist(), "j_max": j_max})
    for j in range(j_max + 1):
        u = rng.normal(size=(n_samples, dim))
        u[:, -1] = np.abs(u[:, -1])
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = 2.0 ** j * np.concatenate([rng.uniform(1, 2, n_samples - 2), [1.0, 2.0]])
        X = u * r[:, None]
        val = eval_series_barrier(X, a, ell, dim)
        cert.add(f"annulus_lower_{j}", *_clip_worst(2.0 ** j * a[j] - val, X), tol)
        Y = u * (2.0 ** j * rng.uniform(0, 1, n_samples))[:, None]
        up = series_upper_bound(j, a, ell, dim)
        cert.add(f"ball_upper_{j}", *_clip_worst(eval_series_barrier(Y, a, ell, dim) - up, Y), tol)
    return cert


@dataclass
class SeriesWeights:
    """b_k derived from a_k; ``s`` holds the tails s_k = sum_{j >= k} a_j."""

    a: np.ndarray
    b: np.ndarray
    s: np.ndarray
    tail: float
    exponent: float
    bound: float
    truncated_at: int | None = None

    @property
    def ratios(self) -> np.ndarray:
        n = self.b.size
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.a[:n] > 0, self.b / self.a[:n], np.nan)

    @property
    def bound_holds(self) -> bool:
        return bool(self.b.sum() <= self.bound * (1 + 1e-12))


def series_weights(a, tail: float = 0.0) -> SeriesWeights:
    """Weights b_k >= a_k with b_k/a_k -> infinity and sum b <= 2 sqrt(s_1).

    For s_1 <= 1 this is b_k = a_k / sqrt(s_k). For 1 < s_1 < 4 the raw
    formula would give b_k < a_k, so b_k = a_k (s_1/s_k)^p with
    p = 1 - sqrt(s_1)/2 is used instead; the integral comparison
    sum b_k <= s_1/(1 - p) keeps the same bound. For s_1 >= 4 no sequence can
    have both properties (sum b >= s_1 > 2 sqrt(s_1)); the normalized formula
    is used and ``bound`` is 2 s_1. ``tail`` is the declared sum of the terms
    after the prefix. Where s_k = 0 the sequence is cut (``truncated_at``).
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or np.any(a < 0) or not np.all(np.isfinite(a)):
        raise ValueError("a must be a finite nonnegative sequence")
    if not (np.isfinite(tail) and tail >= 0):
        raise ValueError("declared tail must be finite and nonnegative")
    s = np.cumsum(a[::-1])[::-1] + tail
    pos = np.flatnonzero(s > 0)
    cut = None if pos.size == a.size else int(pos.size)
    s1 = float(s[0]) if s.size else 0.0
    n = pos.size
    sk = s[:n]
    if s1 <= 1.0:
        p, bound = 0.5, 2.0 * math.sqrt(s1)
        b = a[:n] / np.sqrt(sk)
    elif s1 < 4.0:
        p, bound = 1.0 - math.sqrt(s1) / 2.0, 2.0 * math.sqrt(s1)
        b = a[:n] * (s1 / sk) ** p
    else:
        p, bound = 0.5, 2.0 * s1
        b = a[:n] * np.sqrt(s1 / sk)
    return SeriesWeights(a, b, s, float(tail), p, bound, cut)


# -- Hopf barrier -------------------------------------------------------------------


def hopf_barrier(x, N, rho):
    """exp(-N|x|) - exp(-N rho/2)."""
    r = np.linalg.norm(np.atleast_2d(np.asarray(x, dtype=float)), axis=1)
    val = np.exp(-N * r) - np.exp(-N * rho / 2)
    return float(val[0]) if np.ndim(x) == 1 else val


def hopf_min_N(ell: EllipticityPair, rho, dim) -> float:
    """Threshold 4 Lam (n-1)/(lam rho): above it the radial inequality holds on the annulus."""
    return 4.0 * ell.Lam * (dim - 1) / (ell.lam * rho)


def _hopf_hessian(X, N):
    # radial profile f(r) = exp(-N r): f'' = N^2 f, f'/r = -N f / r
    r = np.linalg.norm(X, axis=1)
    f = np.exp(-N * r)
    E = X / r[:, None]
    dim = X.shape[1]
    P = np.einsum("ni,nj->nij", E, E)
    return (N * N * f)[:, None, None] * P + (-N * f / r)[:, None, None] * (np.eye(dim) - P)


def hopf_certificate(N, rho, ell: EllipticityPair, dim=2, n_radii=401, seed=0) -> Certificate:
    """Check lam N^2 - Lam N (n-1)/|x| > 0 and M-(D^2 eta) > 0 on rho/4 <= |x| <= rho/2."""
    cert = Certificate("hopf", data={"N": float(N), "rho": rho, "threshold": hopf_min_N(ell, rho, dim)})
    r = np.linspace(rho / 4, rho / 2, n_radii)
    lhs = ell.lam * N ** 2 - ell.Lam * N * (dim - 1) / r
    k = int(np.argmin(lhs))
    # strict inequalities: a nonpositive minimum is recorded as its violation
    cert.add("radial_coefficient_positive", -lhs[k], [r[k]], -1e-300)
    rng = np.random.Generator(np.random.Philox(seed))
    u = rng.normal(size=(n_radii, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    X = u * r[:, None]
    if N > 0:
        m = pucci_minus(_hopf_hessian(X, N), ell)
        k = int(np.argmin(m))
        cert.add("exact_hessian_positive", -m[k], X[k], -1e-300)
    else:
        cert.add("exact_hessian_positive", 0.0, None, -1e-300)
    return cert


# -- slit subsolution ---------------------------------------------------------------


@dataclass
class SlitSubsolution:
    phi: GridFunction
    kappa: float
    scale: float
    certificate: Certificate
    kappa_trials: list


def _f0(P, rho):
    r = np.linalg.norm(P, axis=1)
    return np.clip((1 - rho / 2 - r) / (rho / 2), 0.0, 1.0)


def slit_subsolution(rho=0.1, center=(0.5,), radius=0.25, ell=EllipticityPair(1, 1), h=1 / 64,
                     dim=2, tol=1e-6, max_halvings=20) -> SlitSubsolution:
    """Subsolution vanishing on the thin space outside a thin ball B*.

    Solves M-(psi) = kappa f0 on the upper half ball with trace the bump
    max{0, 1 - |x - z|^2/r^2}, halving kappa from 1 until psi >= 0, then
    reflects evenly and scales so that M-(phi) >= 1 on B_{1-rho} off B*.
    """
    from .solver import SignoriniProblem, solve_signorini

    z = np.zeros(dim)
    z[:-1] = np.asarray(center, dtype=float)
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    if np.linalg.norm(z) + radius > 1 + 1e-12 or radius <= 0:
        raise ValueError("B* must lie inside the unit thin ball")
    grid = Grid.half_ball(dim, 1.0, h)
    g0 = lambda P: np.maximum(0.0, 1.0 - ((P - z) ** 2).sum(1) / radius ** 2)
    trials = []
    psi = kappa = None
    k = 1.0
    for _ in range(max_halvings):
        prob = SignoriniProblem(grid, Pucci(ell, "minus"), g0, mode="dirichlet",
                                source=lambda P, k=k: k * _f0(P, rho))
        rep = solve_signorini(prob, tol=1e-9)
        low = float(rep.solution.values.min())
        trials.append({"kappa": k, "min": low, "failed": rep.failed})
        if not rep.failed and low >= -1e-12:
            psi, kappa = rep.solution, k
            break
        k *= 0.5
    if psi is None:
        raise RuntimeError(f"kappa search exhausted; last trial {trials[-1]}")

    # Off the thin space the scheme is the half-space one used by the solve
    # (mirrored below by symmetry); thin nodes off B* see the even reflection.
    P = grid.points
    in_bstar = grid.thin & (np.linalg.norm(P - z, axis=1) < radius)
    nodes = np.flatnonzero(~grid.outer & ~in_bstar)
    D = DiscreteOperator(grid, Pucci(ell, "minus"), direction_set(dim), nodes, grid.thin[nodes])
    m = D.evaluate(psi.values / kappa)
    chi = np.linalg.norm(P[nodes], axis=1) < 1 - rho
    if np.any(chi & (m <= 0)):
        scale = np.inf
    else:
        scale = max(1.0, float((1.0 / m[chi]).max(initial=1.0)) * (1 + 1e-9))
    s = scale if np.isfinite(scale) else 1.0
    half = GridFunction(grid, psi.values / kappa * s)
    Mphi = m * s

    cert = Certificate("slit_subsol", data={"rho": rho, "h": h, "kappa": kappa, "scale": scale,
                                            "center": z.tolist(), "radius": radius})
    cert.add("subsolution_off_bstar", *_clip_worst(chi.astype(float) - Mphi, P[nodes]), tol)
    cert.add("nonnegative", *_clip_worst(-half.values, P), tol)
    thin_off = grid.thin & ~in_bstar
    cert.add("zero_on_thin_outside_bstar", *_clip_worst(half.values[thin_off], P[thin_off]), tol)
    cert.data["max_on_bstar"] = float(half.values[grid.thin].max())
    outer = grid.outer
    cert.add("zero_on_sphere", *_clip_worst(np.abs(half.values[outer]), P[outer]), tol)
    phi = half.reflect_full()
    return SlitSubsolution(phi, kappa, scale, cert, trials)


# -- cone barriers ------------------------------------------------------------------


def _cone_psi(xp, e, eta, sign):
    xp = np.atleast_2d(xp)
    s = xp @ e
    r = np.linalg.norm(xp, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(r > 0, r * (1 - (s / np.where(r > 0, r, 1)) ** 2), 0.0)
    return s - eta * corr if sign == "sub" else s + eta * corr


def psi_sub(xp, e, eta):
    return _cone_psi(xp, np.asarray(e, dtype=float), eta, "sub")


def psi_super(xp, e, eta):
    return _cone_psi(xp, np.asarray(e, dtype=float), eta, "super")


def in_cone(xp, e, eta):
    """(x', 0) in the cone {e.x'/|x'| > eta (1 - (e.x'/|x'|)^2)}; eta may be negative."""
    xp = np.atleast_2d(xp)
    r = np.linalg.norm(xp, axis=1)
    c = np.where(r > 0, (xp @ np.asarray(e, dtype=float)) / np.where(r > 0, r, 1), 0.0)
    return (r > 0) & (c > eta * (1 - c * c))


@dataclass
class ConeBarrierReport:
    kind: str
    solution: GridFunction
    exponent: float
    sign: str
    normal_derivative_extreme: float
    n_samples: int
    flagged: bool
    message: str = ""

    @property
    def sign_ok(self) -> bool:
        if self.flagged:
            return False
        if self.kind == "cone_sub":
            return self.normal_derivative_extreme > 0
        return self.normal_derivative_extreme < 0


def cone_barrier(kind="cone_sub", e=None, eta=0.1, gamma=None, ell=EllipticityPair(1, 1.5),
                 dim=3, h=1 / 16, extent=1.0, sample_radius=(None, 0.5), min_samples=4,
                 edge_margin=2.0):
    """Extension of (psi_sub)_+^(beta2+gamma) with M- (or of (psi_super)_+^(beta1-gamma) with M+).

    Outer data on the box come from the planar homogeneous profile of the same
    exponent in the direction e, which ignores the cone correction and is
    therefore only approximately the exact far field. The report gives the
    minimum (sub) or maximum (super) of the one-sided normal difference
    (u(x', h) - u(x', 0))/h over thin nodes of the cone with
    |x'| in sample_radius and psi(x') >= edge_margin * h.
    """
    from .exponents import find_beta, solve_profile, derivative_constant
    from .solver import extension_solve

    if kind not in ("cone_sub", "cone_super"):
        raise ValueError("kind must be 'cone_sub' or 'cone_super'")
    e = np.eye(dim - 1)[0] if e is None else np.asarray(e, dtype=float)
    if e.shape != (dim - 1,) or abs(np.linalg.norm(e) - 1) > 1e-12:
        raise ValueError("e must be a unit vector in the thin space")
    b1, b2 = find_beta(ell, "plus"), find_beta(ell, "minus")
    gmax = min(b1, 1 - b2)
    gamma = gmax / 4 if gamma is None else gamma
    if not 0 < gamma < gmax:
        raise ValueError(f"gamma must lie in (0, {gmax:.4g})")
    if kind == "cone_sub":
        alpha, sign, cone_eta, psi = b2 + gamma, "minus", eta, psi_sub
    else:
        alpha, sign, cone_eta, psi = b1 - gamma, "plus", -eta, psi_super
    prof = solve_profile(alpha, ell, sign, 1.0, derivative_constant(alpha, ell, sign))

    def far(P):
        s = P[:, :-1] @ e
        y = np.abs(P[:, -1])
        return np.hypot(s, y) ** alpha * prof(np.arctan2(y, s))

    trace = lambda xp: np.maximum(psi(xp, e, eta), 0.0) ** alpha
    grid = Grid.box(dim, extent, h)
    ext = extension_solve(trace, ell, sign, grid, far_field=far)
    u = ext.solution.values
    up = np.zeros(dim, dtype=np.int64)
    up[-1] = 1
    thin = np.flatnonzero(grid.thin & ~grid.outer)
    xp = grid.points[thin, :-1]
    r = np.linalg.norm(xp, axis=1)
    rmin = 2 * h if sample_radius[0] is None else sample_radius[0]
    # nodes within edge_margin*h of the cone edge cannot resolve the profile
    margin = psi(xp, e, eta) >= edge_margin * h
    sel = in_cone(xp, e, cone_eta) & margin & (r >= rmin) & (r <= sample_radius[1])
    above = grid.neighbor(thin[sel], up)
    dn = (u[above] - u[thin[sel]]) / h
    n = int(sel.sum())
    flagged = n < min_samples or ext.failed
    msg = "too few cone nodes at this resolution" if n < min_samples else ""
    if ext.failed:
        msg = "extension solve failed"
    if n == 0:
        extreme = float("nan")
    else:
        extreme = float(dn.min() if kind == "cone_sub" else dn.max())
    return ConeBarrierReport(kind, ext.solution, alpha, sign, extreme, n, flagged, msg)


# -- maximum principle verifier ---------------------------------------------------------


@dataclass(frozen=True)
class MaxPrincipleSpec:
    c0: float
    c1: float
    c2: float
    sigma: float

    def __post_init__(self):
        if min(self.c0, self.c1, self.c2, self.sigma) <= 0:
            raise ValueError("c0, c1, c2, sigma must be positive")

    def validate(self, ell: EllipticityPair, dim: int):
        if not self.c1 < math.sqrt(ell.lam / (9 * dim * ell.Lam)):
            raise ValueError("c1 must be below sqrt(lam / (9 n Lam))")


def comparison_quadratic(x, z, ell: EllipticityPair):
    """P(x) = |x' - z'|^2 - (n Lam/lam) x_n^2."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    dim = X.shape[1]
    z = np.asarray(z, dtype=float)
    val = ((X[:, :-1] - z[: dim - 1]) ** 2).sum(1) - dim * ell.Lam / ell.lam * X[:, -1] ** 2
    return float(val[0]) if np.ndim(x) == 1 else val


def comparison_quadratic_pucci(ell: EllipticityPair, dim: int) -> float:
    """M+ of the Hessian of P; equals 2 Lam (n-1) - 2 n Lam = -2 Lam."""
    H = np.diag([2.0] * (dim - 1) + [-2.0 * dim * ell.Lam / ell.lam])
    return pucci_plus(H, ell)


@dataclass
class MaxPrincipleVerdict:
    hypotheses: Certificate
    nonnegative_on_half_ball: bool
    c2_fitted: float
    passed: bool

    @property
    def failed_hypotheses(self) -> list:
        return self.hypotheses.failed()


def max_principle_check(v: GridFunction, spec: MaxPrincipleSpec, contact_nodes, ell: EllipticityPair,
                        tol: float = 1e-9) -> MaxPrincipleVerdict:
    """Check the four hypotheses on B_1 and the conclusions on B_{1/2}.

    ``v`` lives on a grid symmetric in x_n (stored for x_n >= 0) and is read
    as its even extension; ``contact_nodes`` index thin nodes of that grid.
    """
    grid = v.grid
    if not grid.symmetric_in_xn:
        raise ValueError("v must be given on a grid symmetric in x_n")
    spec.validate(ell, grid.dim)
    full = v.reflect_full()
    G = full.grid
    P = G.points
    r = np.linalg.norm(P, axis=1)
    inB1 = r < 1 + 1e-12
    contact = np.zeros(grid.n_nodes, dtype=bool)
    contact[np.asarray(contact_nodes, dtype=np.int64)] = True
    if np.any(contact & ~grid.thin):
        raise ValueError("contact nodes must lie on the thin space")
    # carry the contact flags to the full grid
    src = grid.lookup[tuple((np.column_stack([G.index[:, :-1], np.abs(G.index[:, -1])]) - grid.lo).T)]
    cfull = contact[src] & G.thin
    vals = full.values

    cert = Certificate("max_principle", data=asdict(spec))
    nodes = np.flatnonzero(~G.outer & inB1 & ~cfull)
    m = DiscreteOperator(G, Pucci(ell, "minus"), direction_set(G.dim), nodes).evaluate(vals)
    cert.add("pucci_minus_below_sigma", *_clip_worst(m - spec.sigma, P[nodes]), tol)
    cert.add("zero_on_contact", *_clip_worst(np.abs(vals[cfull]), P[cfull]), tol)
    far = inB1 & (np.abs(P[:, -1]) >= spec.c1)
    cert.add("lower_bound_off_slab", *_clip_worst(spec.c0 - vals[far], P[far]), tol)
    cert.add("lower_bound_minus_sigma", *_clip_worst(-spec.sigma - vals[inB1], P[inB1]), tol)

    half = r <= 0.5 + 1e-12
    nonneg = bool(vals[half].min() >= -tol)
    off = half & (P[:, -1] != 0)
    c2 = float((vals[off] / np.abs(P[off, -1])).min()) if off.any() else float("nan")
    passed = cert.passed and nonneg and c2 >= spec.c2
    return MaxPrincipleVerdict(cert, nonneg, c2, passed)

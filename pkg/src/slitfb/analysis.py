"""Blow-ups, point classification, free boundary geometry and Harnack ratios.

All routines read solved fields on symmetric grids (only ``x_n >= 0`` stored,
fields even in ``x_n``) and never modify them.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import nnls

from .elliptic import EllipticityPair
from .grid import Grid, GridFunction

REGULAR, DEGENERATE, INCONCLUSIVE = "Regular", "Degenerate", "Inconclusive"
EXPONENT_MARGIN = 0.05
NU_THRESHOLD = 2.0
MIN_SCALES = 3
# below about 8 cells the discrete free boundary offset dominates the sup values
MIN_RADIUS_CELLS = 8


def _dump(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, GridFunction) else np.asarray(u, dtype=float)


def _obstacle_values(grid: Grid, phi) -> np.ndarray:
    """Obstacle at every node (constant in x_n). Accepts None, arrays or callables of x'."""
    if phi is None:
        return np.zeros(grid.n_nodes)
    if callable(phi):
        return np.broadcast_to(np.asarray(phi(grid.points[:, :-1]), dtype=float), (grid.n_nodes,)).copy()
    vals = np.asarray(phi, dtype=float)
    if vals.shape != (grid.n_nodes,):
        raise ValueError("obstacle array must have one value per node")
    return vals


def _center_node(grid: Grid, x0) -> int:
    x0 = np.asarray(x0)
    if x0.ndim == 0:
        return int(x0)
    if x0.size == grid.dim - 1:
        x0 = np.append(x0, 0.0)
    return grid.node_at(x0)


def _boundary_distance(grid: Grid, node: int) -> float:
    """Distance from a node to the outer edge of the grid's domain."""
    p = grid.points[node]
    if grid.ball:
        return grid.extent[0] - float(np.linalg.norm(p))
    ext = np.array(grid.extent)
    d = ext - np.abs(p)
    if grid.symmetric_in_xn:
        d[-1] = ext[-1] - abs(p[-1])
    return float(d.min())


def _loglog_slope(r, s):
    ok = s > 0
    if ok.sum() < 2:
        return np.nan, np.nan
    A = np.vstack([np.log(r[ok]), np.ones(ok.sum())]).T
    (k, c), *_ = np.linalg.lstsq(A, np.log(s[ok]), rcond=None)
    return float(k), float(np.exp(c))


@dataclass
class GrowthProfile:
    """Sup of ``|u - phi - plane|`` on balls around a thin node.

    ``radii`` are normalized by the largest radius ``R`` and the sup values
    by the sup on ``B_R``, so ``theta`` is unchanged by rescaling ``u - phi``.
    """

    center: int
    point: list
    radii: np.ndarray
    sup_values: np.ndarray
    mu: float
    theta: np.ndarray
    R: float
    scale: float
    plane_gradient: list
    plane: str

    def to_dict(self) -> dict:
        return {
            "center": self.center,
            "point": self.point,
            "radii": self.radii.tolist(),
            "sup_values": self.sup_values.tolist(),
            "mu": self.mu,
            "theta": self.theta.tolist(),
            "R": self.R,
            "scale": self.scale,
            "plane_gradient": self.plane_gradient,
            "plane": self.plane,
        }


def _plane_gradient(grid: Grid, w, node, plane):
    """Thin gradient of the tangent plane at ``node`` (x_n slope is zero by evenness)."""
    if plane == "none":
        return np.zeros(grid.dim - 1)
    if plane != "lsq":
        raise ValueError("plane must be 'lsq' or 'none'")
    p0 = grid.points[node]
    d = grid.points - p0
    near = np.linalg.norm(d, axis=1) <= 4 * grid.h + 1e-12
    A = d[near][:, :-1]
    b = w[near] - w[node]
    grad, *_ = np.linalg.lstsq(A, b, rcond=None)
    return grad


def growth_profile(u, phi, x0, mu: float, radii=None, plane: str = "none") -> GrowthProfile:
    """Table of ``theta(rho) = sup_{rho <= r <= 1} r^-mu sup_{B_r}|w|``.

    ``radii`` default to dyadic values from the largest ball that fits down
    to ``MIN_RADIUS_CELLS * h``. Radii reaching past the domain are rejected.
    ``plane="lsq"`` subtracts a plane fitted on ``B_{4h}(x0)``; the default
    ``"none"`` relies on ``u - phi`` having zero value and gradient at a free
    boundary node.
    """
    if not isinstance(u, GridFunction):
        raise TypeError("u must be a GridFunction")
    grid = u.grid
    node = _center_node(grid, x0)
    if not grid.thin[node]:
        raise ValueError("x0 must lie on the thin space")
    w = u.values - _obstacle_values(grid, phi)
    reach = _boundary_distance(grid, node)
    if radii is None:
        R = 2.0 ** np.floor(np.log2(reach + 1e-12))
        radii = []
        r = R
        while r >= MIN_RADIUS_CELLS * grid.h - 1e-12:
            radii.append(r)
            r /= 2
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    if radii.size == 0:
        raise ValueError("no radii")
    if radii[0] > reach + 1e-12:
        raise ValueError(f"radius {radii[0]} exceeds distance {reach} to the domain edge")
    grad = _plane_gradient(grid, w, node, plane)
    d = grid.points - grid.points[node]
    wt = w - w[node] - d[:, :-1] @ grad
    dist = np.linalg.norm(d, axis=1)
    sups = np.array([np.abs(wt[dist <= r + 1e-12]).max() for r in radii])
    R = float(radii[0])
    scale = float(sups[0])
    rn = radii / R
    sn = sups / scale if scale > 0 else np.zeros_like(sups)
    # radii are descending, so theta(rho_i) is a running max from the top
    theta = np.maximum.accumulate(rn ** (-mu) * sn)
    return GrowthProfile(
        node, grid.points[node].tolist(), rn, sn, float(mu), theta, R, scale,
        [float(g) for g in grad], plane,
    )


@dataclass
class BlowupReport:
    selected: list
    rescaled: list = field(repr=False)
    fitted_exponent: float
    fit_constant: float
    local_slopes: list
    classification: str
    theta_min: float
    eps: float | None
    nu_threshold: float | None
    margin: float
    profile: GrowthProfile = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "selected_radii": self.selected,
            "fitted_exponent": self.fitted_exponent,
            "fit_constant": self.fit_constant,
            "local_slopes": self.local_slopes,
            "classification": self.classification,
            "theta_min": self.theta_min,
            "eps": self.eps,
            "nu_threshold": self.nu_threshold,
            "margin": self.margin,
            "min_scales": MIN_SCALES,
            "profile": self.profile.to_dict(),
        }

    def to_json(self, path=None) -> str:
        return _dump(self.to_dict(), path)

    def rescaled_to_csv(self, k: int, path):
        """Write the k-th rescaled field as ``y_1..y_n,value`` rows."""
        pts, vals = self.rescaled[k]
        np.savetxt(
            path, np.column_stack([pts, vals]), delimiter=",", fmt="%.17g",
            header=",".join([f"y{i}" for i in range(pts.shape[1])] + ["value"]), comments="",
        )


def _classify(profile: GrowthProfile, exponent, slopes, eps, nu_threshold, margin):
    if eps is None or len(profile.radii) < MIN_SCALES:
        return INCONCLUSIVE
    if profile.scale == 0.0:
        # u - phi vanishes identically near x0, so theta = 0 at every scale
        return DEGENERATE
    if not np.isfinite(exponent):
        return INCONCLUSIVE
    crit = 2.0 - eps
    if profile.theta[-1] >= nu_threshold and exponent <= crit - margin:
        return REGULAR
    if slopes and min(slopes) >= crit:
        return DEGENERATE
    return INCONCLUSIVE


def blowup_sequence(
    profile: GrowthProfile, u, phi, eps: float | None = None,
    nu_threshold: float = NU_THRESHOLD, margin: float = EXPONENT_MARGIN,
) -> BlowupReport:
    """Select radii by the half-theta rule and rescale ``u - phi`` around x0.

    For each scale ``rho`` of the profile the smallest tabulated ``r >= rho``
    with ``r^-mu sup_{B_r}|w| >= theta(rho)/2`` is taken; the rescaled field
    ``w(x0 + r y) / sup_{B_r}|w|`` on ``|y| <= 1`` is kept.
    """
    grid = u.grid
    w = u.values - _obstacle_values(grid, phi)
    rn, sn, th, mu = profile.radii, profile.sup_values, profile.theta, profile.mu
    score = rn ** (-mu) * sn
    selected, rescaled = [], []
    for i in range(len(rn)):
        # candidates are radii >= rn[i], i.e. indices 0..i (descending order)
        ok = np.flatnonzero(score[: i + 1] >= 0.5 * th[i])
        if not ok.size or th[i] == 0.0:
            continue
        j = int(ok.max())
        r_abs = rn[j] * profile.R
        if any(abs(s - r_abs) < 1e-15 for s in selected):
            continue
        d = grid.points - grid.points[profile.center]
        near = np.linalg.norm(d, axis=1) <= r_abs + 1e-12
        s = sn[j] * profile.scale
        vals = (w[near] - w[profile.center] - d[near][:, :-1] @ np.asarray(profile.plane_gradient)) / s
        selected.append(float(r_abs))
        rescaled.append((d[near] / r_abs, vals))
    exponent, const = _loglog_slope(rn, sn)
    slopes = [
        float(np.log(sn[i] / sn[i + 1]) / np.log(rn[i] / rn[i + 1]))
        for i in range(len(rn) - 1)
        if sn[i] > 0 and sn[i + 1] > 0
    ]
    label = _classify(profile, exponent, slopes, eps, nu_threshold, margin)
    return BlowupReport(
        selected, rescaled, exponent, const * profile.scale / profile.R ** exponent
        if np.isfinite(exponent) else np.nan,
        slopes, label, float(th[-1]), eps, nu_threshold, margin, profile,
    )


def free_boundary_nodes(grid: Grid, contact) -> np.ndarray:
    """Contact nodes with a non-contact interior thin axis neighbour."""
    contact = np.asarray(contact, dtype=np.int64)
    is_contact = np.zeros(grid.n_nodes, dtype=bool)
    is_contact[contact] = True
    # outer nodes carry data, not a contact decision, so they never count
    is_free = np.zeros(grid.n_nodes, dtype=bool)
    is_free[grid.thin_nodes] = True
    is_free[contact] = False
    fb = np.zeros(contact.size, dtype=bool)
    for k in range(grid.dim - 1):
        for s in (1, -1):
            off = np.zeros(grid.dim, dtype=np.int64)
            off[k] = s
            nb = grid.neighbor(contact, off)
            fb |= (nb >= 0) & is_free[np.maximum(nb, 0)]
    return contact[fb]


def contact_from_field(u: GridFunction, phi=None, contact_tol: float = 1e-7) -> np.ndarray:
    g = u.grid
    w = u.values - _obstacle_values(g, phi)
    thin = np.flatnonzero(g.thin)
    return thin[w[thin] <= contact_tol]


def classify_point(
    u: GridFunction, phi, x0, eps: float = 0.1, nu_threshold: float = NU_THRESHOLD,
    contact=None, contact_tol: float = 1e-7, radii=None, plane: str = "none",
    margin: float = EXPONENT_MARGIN,
) -> BlowupReport:
    """Regular / Degenerate / Inconclusive label for a free boundary node.

    Regular needs ``theta`` at the smallest scale to reach ``nu_threshold``
    and a fitted exponent at most ``2 - eps - margin``; Degenerate needs every
    dyadic local slope at least ``2 - eps``.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    grid = u.grid
    node = _center_node(grid, x0)
    if contact is None:
        contact = contact_from_field(u, phi, contact_tol)
    if node not in set(free_boundary_nodes(grid, contact).tolist()):
        raise ValueError(f"node {node} at {grid.points[node].tolist()} is not a free boundary node")
    prof = growth_profile(u, phi, node, 2.0 - eps, radii, plane)
    return blowup_sequence(prof, u, phi, eps, nu_threshold, margin)


@dataclass
class FreeBoundaryGraph:
    e: np.ndarray
    nodes: np.ndarray
    points: np.ndarray
    ell: float
    residual: float
    min_derivative: float
    h: float

    def __post_init__(self):
        self.e = np.asarray(self.e, dtype=float)
        if abs(np.linalg.norm(self.e) - 1) > 1e-12:
            raise ValueError("e must be a unit vector")

    def angle_to(self, v) -> float:
        """Angle in degrees between ``e`` and ``v``."""
        v = np.asarray(v, dtype=float)
        c = float(self.e @ v / np.linalg.norm(v))
        return float(np.degrees(np.arccos(np.clip(c, -1, 1))))

    def to_dict(self) -> dict:
        return {
            "e": self.e.tolist(),
            "nodes": self.nodes.tolist(),
            "points": self.points.tolist(),
            "lipschitz": self.ell,
            "residual": self.residual,
            "min_derivative": self.min_derivative,
            "h": self.h,
        }

    def to_json(self, path=None) -> str:
        return _dump(self.to_dict(), path)


def _thin_gradient(grid: Grid, w, nodes, slit_mask):
    """Thin gradient at ``nodes``: centred, one-sided away from slit/missing nodes."""
    G = np.zeros((len(nodes), grid.dim - 1))
    for k in range(grid.dim - 1):
        off = np.zeros(grid.dim, dtype=np.int64)
        off[k] = 1
        p, m = grid.neighbor(nodes, off), grid.neighbor(nodes, -off)
        okp = (p >= 0) & ~slit_mask[np.maximum(p, 0)]
        okm = (m >= 0) & ~slit_mask[np.maximum(m, 0)]
        wp, wm, w0 = w[np.maximum(p, 0)], w[np.maximum(m, 0)], w[nodes]
        G[:, k] = np.where(
            okp & okm, (wp - wm) / (2 * grid.h),
            np.where(okp, (wp - w0) / grid.h, np.where(okm, (w0 - wm) / grid.h, 0.0)),
        )
    return G


def _graph_lipschitz(s, t, tol):
    """Smallest L with an L-Lipschitz g(t) passing within ``tol`` of every (t_i, s_i)."""
    if t.shape[1] == 0 or len(s) < 2:
        spread = float(s.max() - s.min()) if len(s) else 0.0
        return 0.0 if spread <= 2 * tol + 1e-12 else np.inf
    ds = np.abs(s[:, None] - s[None, :]) - 2 * tol
    dt = np.linalg.norm(t[:, None, :] - t[None, :, :], axis=2)
    same = dt < 1e-12
    if np.any(ds[same] > 1e-12):
        return np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(same, 0.0, np.maximum(ds, 0.0) / np.where(same, 1.0, dt))
    return float(q.max())


def _thin_directions(dim: int, n: int = 720) -> np.ndarray:
    if dim == 2:
        return np.array([[1.0], [-1.0]])
    a = np.arange(n) * 2 * np.pi / n
    return np.column_stack([np.cos(a), np.sin(a)])


def extract_free_boundary(report, phi=None, region_radius: float | None = None) -> FreeBoundaryGraph:
    """Free boundary nodes, monotonicity direction and graph Lipschitz constant.

    ``e`` maximizes the minimum of ``d_tau (u - phi)`` over non-contact thin
    nodes within ``region_radius`` (default ``8h``) of the free boundary.
    """
    u = report.solution
    grid = u.grid
    h = grid.h
    if phi is None:
        phi = report.obstacle
    w = u.values - _obstacle_values(grid, phi)
    contact = np.asarray(report.contact_nodes, dtype=np.int64)
    thin = grid.thin_nodes
    if contact.size == 0 or np.isin(thin, contact).all():
        raise ValueError("no free boundary: contact set is empty or covers the thin space")
    fb = free_boundary_nodes(grid, contact)
    if fb.size == 0:
        raise ValueError("no free boundary nodes found")
    slit_mask = np.zeros(grid.n_nodes, dtype=bool)
    slit_mask[contact] = True
    radius = 8 * h if region_radius is None else region_radius
    tp = grid.points[thin, :-1]
    fp = grid.points[fb, :-1]
    dist = np.min(np.linalg.norm(tp[:, None, :] - fp[None, :, :], axis=2), axis=1)
    region = thin[(dist <= radius + 1e-12) & ~slit_mask[thin]]
    G = _thin_gradient(grid, w, region, slit_mask)
    dirs = _thin_directions(grid.dim)
    mins = (G @ dirs.T).min(axis=0)
    best = int(np.argmax(mins))
    e = dirs[best]
    if grid.dim == 3:
        # refine around the best sampled angle
        a0 = np.arctan2(e[1], e[0])
        a = a0 + np.linspace(-np.pi / 360, np.pi / 360, 61)
        fine = np.column_stack([np.cos(a), np.sin(a)])
        fm = (G @ fine.T).min(axis=0)
        e = fine[int(np.argmax(fm))]
    s = fp @ e
    if grid.dim == 3:
        perp = np.array([-e[1], e[0]])
        t = (fp @ perp)[:, None]
        A = np.column_stack([t[:, 0], np.ones(len(s))])
        coef, *_ = np.linalg.lstsq(A, s, rcond=None)
        res = float(np.sqrt(np.mean((A @ coef - s) ** 2)))
    else:
        t = np.zeros((len(s), 0))
        res = float(np.sqrt(np.mean((s - s.mean()) ** 2)))
    ell = _graph_lipschitz(s, t, h)
    return FreeBoundaryGraph(e, fb, grid.points[fb], ell, res, float((G @ e).min()), h)


def _lattice_thin_dirs(dim: int, radius: int = 3) -> np.ndarray:
    """Primitive lattice vectors in the thin space, both signs."""
    if dim == 2:
        return np.array([[1, 0], [-1, 0]], dtype=np.int64)
    out = []
    for a in range(-radius, radius + 1):
        for b in range(-radius, radius + 1):
            if (a, b) != (0, 0) and np.gcd(a, b) == 1:
                out.append((a, b, 0))
    return np.array(out, dtype=np.int64)


def directional_monotonicity(u: GridFunction, e, ell: float, region=None, slit=None):
    """Min of ``d_tau u`` over lattice directions with ``tau.e >= ell/sqrt(1+ell^2)``.

    Returns ``(minimum, node, tau)``. Differences are centred, one-sided away
    from ``slit`` nodes (and from missing neighbours).
    """
    grid = u.grid
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    cos_min = ell / np.sqrt(1 + ell * ell)
    vecs = _lattice_thin_dirs(grid.dim)
    norms = np.linalg.norm(vecs[:, :-1], axis=1)
    cone = vecs[(vecs[:, :-1] @ e) / norms >= cos_min - 1e-12]
    if cone.size == 0:
        raise ValueError("direction cone contains no lattice directions")
    nodes = np.arange(grid.n_nodes) if region is None else np.asarray(region)
    if nodes.dtype == bool:
        nodes = np.flatnonzero(nodes)
    slit_mask = np.zeros(grid.n_nodes, dtype=bool)
    if slit is not None:
        slit_mask[np.asarray(slit)] = True
    v = u.values
    best = (np.inf, -1, None)
    for off in cone:
        L = grid.h * np.linalg.norm(off)
        p = grid.neighbor(nodes, off, reflect=True)
        m = grid.neighbor(nodes, -off, reflect=True)
        okp = (p >= 0) & ~slit_mask[np.maximum(p, 0)]
        okm = (m >= 0) & ~slit_mask[np.maximum(m, 0)]
        vp, vm, v0 = v[np.maximum(p, 0)], v[np.maximum(m, 0)], v[nodes]
        d = np.where(
            okp & okm, (vp - vm) / (2 * L),
            np.where(okp, (vp - v0) / L, np.where(okm, (v0 - vm) / L, np.inf)),
        )
        d = np.where(slit_mask[nodes], np.inf, d)
        i = int(np.argmin(d))
        if d[i] < best[0]:
            best = (float(d[i]), int(nodes[i]), (off[:-1] / np.linalg.norm(off[:-1])).tolist())
    return best


@dataclass
class NondegeneracyFit:
    c: float
    exponent: float
    eps0: float
    bound: float
    passed: bool
    n_samples: int

    def to_dict(self) -> dict:
        return asdict(self)


def nondegeneracy_fit(
    u: GridFunction, phi, x0, e, radii=None, ell: EllipticityPair | None = None,
    eps0: float | None = None,
) -> NondegeneracyFit:
    """Fit ``(u - phi)(x0 + t e) ~ c t^k`` along the thin ray from x0.

    The bound ``k <= 2 - eps0`` uses ``eps0 = (1 - beta2)/2`` from the angular
    ODE for the M- operator when ``eps0`` is not given.
    """
    grid = u.grid
    node = _center_node(grid, x0)
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    if eps0 is None:
        from .exponents import find_beta

        ell = ell or EllipticityPair(1.0, 1.0)
        eps0 = 0.5 * (1.0 - find_beta(ell, "minus"))
    w = u.values - _obstacle_values(grid, phi)
    thin = np.flatnonzero(grid.thin)
    d = grid.points[thin, :-1] - grid.points[node, :-1]
    t = d @ e
    off = np.linalg.norm(d - t[:, None] * e, axis=1)
    reach = _boundary_distance(grid, node)
    lo, hi = (2 * grid.h, reach / 2) if radii is None else (min(radii), max(radii))
    on_ray = (off <= grid.h / 2 + 1e-12) & (t >= lo - 1e-12) & (t <= hi + 1e-12)
    ts, ws = t[on_ray], w[thin][on_ray]
    pos = ws > 0
    if pos.sum() < 3:
        raise ValueError(f"only {int(pos.sum())} positive samples along the ray")
    k, c = _loglog_slope(ts[pos], ws[pos])
    bound = 2.0 - eps0
    return NondegeneracyFit(c, k, float(eps0), bound, bool(k <= bound and c > 0), int(pos.sum()))


@dataclass(frozen=True)
class ConeSpec:
    """Thin cone ``Sigma*`` (generated by thin vectors) with apex and axis ``e``."""

    apex: tuple
    e: tuple
    eps: float
    generators: tuple
    strict: bool = True

    def __post_init__(self):
        if not 0 < self.eps < (0.125 if self.strict else 1.0):
            raise ValueError("eps must lie in (0, 1/8); pass strict=False for wider cones")
        e = np.asarray(self.e, dtype=float)
        if abs(np.linalg.norm(e) - 1) > 1e-12:
            raise ValueError("e must be a unit vector")
        for g in self.generators:
            g = np.asarray(g, dtype=float)
            if g.shape != e.shape or not np.linalg.norm(g) > 0:
                raise ValueError("generators must be nonzero thin vectors")
            if g @ e / np.linalg.norm(g) > -self.eps + 1e-12:
                raise ValueError(f"generator {g.tolist()} leaves the cone x.e <= -eps|x|")

    def contains(self, xprime) -> np.ndarray:
        """Membership of thin points (relative to the apex) in the cone."""
        X = np.atleast_2d(np.asarray(xprime, dtype=float)) - np.asarray(self.apex, dtype=float)
        Gm = np.array(self.generators, dtype=float).T
        out = np.zeros(len(X), dtype=bool)
        for i, x in enumerate(X):
            nx = np.linalg.norm(x)
            if nx < 1e-14:
                out[i] = True
                continue
            _, r = nnls(Gm, x)
            out[i] = r <= 1e-9 * nx
        return out


@dataclass
class HarnackReport:
    region_radius: float
    sup_ratio: float
    inf_ratio: float
    implied_constant: float
    n_nodes: int
    floor: float
    normalization: tuple
    eps: float

    @property
    def ok(self) -> bool:
        return bool(
            np.isfinite(self.sup_ratio) and np.isfinite(self.inf_ratio)
            and 0 < self.inf_ratio <= self.sup_ratio
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["normalization"] = list(self.normalization)
        d["ok"] = self.ok
        return d

    def to_json(self, path=None) -> str:
        return _dump(self.to_dict(), path)


def _check_monotone(u: GridFunction, theta, tol):
    """Raise on the first node where u decreases along the lattice direction theta."""
    grid = u.grid
    theta = np.asarray(theta, dtype=float)
    off = np.zeros(grid.dim, dtype=np.int64)
    scaled = theta / np.abs(theta[np.abs(theta) > 1e-12]).min()
    step = np.rint(scaled).astype(np.int64)
    if np.abs(step - scaled).max() > 1e-9:
        raise ValueError("monotonicity directions must be lattice directions")
    off[:-1] = step
    nodes = np.arange(grid.n_nodes)
    nb = grid.neighbor(nodes, off, reflect=True)
    ok = nb >= 0
    drop = u.values[nodes[ok]] - u.values[nb[ok]]
    if drop.size and drop.max() > tol:
        i = int(nodes[ok][np.argmax(drop)])
        raise ValueError(
            f"monotonicity along {theta.tolist()} fails at node {i} "
            f"{grid.points[i].tolist()} by {drop.max():.3g}"
        )


def harnack_ratio(
    u1: GridFunction, u2: GridFunction, cone: ConeSpec, thetas=None,
    solver_tol: float = 1e-8, region_radius: float | None = None, check_tol: float | None = None,
) -> HarnackReport:
    """Sup and inf of ``u1/u2`` on ``B_{eps/4}`` after equal-sup normalization on ``B_{eps/2}``.

    ``thetas`` are the declared monotonicity directions (thin lattice vectors
    whose negatives lie in the cone). Nodes with normalized ``u2`` below
    ``10 * solver_tol`` are skipped.
    """
    grid = u1.grid
    if u2.grid != grid:
        raise ValueError("u1 and u2 must share a grid")
    apex = np.append(np.asarray(cone.apex, dtype=float), 0.0)
    dist = np.linalg.norm(grid.points - apex, axis=1)
    check_tol = 10 * solver_tol if check_tol is None else check_tol
    for u, th in zip((u1, u2), thetas or (None, None)):
        if th is None:
            continue
        if not cone.contains(-np.asarray(th, dtype=float) + np.asarray(cone.apex))[0]:
            raise ValueError(f"-theta {th} is not in the cone")
        _check_monotone(u, th, check_tol * max(1.0, np.abs(u.values).max()))
    half = dist <= cone.eps / 2 + 1e-12
    n1, n2 = np.abs(u1.values[half]).max(), np.abs(u2.values[half]).max()
    if not (n1 > 0 and n2 > 0):
        raise ValueError("fields vanish on B_{eps/2}")
    v1, v2 = u1.values / n1, u2.values / n2
    radius = cone.eps / 4 if region_radius is None else region_radius
    floor = 10 * solver_tol
    sel = (dist <= radius + 1e-12) & (v2 >= floor)
    if not sel.any():
        return HarnackReport(radius, np.nan, np.nan, np.nan, 0, floor, (float(n1), float(n2)), cone.eps)
    q = v1[sel] / v2[sel]
    sup, inf = float(q.max()), float(q.min())
    const = max(sup, 1 / inf) if inf > 0 else np.inf
    return HarnackReport(radius, sup, inf, const, int(sel.sum()), floor, (float(n1), float(n2)), cone.eps)

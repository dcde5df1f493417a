"""Monotone wide-stencil discretization of Pucci and Bellman operators.

Pucci operators are evaluated as extrema over orthogonal lattice frames of
directional second differences weighted by ``Lam`` on positive and ``lam``
on negative terms. Bellman members are split into nonnegative combinations
of lattice directions (NNLS). Both give schemes that are nondecreasing in
every neighbour value.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np
import scipy.optimize
import scipy.sparse as sp

from .elliptic import Bellman, Pucci
from .grid import Grid, GridFunction


class StencilError(IndexError):
    """A stencil point falls outside the grid."""


@dataclass(frozen=True)
class DirectionSet:
    """Lattice directions (integer offsets) grouped into orthogonal frames.

    Only unsigned directions are stored; every second difference uses both
    ``+offset`` and ``-offset``, so the set is closed under negation.
    """

    offsets: np.ndarray
    frames: tuple

    def __post_init__(self):
        off = np.asarray(self.offsets, dtype=np.int64)
        if off.ndim != 2 or off.shape[1] not in (2, 3):
            raise ValueError("offsets must be (m, dim)")
        if np.linalg.matrix_rank(off) < off.shape[1]:
            raise ValueError("directions do not span the space")
        frames = tuple(tuple(int(j) for j in f) for f in self.frames)
        dim = off.shape[1]
        has_axis = False
        for f in frames:
            if len(f) != dim:
                raise ValueError("each frame needs dim directions")
            V = off[list(f)].astype(float)
            G = V @ V.T
            if np.abs(G - np.diag(np.diag(G))).max() > 0:
                raise ValueError(f"frame {f} is not orthogonal")
            if np.all(np.abs(V).sum(1) == 1):
                has_axis = True
        if not has_axis:
            raise ValueError("direction set needs the axis frame as a fallback")
        off.setflags(write=False)
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "frames", frames)

    @property
    def dim(self) -> int:
        return self.offsets.shape[1]

    @property
    def n_dirs(self) -> int:
        return self.offsets.shape[0]

    @property
    def radius(self) -> int:
        return int(np.abs(self.offsets).max())

    def frame_matrix(self) -> np.ndarray:
        P = np.zeros((self.n_dirs, len(self.frames)))
        for k, f in enumerate(self.frames):
            P[list(f), k] = 1.0
        return P

    def describe(self) -> dict:
        return {"offsets": self.offsets.tolist(), "frames": [list(f) for f in self.frames]}


def _frames_2d(radius):
    gens = [
        (p, q)
        for p in range(1, radius + 1)
        for q in range(0, radius + 1)
        if gcd(p, q) == 1
    ]
    gens.sort(key=lambda v: np.arctan2(v[1], v[0]))
    offsets, frames = [], []
    for p, q in gens:
        frames.append((len(offsets), len(offsets) + 1))
        offsets += [(p, q), (-q, p)]
    return offsets, frames


def direction_set(dim: int = 2, n_frames: int | None = None) -> DirectionSet:
    """Default frames: 2D lattice frames (8 by default), 3D axis plus face diagonals.

    In 2D the frames are all primitive orthogonal pairs ``(p, q), (-q, p)``
    with ``max(|p|, |q|) <= r``; ``n_frames`` must be one of the counts this
    produces (2, 4, 8, 12, 20, ...).
    """
    if dim == 2:
        n_frames = 8 if n_frames is None else n_frames
        for radius in range(1, 20):
            offsets, frames = _frames_2d(radius)
            if len(frames) == n_frames:
                return DirectionSet(np.array(offsets), tuple(frames))
            if len(frames) > n_frames:
                break
        raise ValueError(f"no 2D lattice frame set with {n_frames} frames")
    if dim == 3:
        offsets = [
            (1, 0, 0), (0, 1, 0), (0, 0, 1),
            (1, 1, 0), (1, -1, 0),
            (1, 0, 1), (1, 0, -1),
            (0, 1, 1), (0, 1, -1),
        ]
        frames = [(0, 1, 2), (3, 4, 2), (5, 6, 1), (7, 8, 0)]
        if n_frames not in (None, 4):
            raise ValueError("3D direction set has 4 frames")
        return DirectionSet(np.array(offsets), tuple(frames))
    raise ValueError("dim must be 2 or 3")


def second_difference(f: GridFunction, node: int, offset, arm: int = 1) -> float:
    """(f(x+a e) + f(x-a e) - 2 f(x)) / a^2 with a = arm * h * |offset|."""
    grid = f.grid
    off = np.asarray(offset, dtype=np.int64) * int(arm)
    plus = grid.neighbor(np.array([node]), off)[0]
    minus = grid.neighbor(np.array([node]), -off)[0]
    if plus < 0 or minus < 0:
        raise StencilError(f"stencil {tuple(off)} leaves the grid at node {node}")
    a2 = (grid.h ** 2) * float((off ** 2).sum())
    v = f.values
    return float((v[plus] + v[minus] - 2.0 * v[node]) / a2)


def _bellman_weights(A, offsets):
    """Nonnegative weights w with sum_j w_j e_j e_j^T ~= A (unit e_j)."""
    E = offsets / np.linalg.norm(offsets, axis=1, keepdims=True)
    d = A.shape[0]
    iu = np.triu_indices(d)
    design = np.stack([np.outer(e, e)[iu] for e in E], axis=1)
    w, res = scipy.optimize.nnls(design, A[iu])
    w[w < 1e-14] = 0.0
    return w, res


class DiscreteOperator:
    """Monotone discretization of an operator at a fixed set of nodes.

    ``reflect`` marks nodes (on {x_n = 0}) whose stencils use the even
    reflection across the thin space.
    """

    def __init__(self, grid: Grid, op, dirs: DirectionSet, nodes, reflect=None):
        if dirs.dim != grid.dim:
            raise ValueError("direction set dimension does not match grid")
        self.grid, self.op, self.dirs = grid, op, dirs
        self.nodes = np.asarray(nodes, dtype=np.int64)
        n, m = self.nodes.size, dirs.n_dirs
        reflect = np.zeros(n, dtype=bool) if reflect is None else np.asarray(reflect, bool)
        self.plus = np.full((n, m), -1, dtype=np.int64)
        self.minus = np.full((n, m), -1, dtype=np.int64)
        for j, o in enumerate(dirs.offsets):
            for sel, refl in ((~reflect, False), (reflect, True)):
                if sel.any():
                    self.plus[sel, j] = grid.neighbor(self.nodes[sel], o, reflect=refl)
                    self.minus[sel, j] = grid.neighbor(self.nodes[sel], -o, reflect=refl)
        self.fits = (self.plus >= 0) & (self.minus >= 0)
        self.scale = 1.0 / (grid.h ** 2 * (dirs.offsets.astype(float) ** 2).sum(1))
        self._P = dirs.frame_matrix()
        self._frame_size = self._P.sum(0)
        self.frame_fits = (self.fits.astype(float) @ self._P) == self._frame_size
        if n and not self.frame_fits.any(axis=1).all():
            bad = self.nodes[~self.frame_fits.any(axis=1)]
            raise ValueError(f"no frame fits at nodes {bad[:5].tolist()}")
        self._safe_plus = np.where(self.fits, self.plus, self.nodes[:, None])
        self._safe_minus = np.where(self.fits, self.minus, self.nodes[:, None])
        if isinstance(op, Bellman):
            self._setup_bellman()
        elif not isinstance(op, Pucci):
            raise TypeError(f"unsupported operator {op!r}")

    # -- Bellman decomposition -------------------------------------------------
    def _setup_bellman(self):
        offs = self.dirs.offsets
        near = np.abs(offs).max(1) <= 1
        axis = np.abs(offs).sum(1) == 1
        n = self.nodes.size
        members = self.op.family.members
        self.bellman_w = np.zeros((len(members), n, self.dirs.n_dirs))
        self.bellman_residual = []
        for a, A in enumerate(members):
            chosen = np.zeros(n, dtype=bool)
            resid = []
            for subset in (np.ones_like(near), near, axis):
                w = np.zeros(self.dirs.n_dirs)
                if subset is axis:
                    for j in np.flatnonzero(axis):
                        k = int(np.flatnonzero(offs[j])[0])
                        w[j] = A[k, k]
                    res = float(np.abs(A - np.diag(np.diag(A))).max())
                else:
                    w[subset], res = _bellman_weights(A, offs[subset])
                used = w > 0
                ok = ~chosen & self.fits[:, used].all(axis=1)
                self.bellman_w[a, ok] = w
                chosen |= ok
                resid.append(res)
            self.bellman_residual.append(resid)

    # -- evaluation ----------------------------------------------------------
    def neighbor_sums(self, u):
        return u[self._safe_plus] + u[self._safe_minus]

    def differences(self, u, center=None, S=None):
        """Directional second differences; zero where the stencil does not fit."""
        S = self.neighbor_sums(u) if S is None else S
        c = u[self.nodes] if center is None else center
        D = (S - 2.0 * c[:, None]) * self.scale
        return np.where(self.fits, D, 0.0)

    def _apply(self, D, want_policy):
        op = self.op
        if isinstance(op, Pucci):
            hi, lo = (op.ell.Lam, op.ell.lam) if op.sign == "plus" else (op.ell.lam, op.ell.Lam)
            coef = np.where(D >= 0, hi, lo)
            vals = (coef * D) @ self._P
            if op.sign == "plus":
                vals = np.where(self.frame_fits, vals, -np.inf)
                best = np.argmax(vals, axis=1)
            else:
                vals = np.where(self.frame_fits, vals, np.inf)
                best = np.argmin(vals, axis=1)
            F = vals[np.arange(len(best)), best]
            if not want_policy:
                return F, None
            return F, coef * self._P[:, best].T
        vals = np.einsum("anj,nj->na", self.bellman_w, D)
        best = np.argmax(vals, axis=1)
        F = vals[np.arange(len(best)), best]
        if not want_policy:
            return F, None
        return F, self.bellman_w[best, np.arange(len(best))]

    def evaluate(self, u) -> np.ndarray:
        return self._apply(self.differences(u), False)[0]

    def policy(self, u):
        """Operator values and the active linear coefficients (n, m)."""
        return self._apply(self.differences(u), True)

    def evaluate_center(self, S, t) -> np.ndarray:
        """Operator values with neighbour sums ``S`` fixed and centre values ``t``."""
        D = np.where(self.fits, (S - 2.0 * t[:, None]) * self.scale, 0.0)
        return self._apply(D, False)[0]

    def center_slope_bounds(self):
        """Bounds on -dF/du(node): the scheme decreases in the centre value."""
        lam, Lam = self.op.ell.lam, self.op.ell.Lam
        s = np.where(self.fits, self.scale, np.inf)
        total = np.where(self.fits, self.scale, 0.0).sum(axis=1)
        return 2.0 * lam * s.min(axis=1), 2.0 * Lam * total

    def linear_rows(self, C):
        """COO triples (row, col, val) of u -> sum_j C_j s_j (u+ + u- - 2u) per node."""
        n, m = C.shape
        W = np.where(self.fits, C * self.scale, 0.0)
        rows = np.repeat(np.arange(n), m)
        r = np.concatenate([rows, rows, np.arange(n)])
        c = np.concatenate([self._safe_plus.ravel(), self._safe_minus.ravel(), self.nodes])
        v = np.concatenate([W.ravel(), W.ravel(), -2.0 * W.sum(axis=1)])
        keep = v != 0.0
        return r[keep], c[keep], v[keep]

    def matrix(self, C) -> sp.csr_matrix:
        r, c, v = self.linear_rows(C)
        return sp.csr_matrix((v, (r, c)), shape=(self.nodes.size, self.grid.n_nodes))


def interior_nodes(grid: Grid) -> np.ndarray:
    """Nodes where the axis frame fits without reflection."""
    mask = ~grid.outer
    if grid.symmetric_in_xn:
        mask &= ~grid.thin
    return np.flatnonzero(mask)


def discrete_extremal(f: GridFunction, ell, dirs: DirectionSet, sign: str = "plus"):
    """Wide-stencil approximation of M+/-(D^2 f) at interior nodes.

    Returns ``(nodes, values)``; outer-boundary nodes (and, on symmetric grids,
    thin nodes) are excluded. Frames whose stencil leaves the grid are skipped
    at that node; the axis frame always fits.
    """
    nodes = interior_nodes(f.grid)
    D = DiscreteOperator(f.grid, Pucci(ell, sign), dirs, nodes)
    return nodes, D.evaluate(f.values)

"""Uniform lattice grids over boxes and half-balls, and sampled fields on them."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform grid with spacing ``h`` over a box ``prod [-extent_k, extent_k]``.

    The last axis is ``x_n``. When ``symmetric_in_xn`` is set only ``x_n >= 0``
    is stored and fields are understood as even in ``x_n``. With ``ball=True``
    the node set is cut to ``|x| <= extent[0]`` (all extents must agree).
    Nodes are numbered in C order of their lattice coordinates.
    """

    dim: int
    h: float
    extent: tuple
    symmetric_in_xn: bool = True
    ball: bool = False

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        ext = tuple(float(e) for e in np.broadcast_to(self.extent, (self.dim,)))
        object.__setattr__(self, "extent", ext)
        object.__setattr__(self, "h", float(self.h))
        if not self.h > 0 or min(ext) <= 0:
            raise ValueError("h and extents must be positive")
        for e in ext:
            m = e / self.h
            if abs(m - round(m)) > 1e-9 * max(1.0, m):
                raise ValueError(f"h={self.h} does not divide extent {e}")
        if self.ball and len(set(ext)) != 1:
            raise ValueError("ball grids need equal extents")

    @classmethod
    def box(cls, dim=2, radius=1.0, h=1 / 32, symmetric_in_xn=True):
        return cls(dim, h, (radius,) * dim, symmetric_in_xn, False)

    @classmethod
    def half_ball(cls, dim=2, radius=1.0, h=1 / 32):
        return cls(dim, h, (radius,) * dim, True, True)

    @cached_property
    def counts(self) -> np.ndarray:
        return np.array([int(round(e / self.h)) for e in self.extent])

    @cached_property
    def lo(self) -> np.ndarray:
        lo = -self.counts.copy()
        if self.symmetric_in_xn:
            lo[-1] = 0
        return lo

    @cached_property
    def shape(self) -> tuple:
        return tuple(int(s) for s in self.counts - self.lo + 1)

    @cached_property
    def index(self) -> np.ndarray:
        """Integer lattice coordinates of the nodes, shape (N, dim)."""
        axes = [np.arange(l, c + 1) for l, c in zip(self.lo, self.counts)]
        I = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        if self.ball:
            R = self.counts[0]
            I = I[(I.astype(float) ** 2).sum(1) <= R * R * (1 + 1e-12)]
        I.setflags(write=False)
        return I

    @cached_property
    def points(self) -> np.ndarray:
        P = self.index * self.h
        P.setflags(write=False)
        return P

    @property
    def n_nodes(self) -> int:
        return self.index.shape[0]

    @cached_property
    def lookup(self) -> np.ndarray:
        table = np.full(self.shape, -1, dtype=np.int64)
        table[tuple((self.index - self.lo).T)] = np.arange(self.n_nodes)
        return table

    def neighbor(self, nodes, offset, reflect=False) -> np.ndarray:
        """Node index of ``nodes + offset`` (lattice units), -1 where absent.

        With ``reflect`` on a symmetric grid, points below ``x_n = 0`` are
        mapped to their mirror image.
        """
        I = self.index[np.asarray(nodes)] + np.asarray(offset, dtype=np.int64)
        if reflect and self.symmetric_in_xn:
            I[..., -1] = np.abs(I[..., -1])
        J = I - self.lo
        ok = np.all((J >= 0) & (J < np.array(self.shape)), axis=-1)
        out = np.full(J.shape[:-1], -1, dtype=np.int64)
        out[ok] = self.lookup[tuple(J[ok].T)]
        return out

    def node_at(self, x) -> int:
        """Index of the node at point ``x`` (must lie on the lattice)."""
        I = np.rint(np.asarray(x, dtype=float) / self.h).astype(np.int64)
        if np.abs(I * self.h - np.asarray(x, dtype=float)).max() > 1e-9 * max(1.0, self.h):
            raise ValueError(f"{x} is not a lattice point")
        J = I - self.lo
        if np.any(J < 0) or np.any(J >= np.array(self.shape)) or self.lookup[tuple(J)] < 0:
            raise ValueError(f"{x} is outside the grid")
        return int(self.lookup[tuple(J)])

    @cached_property
    def thin(self) -> np.ndarray:
        """Boolean mask of nodes on {x_n = 0}."""
        return self.index[:, -1] == 0

    @cached_property
    def outer(self) -> np.ndarray:
        """Boolean mask of outer-boundary nodes (some axis neighbour missing)."""
        nodes = np.arange(self.n_nodes)
        missing = np.zeros(self.n_nodes, dtype=bool)
        for k in range(self.dim):
            for s in (1, -1):
                off = np.zeros(self.dim, dtype=np.int64)
                off[k] = s
                nb = self.neighbor(nodes, off)
                if k == self.dim - 1 and s == -1 and self.symmetric_in_xn:
                    nb = np.where(self.thin, 0, nb)
                missing |= nb < 0
        return missing

    @cached_property
    def thin_nodes(self) -> np.ndarray:
        """Thin-boundary nodes that are not on the outer boundary."""
        return np.flatnonzero(self.thin & ~self.outer)

    @cached_property
    def thin_projection(self) -> np.ndarray:
        """For every node, the node with the same x' on {x_n = 0} (-1 if absent)."""
        I = self.index.copy()
        I[:, -1] = 0
        J = I - self.lo
        return self.lookup[tuple(J.T)]

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "h": self.h,
            "extent": list(self.extent),
            "symmetric_in_xn": self.symmetric_in_xn,
            "ball": self.ball,
            "n_nodes": self.n_nodes,
        }

    def full(self) -> "Grid":
        """The grid covering both sides of {x_n = 0}."""
        return Grid(self.dim, self.h, self.extent, False, self.ball)


@dataclass
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_nodes,):
            raise ValueError(f"expected {self.grid.n_nodes} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        self.values = v

    @classmethod
    def sample(cls, grid: Grid, f) -> "GridFunction":
        return cls(grid, np.asarray(f(grid.points), dtype=float))

    def reflect_full(self) -> "GridFunction":
        """Even extension across {x_n = 0} onto the full grid."""
        if not self.grid.symmetric_in_xn:
            return self
        G = self.grid.full()
        I = G.index.copy()
        I[:, -1] = np.abs(I[:, -1])
        src = self.grid.lookup[tuple((I - self.grid.lo).T)]
        return GridFunction(G, self.values[src])

    def to_csv(self, path) -> Path:
        path = Path(path)
        names = [f"x{k}" for k in range(self.grid.dim)] + ["value"]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for p, v in zip(self.grid.points, self.values):
                w.writerow([repr(float(c)) for c in p] + [repr(float(v))])
        return path

    @classmethod
    def from_csv(cls, path, grid: Grid) -> "GridFunction":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape != (grid.n_nodes, grid.dim + 1):
            raise ValueError("CSV does not match the grid")
        if np.abs(data[:, :-1] - grid.points).max() > 1e-9:
            raise ValueError("CSV coordinates do not match node order")
        return cls(grid, data[:, -1])

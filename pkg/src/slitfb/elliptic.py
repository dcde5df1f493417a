"""Exact Pucci extremal and convex Bellman operators on symmetric matrices.

All functions accept a single ``(d, d)`` matrix or a stack ``(..., d, d)`` and
return a float or an array of the stack shape. Dimensions 2 and 3 only.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SYM_TOL = 1e-12
JACOBI_TOL = 1e-13


@dataclass(frozen=True)
class EllipticityPair:
    """Ellipticity constants ``0 < lam <= Lam``."""

    lam: float
    Lam: float

    def __post_init__(self):
        lam, Lam = float(self.lam), float(self.Lam)
        if not (np.isfinite(lam) and np.isfinite(Lam)):
            raise ValueError("ellipticity constants must be finite")
        if not 0 < lam <= Lam:
            raise ValueError(f"need 0 < lambda <= Lambda, got ({lam}, {Lam})")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "Lam", Lam)

    @property
    def ratio(self) -> float:
        return self.Lam / self.lam


def as_sym(H, tol: float = SYM_TOL) -> np.ndarray:
    """Validate and return ``H`` as a float array of symmetric 2x2 or 3x3 matrices."""
    H = np.asarray(H, dtype=float)
    if H.ndim < 2 or H.shape[-1] != H.shape[-2] or H.shape[-1] not in (2, 3):
        raise ValueError(f"expected (..., d, d) with d in (2, 3), got {H.shape}")
    if not np.all(np.isfinite(H)):
        raise ValueError("matrix entries must be finite")
    asym = np.abs(H - np.swapaxes(H, -1, -2)).max(axis=(-1, -2))
    scale = 1.0 + np.abs(H).max(axis=(-1, -2))
    if np.any(asym > tol * scale):
        raise ValueError("matrix is not symmetric")
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def _eig2(H):
    a, b, c = H[..., 0, 0], H[..., 0, 1], H[..., 1, 1]
    mean = 0.5 * (a + c)
    rad = np.hypot(0.5 * (a - c), b)
    return np.stack([mean - rad, mean + rad], axis=-1)


def _jacobi3(H, tol=JACOBI_TOL, max_sweeps=60):
    # cyclic Jacobi, vectorized over the stack
    A = H.reshape(-1, 3, 3).copy()
    idx = np.arange(A.shape[0])
    for _ in range(max_sweeps):
        off = np.sqrt(A[:, 0, 1] ** 2 + A[:, 0, 2] ** 2 + A[:, 1, 2] ** 2)
        norm = np.sqrt((A ** 2).sum(axis=(1, 2)))
        if np.all(off <= tol * np.maximum(norm, np.finfo(float).tiny)):
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = A[:, p, q]
            active = apq != 0.0
            if not active.any():
                continue
            theta = np.zeros_like(apq)
            # a tiny apq overflows theta to inf, which correctly gives t = 0
            with np.errstate(over="ignore"):
                theta[active] = (A[active, q, q] - A[active, p, p]) / (2.0 * apq[active])
            t = np.where(active, np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0)), 0.0)
            t = np.where(active & (theta == 0.0), 1.0, t)
            c = 1.0 / np.sqrt(t ** 2 + 1.0)
            s = t * c
            R = np.broadcast_to(np.eye(3), A.shape).copy()
            R[idx, p, p] = c
            R[idx, q, q] = c
            R[idx, p, q] = s
            R[idx, q, p] = -s
            A = np.swapaxes(R, 1, 2) @ A @ R
            A[:, p, q] = 0.0
            A[:, q, p] = 0.0
    ev = np.sort(np.diagonal(A, axis1=1, axis2=2), axis=-1)
    return ev.reshape(H.shape[:-1])


def eig_sym(H) -> np.ndarray:
    """Ascending eigenvalues of a symmetric 2x2 (closed form) or 3x3 (Jacobi) matrix."""
    H = as_sym(H)
    if H.shape[-1] == 2:
        return _eig2(H)
    return _jacobi3(H)


def _signed_sums(H):
    ev = eig_sym(H)
    return np.where(ev > 0, ev, 0.0).sum(axis=-1), np.where(ev < 0, ev, 0.0).sum(axis=-1)


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def pucci_plus(H, ell: EllipticityPair):
    """M+(H) = Lam * (sum of positive eigenvalues) + lam * (sum of negative eigenvalues)."""
    pos, neg = _signed_sums(H)
    return _scalar(ell.Lam * pos + ell.lam * neg)


def pucci_minus(H, ell: EllipticityPair):
    """M-(H) = lam * (sum of positive eigenvalues) + Lam * (sum of negative eigenvalues)."""
    pos, neg = _signed_sums(H)
    return _scalar(ell.lam * pos + ell.Lam * neg)


@dataclass(frozen=True)
class BellmanFamily:
    """Finite family of coefficient matrices; F(H) = max_a tr(A_a H).

    Every member must have its spectrum inside ``[ell.lam, ell.Lam]``.
    """

    members: np.ndarray
    ell: EllipticityPair
    tol: float = field(default=1e-10, compare=False)

    def __post_init__(self):
        M = np.asarray(self.members, dtype=float)
        if M.ndim == 2:
            M = M[None]
        if M.ndim != 3 or M.shape[0] == 0:
            raise ValueError("Bellman family must be a nonempty list of matrices")
        M = as_sym(M)
        ev = eig_sym(M)
        if ev.min() < self.ell.lam - self.tol or ev.max() > self.ell.Lam + self.tol:
            raise ValueError("member eigenvalues outside [lambda, Lambda]")
        M.setflags(write=False)
        object.__setattr__(self, "members", M)

    @property
    def dim(self) -> int:
        return self.members.shape[-1]


def bellman_eval(fam: BellmanFamily, H):
    """sup over members of tr(A H)."""
    H = as_sym(H)
    if H.shape[-1] != fam.dim:
        raise ValueError("dimension mismatch between family and matrix")
    vals = np.einsum("aij,...ji->...a", fam.members, H)
    return _scalar(vals.max(axis=-1))


@dataclass(frozen=True)
class Pucci:
    """Pucci extremal operator; ``sign`` is ``"plus"`` or ``"minus"``."""

    ell: EllipticityPair
    sign: str = "plus"

    def __post_init__(self):
        if self.sign not in ("plus", "minus"):
            raise ValueError(f"sign must be 'plus' or 'minus', got {self.sign!r}")

    def __call__(self, H):
        return pucci_plus(H, self.ell) if self.sign == "plus" else pucci_minus(H, self.ell)

    def describe(self) -> dict:
        return {"kind": f"pucci_{self.sign}", "lambda": self.ell.lam, "Lambda": self.ell.Lam}


@dataclass(frozen=True)
class Bellman:
    family: BellmanFamily

    @property
    def ell(self) -> EllipticityPair:
        return self.family.ell

    def __call__(self, H):
        return bellman_eval(self.family, H)

    def describe(self) -> dict:
        return {
            "kind": "bellman",
            "lambda": self.ell.lam,
            "Lambda": self.ell.Lam,
            "members": self.family.members.tolist(),
        }


def random_symmetric(rng: np.random.Generator, n: int, dim: int, scale: float = 1.0) -> np.ndarray:
    A = rng.normal(scale=scale, size=(n, dim, dim))
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def random_family(rng: np.random.Generator, ell: EllipticityPair, dim: int, size: int = 5) -> BellmanFamily:
    """Members Q diag(d) Q^T with d uniform in [lam, Lam] and Q orthogonal."""
    Q, _ = np.linalg.qr(rng.normal(size=(size, dim, dim)))
    d = rng.uniform(ell.lam, ell.Lam, size=(size, dim))
    return BellmanFamily(np.einsum("aij,aj,akj->aik", Q, d, Q), ell)


def algebra_violations(rng: np.random.Generator, ell: EllipticityPair, dim: int, n: int = 10_000) -> dict:
    """Largest violation of each structural identity/inequality over ``n`` random samples.

    Inequalities report ``max(0, lhs - rhs)``; identities report ``|lhs - rhs|``.
    """
    A, B = random_symmetric(rng, n, dim), random_symmetric(rng, n, dim)
    G = rng.normal(size=(n, dim, dim))
    P = np.einsum("nij,nkj->nik", G, G)
    t = rng.uniform(0.01, 10.0, size=n)
    Mp = lambda H: pucci_plus(H, ell)
    Mm = lambda H: pucci_minus(H, ell)
    fam = random_family(rng, ell, dim)
    F = lambda H: bellman_eval(fam, H)
    pos = lambda x: float(np.maximum(x, 0.0).max())
    return {
        "homogeneity": float(max(
            np.abs(Mp(t[:, None, None] * A) - t * Mp(A)).max(),
            np.abs(Mm(t[:, None, None] * A) - t * Mm(A)).max(),
        )),
        "subadditivity": max(pos(Mp(A + B) - Mp(A) - Mp(B)), pos(Mm(A) + Mm(B) - Mm(A + B))),
        "monotonicity": max(pos(Mp(A) - Mp(A + P)), pos(Mm(A) - Mm(A + P))),
        "duality": float(np.abs(Mm(A) + Mp(-A)).max()),
        "bellman_sandwich": max(pos(Mm(A - B) - (F(A) - F(B))), pos(F(A) - F(B) - Mp(A - B))),
    }

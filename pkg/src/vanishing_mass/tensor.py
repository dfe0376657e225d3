"""Symmetric 2x2 / 3x3 matrix kernel.

Everything here works on plain ``numpy`` arrays of shape ``(..., n, n)``;
:class:`SymMat` is a small immutable wrapper used at API boundaries.
Eigenvalues are always returned "ordered as singular values": by absolute
value ascending, ties broken by signed value ascending.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class SymMat:
    """Symmetric matrix of dimension 2 or 3 stored by its upper triangle."""

    dim: int
    entries: tuple[float, ...]

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise InputError(f"dimension must be 2 or 3, got {self.dim}")
        if len(self.entries) != self.dim * (self.dim + 1) // 2:
            raise InputError("wrong number of upper-triangle entries")
        if not all(np.isfinite(self.entries)):
            raise InputError("matrix entries must be finite")

    @classmethod
    def from_array(cls, a) -> "SymMat":
        a = as_matrix(a)
        iu = np.triu_indices(a.shape[0])
        return cls(a.shape[0], tuple(float(v) for v in a[iu]))

    @classmethod
    def diag(cls, *values: float) -> "SymMat":
        return cls.from_array(np.diag(np.asarray(values, dtype=float)))

    @property
    def array(self) -> np.ndarray:
        a = np.zeros((self.dim, self.dim))
        iu = np.triu_indices(self.dim)
        a[iu] = self.entries
        return a + np.triu(a, 1).T

    def __array__(self, dtype=None, copy=None):
        return self.array if dtype is None else self.array.astype(dtype)


@dataclass(frozen=True)
class Spectrum:
    """Ordered eigen-decomposition ``m = P diag(eigvals) P^T``."""

    eigvals: np.ndarray
    rotation: np.ndarray
    ordering: str = "abs-ascending"

    def recompose(self) -> np.ndarray:
        return (self.rotation * self.eigvals) @ self.rotation.T


@dataclass(frozen=True)
class WaveConeSample:
    """A singular symmetric matrix with its determinant as certificate."""

    matrix: SymMat
    certificate: float


def as_matrix(m, *, batch: bool = False) -> np.ndarray:
    """Convert ``m`` to a float array of symmetric matrices and validate it.

    With ``batch=False`` exactly one ``(n, n)`` matrix is accepted, otherwise
    any ``(..., n, n)`` stack.
    """
    a = np.asarray(m.array if isinstance(m, SymMat) else m, dtype=float)
    if a.ndim < 2 or (not batch and a.ndim != 2):
        raise InputError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[-1]
    if a.shape[-2] != n or n not in (2, 3):
        raise InputError(f"expected 2x2 or 3x3 matrices, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError("matrix entries must be finite")
    asym = np.abs(a - np.swapaxes(a, -1, -2)).max(initial=0.0)
    if asym > 1e-12 * max(1.0, np.abs(a).max(initial=0.0)):
        raise InputError("matrix is not symmetric")
    return a


def _order_abs(vals: np.ndarray, rtol: float = 1e-13) -> np.ndarray:
    """Permutation sorting the last axis by (|v|, v).

    Absolute values closer than ``rtol`` times the largest one count as
    tied, so rounding noise cannot flip a signed tie-break.
    """
    order = np.argsort(np.abs(vals), axis=-1, kind="stable")
    v = np.take_along_axis(vals, order, axis=-1)
    tol = rtol * np.abs(vals).max(axis=-1)
    n = vals.shape[-1]
    for _ in range(n - 1):
        for i in range(n - 1):
            a, b = v[..., i], v[..., i + 1]
            swap = (np.abs(np.abs(b) - np.abs(a)) <= tol) & (b < a)
            v[..., i], v[..., i + 1] = np.where(swap, b, a), np.where(swap, a, b)
            oi, oj = order[..., i].copy(), order[..., i + 1].copy()
            order[..., i], order[..., i + 1] = np.where(swap, oj, oi), np.where(swap, oi, oj)
    return order


def _eig2(a: np.ndarray) -> np.ndarray:
    m = 0.5 * (a[..., 0, 0] + a[..., 1, 1])
    r = np.hypot(0.5 * (a[..., 0, 0] - a[..., 1, 1]), a[..., 0, 1])
    return np.stack([m - r, m + r], axis=-1)


def _cardano(a: np.ndarray) -> np.ndarray:
    """Trigonometric roots of the characteristic cubic, ascending."""
    q = np.trace(a, axis1=-2, axis2=-1) / 3.0
    p1 = a[..., 0, 1] ** 2 + a[..., 0, 2] ** 2 + a[..., 1, 2] ** 2
    p2 = ((a[..., 0, 0] - q) ** 2 + (a[..., 1, 1] - q) ** 2
          + (a[..., 2, 2] - q) ** 2 + 2.0 * p1)
    p = np.sqrt(p2 / 6.0)
    safe = np.where(p > 0, p, 1.0)
    b = (a - q[..., None, None] * np.eye(3)) / safe[..., None, None]
    r = np.clip(np.linalg.det(b) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    hi = q + 2.0 * p * np.cos(phi)
    lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    return np.stack([lo, 3.0 * q - hi - lo, hi], axis=-1)


def _newton(a: np.ndarray, lam: np.ndarray) -> np.ndarray:
    # one Newton step on det(a - lam I), kept only where it reduces the residual
    tr = np.trace(a, axis1=-2, axis2=-1)
    c1 = (a[..., 0, 0] * a[..., 1, 1] + a[..., 0, 0] * a[..., 2, 2]
          + a[..., 1, 1] * a[..., 2, 2] - a[..., 0, 1] ** 2
          - a[..., 0, 2] ** 2 - a[..., 1, 2] ** 2)
    c0 = np.linalg.det(a)

    def poly(x):
        return ((x - tr) * x + c1) * x - c0

    dp = (3.0 * lam - 2.0 * tr) * lam + c1
    ok = dp != 0
    cand = lam - np.where(ok, poly(lam) / np.where(ok, dp, 1.0), 0.0)
    return np.where(np.abs(poly(cand)) < np.abs(poly(lam)), cand, lam)


def _eig3_full(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors of a stack of 3x3 symmetric matrices.

    The root with the widest gap is polished and its eigenvector taken from
    cross products of rows of ``a - lam I``; the remaining pair comes from the
    projected 2x2 problem, which avoids the square-root accuracy loss of the
    cubic near double roots.
    """
    roots = _cardano(a)
    lo, mid, hi = roots[..., 0], roots[..., 1], roots[..., 2]
    lam = _newton(a, np.where(mid - lo > hi - mid, lo, hi))
    m = a - lam[..., None, None] * np.eye(3)
    cands = np.stack([np.cross(m[..., 0, :], m[..., 1, :]),
                      np.cross(m[..., 0, :], m[..., 2, :]),
                      np.cross(m[..., 1, :], m[..., 2, :])], axis=-2)
    norms = np.einsum("...ki,...ki->...k", cands, cands)
    best = np.argmax(norms, axis=-1)
    v = np.take_along_axis(cands, best[..., None, None], axis=-2)[..., 0, :]
    vn = np.sqrt(np.take_along_axis(norms, best[..., None], axis=-1))
    degenerate = vn[..., 0] == 0
    v = np.where(degenerate[..., None], np.array([1.0, 0.0, 0.0]),
                 v / np.where(vn > 0, vn, 1.0))
    # orthonormal complement of v
    k = np.argmin(np.abs(v), axis=-1)
    ek = np.eye(3)[k]
    u = ek - np.take_along_axis(v, k[..., None], axis=-1) * v
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    w = np.stack([u, np.cross(v, u)], axis=-1)
    a2 = np.swapaxes(w, -1, -2) @ a @ w
    th = 0.5 * np.arctan2(2.0 * a2[..., 0, 1], a2[..., 0, 0] - a2[..., 1, 1])
    c, s = np.cos(th), np.sin(th)
    r2 = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    vecs2 = w @ r2
    vecs = np.concatenate([v[..., :, None], vecs2], axis=-1)
    vals = np.einsum("...ji,...jk,...ki->...i", vecs, a, vecs)
    return vals, vecs


def _eig3(a: np.ndarray) -> np.ndarray:
    return _eig3_full(a)[0]


def eigvals_ordered(m) -> np.ndarray:
    """Eigenvalues of one matrix or a stack, ordered as singular values."""
    a = as_matrix(m, batch=True)
    vals = _eig2(a) if a.shape[-1] == 2 else _eig3(a)
    return np.take_along_axis(vals, _order_abs(vals), axis=-1)


def _rot2(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    th = 0.5 * np.arctan2(2.0 * a[0, 1], a[0, 0] - a[1, 1])
    c, s = np.cos(th), np.sin(th)
    p = np.array([[c, -s], [s, c]])
    vals = np.einsum("ji,jk,ki->i", p, a, p)
    return vals, p


def _rot3(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return _eig3_full(a)


def eigen_ordered(m) -> Spectrum:
    """Ordered spectral decomposition of a single symmetric matrix.

    Parameters
    ----------
    m : SymMat or array_like
        Symmetric 2x2 or 3x3 matrix with finite entries.

    Returns
    -------
    Spectrum
        Eigenvalues sorted by absolute value ascending (ties by signed value
        ascending) and a rotation ``P`` with ``det P = +1``.
    """
    a = as_matrix(m)
    vals, p = _rot2(a) if a.shape[0] == 2 else _rot3(a)
    order = _order_abs(vals)
    vals, p = vals[order], p[:, order]
    if np.linalg.det(p) < 0:
        p[:, -1] = -p[:, -1]
    return Spectrum(eigvals=vals, rotation=p)


def inner(a, b) -> float | np.ndarray:
    """Frobenius product ``a : b`` (broadcasts over leading axes)."""
    a = as_matrix(a, batch=True)
    b = as_matrix(b, batch=True)
    if a.shape[-1] != b.shape[-1]:
        raise InputError("dimension mismatch in inner product")
    r = np.einsum("...ij,...ij->...", a, b)
    return float(r) if np.ndim(r) == 0 else r


def frob2(a) -> np.ndarray:
    """Squared Frobenius norm over the last two axes."""
    a = np.asarray(a, dtype=float)
    return np.einsum("...ij,...ij->...", a, a)


def random_rotations(dim: int, rng: np.random.Generator, count: int) -> np.ndarray:
    """Haar-distributed rotations, shape ``(count, dim, dim)``."""
    g = rng.standard_normal((count, dim, dim))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diagonal(r, axis1=-2, axis2=-1))[:, None, :]
    flip = np.linalg.det(q) < 0
    q[flip, :, 0] *= -1.0
    return q


def random_sym(dim: int, rng: np.random.Generator, count: int, scale: float = 1.0) -> np.ndarray:
    """Random symmetric matrices with Gaussian entries."""
    g = rng.standard_normal((count, dim, dim)) * scale
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def wave_cone_batch(dim: int, seed: int, count: int) -> np.ndarray:
    """Stack of singular matrices ``P diag(0, d_2, ..., d_n) P^T``."""
    rng = np.random.default_rng(seed)
    p = random_rotations(dim, rng, count)
    d = np.zeros((count, dim))
    d[:, 1:] = rng.uniform(-1.0, 1.0, (count, dim - 1))
    return np.einsum("kij,kj,klj->kil", p, d, p)


def sample_wave_cone(dim: int, rng_seed: int, count: int) -> list[WaveConeSample]:
    """Random elements of the wave cone (singular symmetric matrices)."""
    if count < 1:
        raise InputError("count must be at least 1")
    if dim not in (2, 3):
        raise InputError("dimension must be 2 or 3")
    mats = wave_cone_batch(dim, rng_seed, count)
    dets = np.linalg.det(mats)
    return [WaveConeSample(SymMat.from_array(0.5 * (m + m.T)), float(d))
            for m, d in zip(mats, dets)]


def is_singular(m, tol: float = SINGULAR_TOL) -> bool:
    a = as_matrix(m)
    n = a.shape[0]
    return abs(np.linalg.det(a)) <= tol * max(1.0, np.sqrt(frob2(a)) ** n)


__all__ = [
    "SymMat", "Spectrum", "WaveConeSample", "as_matrix", "eigvals_ordered",
    "eigen_ordered", "inner", "frob2", "random_rotations", "random_sym",
    "wave_cone_batch", "sample_wave_cone", "is_singular", "SINGULAR_TOL",
]

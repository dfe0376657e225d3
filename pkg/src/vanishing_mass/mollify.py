"""Mollification of measures on a domain that keeps supports inside it.

The field is ``lambda^delta(x) = det(J) K(theta(x)) J^{-1}`` with the
expansion map ``theta(x) = x + 3 delta grad k(x)``, ``J = grad theta``, and
``K = eta_delta * lambda`` the ordinary mollification.  Because ``theta``
pushes the boundary outward by ``3 delta``, ``lambda^delta`` vanishes near
the boundary, and for divergence-free ``lambda`` the change of variables
gives ``int lambda^delta : grad v = int K : grad(v o theta^{-1}) = 0``.

``J`` and ``K`` are both symmetric but their product need not be, so
``lambda^delta`` is in general a non-symmetric matrix field; its skew part
is of order ``delta``.  Divergence preservation holds row-wise for exactly
this product order.

Measures are finite sums of point atoms, uniform line densities on segments,
constant densities on axis-aligned boxes, and Airy-type densities
``cof D^2 psi`` of a compactly supported polynomial bump ``psi``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from math import gamma, pi
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .errors import InputError, PreconditionError

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- bump


@lru_cache(maxsize=None)
def eta_constant(dim: int) -> float:
    """Normalization of ``exp(-1/(1-|z|^2))`` on the unit ball."""
    sphere = 2.0 * pi ** (dim / 2) / gamma(dim / 2)
    val, _ = quad(lambda r: np.exp(-1.0 / (1.0 - r * r)) * r ** (dim - 1), 0.0, 1.0,
                  epsabs=1e-15, epsrel=1e-14, limit=200)
    return 1.0 / (sphere * val)


def eta(z: np.ndarray) -> np.ndarray:
    """Standard bump supported in the open unit ball, unit integral."""
    z = np.asarray(z, dtype=float)
    r2 = np.einsum("...i,...i->...", z, z)
    inside = r2 < 1.0
    out = np.zeros(r2.shape)
    out[inside] = eta_constant(z.shape[-1]) * np.exp(-1.0 / (1.0 - r2[inside]))
    return out


# ---------------------------------------------------------------- domain


def smoothstep(t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``s = 6t^5 - 15t^4 + 10t^3`` clipped to ``[0, 1]``, with ``s'`` and ``s''``."""
    t = np.clip(t, 0.0, 1.0)
    s = t**3 * (10.0 + t * (-15.0 + 6.0 * t))
    ds = 30.0 * t**2 * (1.0 - t) ** 2
    d2s = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
    return s, ds, d2s


def disk_cutoff(r: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``phi(r)``: 1 on ``[0.75, 1.25]``, 0 outside ``[0.5, 1.5]``, C^2 blend."""
    s1, d1, dd1 = smoothstep((r - 0.5) / 0.25)
    s2, d2, dd2 = smoothstep((1.5 - r) / 0.25)
    inner = r < 1.0
    phi = np.where(inner, s1, s2)
    dphi = np.where(inner, d1 / 0.25, -d2 / 0.25)
    d2phi = np.where(inner, dd1 / 0.0625, dd2 / 0.0625)
    return phi, dphi, d2phi


def _radial_profile(r):
    # f(r) = phi(r) (r - 1) and its first two derivatives
    phi, dphi, d2phi = disk_cutoff(r)
    f = phi * (r - 1.0)
    df = dphi * (r - 1.0) + phi
    d2f = d2phi * (r - 1.0) + 2.0 * dphi
    return f, df, d2f


def _disk_k(x):
    r = np.linalg.norm(x, axis=-1)
    return _radial_profile(r)[0]


def _disk_grad(x):
    r = np.linalg.norm(x, axis=-1)
    _, df, _ = _radial_profile(r)
    rs = np.where(r > 0, r, 1.0)
    return (df / rs)[..., None] * x


def _disk_hess(x):
    r = np.linalg.norm(x, axis=-1)
    _, df, d2f = _radial_profile(r)
    rs = np.where(r > 0, r, 1.0)
    u = x / rs[..., None]
    uu = u[..., :, None] * u[..., None, :]
    n = x.shape[-1]
    # k vanishes for r < 0.5, so the r -> 0 limit never matters
    return d2f[..., None, None] * uu + (df / rs)[..., None, None] * (np.eye(n) - uu)


def _disk_boundary(count: int) -> np.ndarray:
    th = 2.0 * np.pi * np.arange(count) / count
    return np.stack([np.cos(th), np.sin(th)], axis=1)


@dataclass
class DomainDescriptor:
    """C^2 domain data for the expansion map.

    ``k`` equals the signed distance near the boundary, so ``grad k`` is the
    outer normal there.  ``hess_sup`` is ``sup ||D^2 k||`` (spectral norm)
    from dense sampling over ``bbox``; ``delta_0 = min(0.9 / (3 hess_sup),
    0.9, delta_outer)``.
    """

    dim: int
    k: Callable[[np.ndarray], np.ndarray]
    grad_k: Callable[[np.ndarray], np.ndarray]
    hess_k: Callable[[np.ndarray], np.ndarray]
    inside: Callable[[np.ndarray], np.ndarray]
    boundary_sampler: Callable[[int], np.ndarray]
    outside_distance: Callable[[np.ndarray], np.ndarray]
    bbox: tuple[np.ndarray, np.ndarray]
    hess_sup: float = 0.0
    grad_sup: float = 0.0
    delta_0: float = 0.0
    delta_outer: float = np.inf
    boundary_normal: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.hess_sup <= 0.0:
            self._estimate_constants()

    def _estimate_constants(self, n: int = 801) -> None:
        lo, hi = (np.asarray(b, dtype=float) for b in self.bbox)
        axes = [np.linspace(lo[i], hi[i], n) for i in range(self.dim)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        hs = 0.0
        gs = 0.0
        for chunk in np.array_split(pts, max(1, len(pts) // 200_000)):
            ev = np.linalg.eigvalsh(self.hess_k(chunk))
            hs = max(hs, float(np.abs(ev).max()))
            gs = max(gs, float(np.linalg.norm(self.grad_k(chunk), axis=-1).max()))
        self.hess_sup, self.grad_sup = hs, gs
        self.delta_0 = min(0.9 * min(1.0 / (3.0 * hs), 1.0), self.delta_outer)

    @property
    def c_k(self) -> float:
        """Lipschitz constant of ``grad k``."""
        return self.hess_sup

    def eps_delta(self, delta: float) -> float:
        """Collar width ``delta / (1 + 3 delta c_k)`` on which ``lambda^delta`` vanishes."""
        return delta / (1.0 + 3.0 * delta * self.c_k)


def unit_disk() -> DomainDescriptor:
    """The unit disk with ``k = phi(|x|)(|x| - 1)``."""
    return DomainDescriptor(
        dim=2, k=_disk_k, grad_k=_disk_grad, hess_k=_disk_hess,
        inside=lambda x: np.linalg.norm(x, axis=-1) < 1.0,
        boundary_sampler=_disk_boundary,
        outside_distance=lambda x: np.maximum(np.linalg.norm(x, axis=-1) - 1.0, 0.0),
        boundary_normal=lambda z: z / np.linalg.norm(z, axis=-1, keepdims=True),
        bbox=(np.array([-1.6, -1.6]), np.array([1.6, 1.6])),
        # outer ball of radius 3 delta around theta(z) stays where k is the distance
        delta_outer=0.25 / 6.0,
    )


def _check_delta(delta: float, dom: DomainDescriptor) -> None:
    if not 0.0 < delta <= dom.delta_0:
        raise PreconditionError(
            f"delta = {delta} outside the admissible range (0, {dom.delta_0:.6g}]")


def theta(x, delta: float, dom: DomainDescriptor, *, direction: float = 1.0,
          strict: bool = True):
    """Expansion map and its (symmetric) Jacobian ``I + 3 delta D^2 k``.

    ``direction=-1`` gives the inward map, used only as a negative control.
    ``strict=False`` skips the admissibility check on ``delta``.
    """
    if strict:
        _check_delta(delta, dom)
    x = np.asarray(x, dtype=float)
    t = x + direction * 3.0 * delta * dom.grad_k(x)
    jac = np.eye(dom.dim) + direction * 3.0 * delta * dom.hess_k(x)
    return t, jac


@dataclass(frozen=True)
class ExpansionReport:
    min_distance: float
    threshold: float
    samples: int
    passed: bool


def check_expansion(dom: DomainDescriptor, delta: float, boundary_samples: int = 360,
                    *, direction: float = 1.0, strict: bool = True) -> ExpansionReport:
    """Check ``dist(theta(z), closure) > 2 delta`` on sampled boundary points."""
    z = dom.boundary_sampler(boundary_samples)
    t, _ = theta(z, delta, dom, direction=direction, strict=strict)
    d = dom.outside_distance(t)
    m = float(d.min())
    return ExpansionReport(m, 2.0 * delta, len(z), bool(np.all(d > 2.0 * delta)))


# ---------------------------------------------------------------- measures


def _weight(w, scalar: bool, dim: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if scalar:
        if w.shape != ():
            raise InputError("scalar measure needs scalar weights")
    else:
        if w.shape != (dim, dim) or not np.allclose(w, w.T, atol=1e-14):
            raise InputError("matrix weights must be symmetric n x n")
    if not np.all(np.isfinite(w)):
        raise InputError("weights must be finite")
    return w


@dataclass
class DiscreteMeasure:
    """Finite combination of simple matrix- or scalar-valued measures.

    atoms : ``(position, weight)``
    segments : ``(a, b, weight)``; ``weight`` per unit length
    boxes : ``(lo, hi, density)``
    airy : ``(center, radius, amplitude)``; density ``cof D^2 psi`` with
        ``psi = amplitude (1 - |y - center|^2 / radius^2)^6`` (2D matrix only)
    """

    dim: int = 2
    scalar: bool = False
    atoms: list = field(default_factory=list)
    segments: list = field(default_factory=list)
    boxes: list = field(default_factory=list)
    airy: list = field(default_factory=list)

    def add_atom(self, pos, w) -> "DiscreteMeasure":
        self.atoms.append((np.asarray(pos, dtype=float), _weight(w, self.scalar, self.dim)))
        return self

    def add_segment(self, a, b, w) -> "DiscreteMeasure":
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        if np.linalg.norm(b - a) == 0.0:
            raise InputError("degenerate segment")
        self.segments.append((a, b, _weight(w, self.scalar, self.dim)))
        return self

    def add_box(self, lo, hi, w) -> "DiscreteMeasure":
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        if np.any(hi <= lo):
            raise InputError("box needs lo < hi")
        self.boxes.append((lo, hi, _weight(w, self.scalar, self.dim)))
        return self

    def add_airy(self, center, radius: float, amplitude: float) -> "DiscreteMeasure":
        if self.scalar or self.dim != 2:
            raise InputError("Airy densities are 2D matrix-valued")
        self.airy.append((np.asarray(center, dtype=float), float(radius), float(amplitude)))
        return self

    @property
    def value_shape(self) -> tuple:
        return () if self.scalar else (self.dim, self.dim)

    def point_sets(self) -> list[np.ndarray]:
        return [p for p, _ in self.atoms]

    def singular_segments(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Segments on which the measure, or its density, is not smooth."""
        segs = [(a, b) for a, b, _ in self.segments]
        for lo, hi, _ in self.boxes:
            c = [np.array([lo[0], lo[1]]), np.array([hi[0], lo[1]]),
                 np.array([hi[0], hi[1]]), np.array([lo[0], hi[1]])]
            segs += [(c[i], c[(i + 1) % 4]) for i in range(4)]
        return segs

    def support_distance(self, u: np.ndarray) -> np.ndarray:
        """Distance from points ``u`` to the support."""
        d = np.full(u.shape[:-1], np.inf)
        for p in self.point_sets():
            d = np.minimum(d, np.linalg.norm(u - p, axis=-1))
        for a, b, _ in self.segments:
            d = np.minimum(d, _segment_distance(u, a, b))
        for lo, hi, _ in self.boxes:
            d = np.minimum(d, np.linalg.norm(np.maximum(np.maximum(lo - u, u - hi), 0.0), axis=-1))
        for c, rad, _ in self.airy:
            d = np.minimum(d, np.maximum(np.linalg.norm(u - c, axis=-1) - rad, 0.0))
        return d

    def singular_distance(self, u: np.ndarray) -> np.ndarray:
        d = np.full(u.shape[:-1], np.inf)
        for p in self.point_sets():
            d = np.minimum(d, np.linalg.norm(u - p, axis=-1))
        for a, b in self.singular_segments():
            d = np.minimum(d, _segment_distance(u, a, b))
        return d

    def total_variation(self) -> float:
        """``|lambda|`` of the whole space with the Frobenius norm."""
        tv = sum(float(np.linalg.norm(w)) for _, w in self.atoms)
        tv += sum(float(np.linalg.norm(w) * np.linalg.norm(b - a)) for a, b, w in self.segments)
        tv += sum(float(np.linalg.norm(w) * np.prod(hi - lo)) for lo, hi, w in self.boxes)
        for c, rad, amp in self.airy:
            y, wts = _disk_rule(c, rad, 96, 256)
            tv += float(wts @ np.linalg.norm(airy_density(y, c, rad, amp), axis=(-2, -1)))
        return tv

    def integrate(self, fn: Callable[[np.ndarray], np.ndarray], order: int = 16) -> np.ndarray:
        """``int fn d lambda`` for ``fn(y)`` returning ``(..., n, n)`` (or scalars), contracted with the weights.

        Matrix measures pair through the Frobenius product.  Segment, box and
        disk rules are Gauss-Legendre, exact for polynomials of moderate
        degree.
        """
        def pair(vals, w):
            return vals * w if self.scalar else np.einsum("...ij,ij->...", vals, w)

        total = 0.0
        for p, w in self.atoms:
            total += pair(fn(p[None])[0], w)
        gx, gw = np.polynomial.legendre.leggauss(order)
        s, sw = 0.5 * (gx + 1.0), 0.5 * gw
        for a, b, w in self.segments:
            y = a + s[:, None] * (b - a)
            total += np.linalg.norm(b - a) * np.sum(sw * pair(fn(y), w))
        for lo, hi, w in self.boxes:
            xs = lo[0] + (hi[0] - lo[0]) * s
            ys = lo[1] + (hi[1] - lo[1]) * s
            y = np.stack(np.meshgrid(xs, ys, indexing="ij"), -1).reshape(-1, 2)
            ww = np.outer(sw, sw).ravel() * np.prod(hi - lo)
            total += np.sum(ww * pair(fn(y), w))
        for c, rad, amp in self.airy:
            y, ww = _disk_rule(c, rad, 2 * order, 4 * order)
            dens = airy_density(y, c, rad, amp)
            total += np.sum(ww * np.einsum("kij,kij->k", fn(y), dens))
        return total


def airy_density(y: np.ndarray, c: np.ndarray, rad: float, amp: float, power: int = 6) -> np.ndarray:
    """``cof D^2 psi`` for ``psi = amp (1 - |y-c|^2/rad^2)^power``; row-divergence free."""
    d = y - c
    u = 1.0 - np.einsum("...i,...i->...", d, d) / rad**2
    inside = u > 0
    u = np.where(inside, u, 0.0)
    p = power
    dd = d[..., :, None] * d[..., None, :]
    hess = amp * p * (4.0 * (p - 1) * u[..., None, None] ** (p - 2) * dd / rad**4
                      - 2.0 * u[..., None, None] ** (p - 1) * np.eye(2) / rad**2)
    cof = np.empty_like(hess)
    cof[..., 0, 0] = hess[..., 1, 1]
    cof[..., 1, 1] = hess[..., 0, 0]
    cof[..., 0, 1] = -hess[..., 0, 1]
    cof[..., 1, 0] = -hess[..., 1, 0]
    return np.where(inside[..., None, None], cof, 0.0)


def _disk_rule(c, rad, nr, nt):
    gx, gw = np.polynomial.legendre.leggauss(nr)
    r = 0.5 * (gx + 1.0) * rad
    wr = 0.5 * gw * rad * r
    th = 2.0 * np.pi * np.arange(nt) / nt
    y = c + (r[:, None, None] * np.stack([np.cos(th), np.sin(th)], -1)[None]).reshape(-1, 2)
    return y, (wr[:, None] * np.full(nt, 2.0 * np.pi / nt)[None]).ravel()


def _segment_distance(u: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.clip(((u - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(u - (a + t[..., None] * ab), axis=-1)


# ---------------------------------------------------------------- kernel


@lru_cache(maxsize=None)
def _halfplane_spline(n: int = 4001, nv: int = 256):
    """Antiderivative of the 1D marginal of the planar bump, as a cubic spline."""
    s = np.linspace(-1.0, 1.0, n)
    x, w = np.polynomial.legendre.leggauss(nv)
    v, w = 0.5 * (x + 1.0), 0.5 * w
    half = np.sqrt(np.maximum(1.0 - s * s, 0.0))
    arg = half[:, None] ** 2 * (1.0 - v[None, :] ** 2)
    vals = np.zeros_like(arg)
    pos = arg > 0
    vals[pos] = np.exp(-1.0 / arg[pos])
    marginal = 2.0 * half * eta_constant(2) * (vals @ w)
    return CubicSpline(s, marginal).antiderivative()


def halfplane_mass(t) -> np.ndarray:
    """Mass of the planar bump in ``{z_1 > t}``."""
    t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
    a = _halfplane_spline()
    return a(1.0) - a(t)


def _quadrant_pos(t1: np.ndarray, t2: np.ndarray, order: int = 48) -> np.ndarray:
    # mass in {z_1 > t1, z_2 > t2} for t1, t2 >= 0
    out = np.zeros(t1.shape)
    m = t1 * t1 + t2 * t2 < 1.0
    if not np.any(m):
        return out
    a, b = t1[m], t2[m]
    gx, gw = np.polynomial.legendre.leggauss(order)
    top = np.sqrt(1.0 - b * b)
    hs = 0.5 * (top - a)
    s = 0.5 * (top + a)[:, None] + hs[:, None] * gx[None]
    ceil = np.sqrt(np.maximum(1.0 - s * s, 0.0))
    ht = 0.5 * np.maximum(ceil - b[:, None], 0.0)
    tau = (b[:, None] + ht)[..., None] + ht[..., None] * gx[None, None]
    z = np.stack(np.broadcast_arrays(s[..., None], tau), -1)
    inner = np.sum(eta(z) * gw, axis=-1) * ht
    out[m] = np.sum(inner * gw, axis=-1) * hs
    return out


def quadrant_mass(t1, t2) -> np.ndarray:
    """Mass of the planar bump in ``{z_1 > t1, z_2 > t2}``."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    a, b = np.abs(t1), np.abs(t2)
    q = _quadrant_pos(a, b)
    ha, hb = halfplane_mass(a), halfplane_mass(b)
    # reflect negative thresholds into the first quadrant
    return np.select([(t1 >= 0) & (t2 >= 0), t1 >= 0, t2 >= 0],
                     [q, ha - q, hb - q], 1.0 - ha - hb + q)


def box_fraction(u: np.ndarray, lo: np.ndarray, hi: np.ndarray, delta: float) -> np.ndarray:
    """Mass of ``eta_delta(u - .)`` inside the box ``[lo, hi]``.

    Inclusion-exclusion over the four outer half-planes; opposite ones are
    disjoint on the ball when the box is at least ``2 delta`` wide, so only
    adjacent pairs (corner quadrants) overlap.
    """
    d_hi = (hi - u) / delta
    d_lo = (u - lo) / delta
    frac = 1.0 - halfplane_mass(d_hi).sum(-1) - halfplane_mass(d_lo).sum(-1)
    for dx in (d_lo[:, 0], d_hi[:, 0]):
        for dy in (d_lo[:, 1], d_hi[:, 1]):
            near = (dx < 1.0) & (dy < 1.0)
            if np.any(near):
                frac[near] += quadrant_mass(dx[near], dy[near])
    return frac



@dataclass(frozen=True)
class QuadratureSettings:
    """Node counts for the inner (convolution) and outer (field) integrals."""

    inner_line: int = 24
    inner_area: int = 16
    inner_smooth: int = 8
    outer_coarse: int = 12
    outer_fine: int = 7
    coarse_panels: int = 128
    fine_per_delta: float = 5.0


def convolve(lam: DiscreteMeasure, u: np.ndarray, delta: float,
             q: QuadratureSettings = QuadratureSettings()) -> np.ndarray:
    """``K(u) = delta^-n int eta((u - y)/delta) d lambda(y)`` at points ``u``."""
    u = np.asarray(u, dtype=float)
    n = lam.dim
    vs = lam.value_shape
    out = np.zeros(u.shape[:-1] + vs)
    scale = delta ** (-n)

    def add(mask, vals, w):
        idx = np.flatnonzero(mask)
        flat = out.reshape((-1,) + vs)
        flat[idx] += vals[(...,) + (None,) * len(vs)] * w

    for p, w in lam.atoms:
        z = (u - p) / delta
        m = np.einsum("...i,...i->...", z, z) < 1.0
        if np.any(m):
            add(m, scale * eta(z[m]), w)

    gx, gw = np.polynomial.legendre.leggauss(q.inner_line)
    for a, b, w in lam.segments:
        ln = float(np.linalg.norm(b - a))
        e = (b - a) / ln
        m = _segment_distance(u, a, b) < delta
        if not np.any(m):
            continue
        um = u[m]
        s0 = (um - a) @ e
        perp2 = np.einsum("ki,ki->k", um - a, um - a) - s0**2
        half = np.sqrt(np.maximum(delta**2 - perp2, 0.0))
        s1 = np.maximum(s0 - half, 0.0)
        s2 = np.minimum(s0 + half, ln)
        mid, rad = 0.5 * (s1 + s2), 0.5 * (s2 - s1)
        s = mid[:, None] + rad[:, None] * gx[None, :]
        y = a + s[..., None] * e
        val = scale * rad * np.sum(gw * eta((um[:, None, :] - y) / delta), axis=1)
        add(m, val, w)

    ax, aw = np.polynomial.legendre.leggauss(q.inner_area)

    def area_rule(um, lo, hi, ax=ax, aw=aw):
        lo_c = np.maximum(um - delta, lo)
        hi_c = np.minimum(um + delta, hi)
        mid, rad = 0.5 * (lo_c + hi_c), 0.5 * np.maximum(hi_c - lo_c, 0.0)
        px = mid[:, 0, None] + rad[:, 0, None] * ax[None]
        py = mid[:, 1, None] + rad[:, 1, None] * ax[None]
        y = np.stack(np.broadcast_arrays(px[:, :, None], py[:, None, :]), -1)
        wts = (rad[:, 0, None, None] * rad[:, 1, None, None]) * np.outer(aw, aw)[None]
        return y, wts

    for lo, hi, w in lam.boxes:
        # eta has unit mass, so a ball inside the box sees the plain density
        full = np.all((u - delta >= lo) & (u + delta <= hi), axis=-1)
        if np.any(full):
            add(full, np.ones(int(full.sum())), w)
        m = (np.linalg.norm(np.maximum(np.maximum(lo - u, u - hi), 0.0), axis=-1) < delta) & ~full
        if not np.any(m):
            continue
        um = u[m]
        if n == 2 and np.all(hi - lo >= 2.0 * delta):
            add(m, box_fraction(um, lo, hi, delta), w)
            continue
        y, wts = area_rule(um, lo, hi)
        val = scale * np.sum(wts * eta((um[:, None, None, :] - y) / delta), axis=(1, 2))
        add(m, val, w)

    # Airy densities are smooth on the kernel scale, so a lower order suffices
    sx, sw = np.polynomial.legendre.leggauss(q.inner_smooth)
    for c, rad_a, amp in lam.airy:
        m = np.linalg.norm(u - c, axis=-1) < rad_a + delta
        if not np.any(m):
            continue
        um = u[m]
        y, wts = area_rule(um, c - rad_a, c + rad_a, sx, sw)
        k = wts * scale * eta((um[:, None, None, :] - y) / delta)
        out.reshape((-1, 2, 2))[np.flatnonzero(m)] += np.einsum(
            "kab,kabij->kij", k, airy_density(y, c, rad_a, amp))
    return out


@dataclass
class MollifiedField:
    """Evaluable ``lambda^delta``; zero outside the domain by construction."""

    delta: float
    source: DiscreteMeasure
    domain: DomainDescriptor
    settings: QuadratureSettings = field(default_factory=QuadratureSettings)

    def __call__(self, x, chunk: int = 65536) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 2 and len(x) > chunk:
            return np.concatenate([self(x[i:i + chunk], chunk)
                                   for i in range(0, len(x), chunk)])
        t, jac = theta(x, self.delta, self.domain)
        k = convolve(self.source, t, self.delta, self.settings)
        det = np.linalg.det(jac)
        if self.source.scalar:
            return det * k
        return det[..., None, None] * (k @ np.linalg.inv(jac))

    def quadrature(self, settings: QuadratureSettings | None = None):
        """Nodes and weights resolving the field over the domain's unit box."""
        return field_quadrature(self, settings or self.settings)

    def integrate(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
        """``int fn(x, lambda^delta(x)) dx`` using :meth:`quadrature`."""
        x, w = self.quadrature()
        vals = self(x)
        return np.tensordot(w, fn(x, vals), axes=(0, 0))


def mollify(lam: DiscreteMeasure, delta: float, dom: DomainDescriptor,
            settings: QuadratureSettings | None = None) -> MollifiedField:
    """Mollified field of ``lam`` at scale ``delta`` on ``dom``."""
    _check_delta(delta, dom)
    if lam.dim != dom.dim:
        raise InputError("measure and domain dimensions differ")
    return MollifiedField(delta, lam, dom, settings or QuadratureSettings())


def _gl_panel_nodes(centers: np.ndarray, size: float, order: int):
    gx, gw = np.polynomial.legendre.leggauss(order)
    off = 0.5 * size * gx
    ox, oy = np.meshgrid(off, off, indexing="ij")
    pts = centers[:, None, :] + np.stack([ox.ravel(), oy.ravel()], -1)[None]
    w = np.outer(gw, gw).ravel() * (0.25 * size * size)
    return pts.reshape(-1, 2), np.tile(w, len(centers))


def field_quadrature(f: MollifiedField, q: QuadratureSettings):
    """Two-level Gauss-Legendre panels over ``[-1, 1]^2``.

    A panel is dropped when ``theta`` maps its center farther than
    ``delta + L rho`` from the support (``L`` a Lipschitz bound for ``theta``,
    ``rho`` the panel half-diagonal), so the field vanishes on it.  Panels
    closer than that to a point, a line or a box edge are split into panels
    of size about ``delta / fine_per_delta``.
    """
    dom, lam, delta = f.domain, f.source, f.delta
    if dom.dim != 2:
        raise InputError("field quadrature is implemented in 2D")
    lip = 1.0 + 3.0 * delta * dom.c_k
    nc = q.coarse_panels
    hc = 2.0 / nc
    g = -1.0 + hc * (np.arange(nc) + 0.5)
    cc = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    tc, _ = theta(cc, delta, dom)
    reach = delta + lip * hc / np.sqrt(2.0)
    active = lam.support_distance(tc) < reach
    near = active & (lam.singular_distance(tc) < reach)
    smooth = active & ~near

    nf = int(np.ceil(hc * q.fine_per_delta / delta))
    hf = hc / nf
    sub = -0.5 * hc + hf * (np.arange(nf) + 0.5)
    so = np.stack(np.meshgrid(sub, sub, indexing="ij"), -1).reshape(-1, 2)
    fc = (cc[near][:, None, :] + so[None]).reshape(-1, 2)
    if len(fc):
        tf, _ = theta(fc, delta, dom)
        fc = fc[lam.support_distance(tf) < delta + lip * hf / np.sqrt(2.0)]
    p1, w1 = _gl_panel_nodes(cc[smooth], hc, q.outer_coarse)
    p2, w2 = _gl_panel_nodes(fc, hf, q.outer_fine)
    log.debug("field quadrature: %d coarse, %d fine panels", int(smooth.sum()), len(fc))
    return np.concatenate([p1, p2]), np.concatenate([w1, w2])


# ---------------------------------------------------------------- checks


def _monomials(degree: int):
    return [(a, b) for a in range(degree + 1) for b in range(degree + 1 - a)]


def _test_gradients(x: np.ndarray, degree: int):
    """Gradients of ``v = x^a y^b e_r`` for ``a + b <= degree``; shape ``(..., F, 2, 2)``."""
    grads = []
    for r in range(2):
        for a, b in _monomials(degree):
            g = np.zeros(x.shape[:-1] + (2, 2))
            if a:
                g[..., r, 0] = a * x[..., 0] ** (a - 1) * x[..., 1] ** b
            if b:
                g[..., r, 1] = b * x[..., 0] ** a * x[..., 1] ** (b - 1)
            grads.append(g)
    return np.stack(grads, axis=-3)


def field_pairings(x: np.ndarray, w: np.ndarray, vals: np.ndarray, degree: int) -> np.ndarray:
    """``int lambda^delta : grad v`` for every test field, from nodes ``x``, weights ``w`` and field values."""
    out = []
    px = [x[:, 0] ** i for i in range(degree + 1)]
    py = [x[:, 1] ** i for i in range(degree + 1)]
    for r in range(2):
        l0 = w * vals[:, r, 0]
        l1 = w * vals[:, r, 1]
        for a, b in _monomials(degree):
            tot = 0.0
            if a:
                tot += a * float(l0 @ (px[a - 1] * py[b]))
            if b:
                tot += b * float(l1 @ (px[a] * py[b - 1]))
            out.append(tot)
    return np.array(out)


def divergence_preservation_check(lam: DiscreteMeasure, delta: float, dom: DomainDescriptor,
                                  test_degree: int = 2) -> tuple[float, float]:
    """Residuals ``(source, mollified)`` of ``int grad v : d lambda`` over polynomial ``v``."""
    src = measure_divergence_residual(lam, test_degree)
    f = mollify(lam, delta, dom)
    x, w = f.quadrature()
    vals = f(x)
    res = field_pairings(x, w, vals, test_degree)
    return src, float(np.abs(res).max())


def measure_divergence_residual(lam: DiscreteMeasure, test_degree: int = 2) -> float:
    """``max_v |int grad v : d lambda|`` over the polynomial test fields."""
    nf = 2 * len(_monomials(test_degree))
    out = [lam.integrate(lambda y, i=i: _test_gradients(y, test_degree)[..., i, :, :])
           for i in range(nf)]
    return float(np.abs(out).max())


def mass_check(mu: DiscreteMeasure, delta: float, dom: DomainDescriptor) -> float:
    """``|mu^delta(domain) - 1|`` for a probability measure ``mu``."""
    if not mu.scalar:
        raise InputError("mass_check needs a scalar measure")
    f = mollify(mu, delta, dom)
    x, w = f.quadrature()
    return abs(float(w @ f(x)) - 1.0)


@dataclass(frozen=True)
class SupportReport:
    max_abs: float
    collar: float
    samples: int
    passed: bool


def support_check(f: MollifiedField, n_angles: int = 720, n_radii: int = 8) -> SupportReport:
    """``lambda^delta`` must vanish identically for ``1 - eps_delta/2 <= |x| <= 1.05``."""
    c = f.domain.eps_delta(f.delta) / 2.0
    r = np.linspace(1.0 - c, 1.05, n_radii)
    th = 2.0 * np.pi * np.arange(n_angles) / n_angles
    x = (r[:, None, None] * np.stack([np.cos(th), np.sin(th)], -1)[None]).reshape(-1, 2)
    v = np.abs(f(x)).max()
    return SupportReport(float(v), c, len(x), bool(v == 0.0))


def jacobian_inverse_constant(dom: DomainDescriptor, delta: float, n: int = 401) -> float:
    """``M`` with ``sup |(grad theta)^{-1} - I| <= M delta`` (spectral norm, sampled)."""
    lo, hi = dom.bbox
    g = np.linspace(lo[0], hi[0], n)
    x = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    _, jac = theta(x, delta, dom)
    dev = np.linalg.inv(jac) - np.eye(2)
    return float(np.abs(np.linalg.eigvalsh(0.5 * (dev + np.swapaxes(dev, -1, -2)))).max() / delta)


def normal_residual(dom: DomainDescriptor, samples: int = 360) -> float:
    """``max |grad k - nu|`` over sampled boundary points."""
    if dom.boundary_normal is None:
        raise InputError("domain has no boundary normal")
    z = dom.boundary_sampler(samples)
    return float(np.linalg.norm(dom.grad_k(z) - dom.boundary_normal(z), axis=-1).max())


def jacobian_symmetry_residual(dom: DomainDescriptor, delta: float, count: int = 10_000,
                               seed: int = 0) -> float:
    """``max |J - J^T|`` at random points of the bounding box."""
    lo, hi = dom.bbox
    x = np.random.default_rng(seed).uniform(lo, hi, (count, dom.dim))
    _, jac = theta(x, delta, dom)
    return float(np.abs(jac - np.swapaxes(jac, -1, -2)).max())


@dataclass(frozen=True)
class InjectivityReport:
    min_slack: float
    min_ratio: float
    pairs: int
    passed: bool


def injectivity_check(dom: DomainDescriptor, delta: float, pairs: int = 20_000,
                      seed: int = 0) -> InjectivityReport:
    """``|x - x'| <= 3 delta c_k |x - x'| + |theta(x) - theta(x')|`` on random pairs.

    Half of the pairs are at distance below ``delta``, where the inequality
    is tight.  ``min_ratio`` is the smallest ``|theta(x) - theta(x')| / |x - x'|``,
    bounded below by ``1 - 3 delta c_k``.
    """
    rng = np.random.default_rng(seed)
    lo, hi = dom.bbox
    x = rng.uniform(lo, hi, (pairs, dom.dim))
    step = rng.normal(size=(pairs, dom.dim))
    step *= (rng.uniform(0.0, 1.0, pairs) * np.where(np.arange(pairs) % 2, 1.0, delta))[:, None]
    y = x + step
    tx, _ = theta(x, delta, dom)
    ty, _ = theta(y, delta, dom)
    dx = np.linalg.norm(x - y, axis=-1)
    dt = np.linalg.norm(tx - ty, axis=-1)
    slack = 3.0 * delta * dom.c_k * dx + dt - dx
    ok = dx > 0
    return InjectivityReport(float(slack[ok].min()), float((dt[ok] / dx[ok]).min()), int(ok.sum()),
                             bool(np.all(slack[ok] >= -1e-14 * dx[ok])))


@dataclass(frozen=True)
class TotalVariationReport:
    field_tv: float
    source_tv: float
    M: float
    bound: float
    passed: bool


def total_variation_check(lam: DiscreteMeasure, delta: float, dom: DomainDescriptor,
                          rtol: float = 1e-6) -> TotalVariationReport:
    """``|lambda^delta|(domain) <= (1 + M delta) |lambda|``, Frobenius total variation.

    ``M`` is :func:`jacobian_inverse_constant`; ``rtol`` absorbs quadrature
    error.
    """
    f = mollify(lam, delta, dom)
    x, w = f.quadrature()
    vals = f(x)
    tv = float(w @ np.sqrt(np.sum(vals.reshape(len(x), -1) ** 2, axis=-1)))
    src = lam.total_variation()
    m = jacobian_inverse_constant(dom, delta)
    bound = (1.0 + m * delta) * src
    return TotalVariationReport(tv, src, m, bound, bool(tv <= bound * (1.0 + rtol)))


def weak_star_errors(lam: DiscreteMeasure, deltas, dom: DomainDescriptor,
                     test: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
    """``|int phi : d lambda^delta - int phi : d lambda|`` for each ``delta``.

    The default test field is the polynomial
    ``phi(x) = [[1 + x^2, x y], [x y, 1 - y + y^2]]`` (or ``1 + x - y^2`` for
    scalar measures).
    """
    if test is None:
        test = _default_test_scalar if lam.scalar else _default_test_matrix
    exact = np.asarray(lam.integrate(test))
    out = []
    for d in deltas:
        f = mollify(lam, d, dom)
        x, w = f.quadrature()
        vals = f(x)
        phi = test(x)
        if lam.scalar:
            approx = w @ (phi * vals)
        else:
            approx = w @ np.einsum("kij,kij->k", phi, vals)
        out.append(abs(float(approx) - float(exact)))
    return np.array(out)


def _default_test_scalar(x):
    return 1.0 + x[..., 0] - x[..., 1] ** 2


def _default_test_matrix(x):
    a, b = x[..., 0], x[..., 1]
    return np.stack([np.stack([1.0 + a * a, a * b], -1),
                     np.stack([a * b, 1.0 - b + b * b], -1)], -2)


# ---------------------------------------------------------------- test measures


def square_truss(s: float = 0.6) -> DiscreteMeasure:
    """Self-stressed square ``(+-s, +-s)`` with both diagonals.

    Edges carry tension 1 and diagonals compression ``sqrt 2``; every node is
    in equilibrium, so the line measure is divergence free.
    """
    lam = DiscreteMeasure()
    c = [np.array(v) * s for v in ([1, 1], [-1, 1], [-1, -1], [1, -1])]
    for i in range(4):
        a, b = c[i], c[(i + 1) % 4]
        e = (b - a) / np.linalg.norm(b - a)
        lam.add_segment(a, b, np.outer(e, e))
    for a, b in ((c[0], c[2]), (c[1], c[3])):
        e = (b - a) / np.linalg.norm(b - a)
        lam.add_segment(a, b, -np.sqrt(2.0) * np.outer(e, e))
    return lam


def braced_cross(r: float = 0.85) -> DiscreteMeasure:
    """Two crossing unit-tension bars ``e1 (x) e1``, ``e2 (x) e2`` closed by a compressed rhombus."""
    lam = DiscreteMeasure()
    lam.add_segment([-r, 0.0], [r, 0.0], np.diag([1.0, 0.0]))
    lam.add_segment([0.0, -r], [0.0, r], np.diag([0.0, 1.0]))
    tips = [np.array(v) * r for v in ([1, 0], [0, 1], [-1, 0], [0, -1])]
    for i in range(4):
        a, b = tips[i], tips[(i + 1) % 4]
        e = (b - a) / np.linalg.norm(b - a)
        lam.add_segment(a, b, -np.outer(e, e) / np.sqrt(2.0))
    return lam


def airy_bump(center=(0.3, -0.2), radius: float = 0.5, amplitude: float = 0.05) -> DiscreteMeasure:
    return DiscreteMeasure().add_airy(center, radius, amplitude)

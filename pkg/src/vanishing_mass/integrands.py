"""Elastic and infinitesimal-mass integrands, gauges and their polars.

All scalar functions accept a single matrix or a stack ``(..., n, n)`` and
return a float or an array accordingly.  Eigenvalues are taken in the
"singular value" order of :func:`vanishing_mass.tensor.eigvals_ordered`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InputError, PreconditionError
from .tensor import as_matrix, eigvals_ordered, frob2, wave_cone_batch

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class IntegrandValue:
    """Value of a piecewise integrand and the branch that produced it."""

    value: float
    branch: str


@dataclass(frozen=True)
class ConvexityReport:
    min_value: float
    count: int
    threshold: float
    passed: bool


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def j(xi) -> float | np.ndarray:
    """Isotropic elastic energy density ``|xi|^2 / 2``."""
    return _out(0.5 * frob2(as_matrix(xi, batch=True)))


def j_star(tau) -> float | np.ndarray:
    """Conjugate of :func:`j`, again ``|tau|^2 / 2``."""
    return _out(0.5 * frob2(as_matrix(tau, batch=True)))


def j_bar(xi) -> float | np.ndarray:
    """Wave-cone restricted conjugate ``(|xi|^2 - xi_1^2) / 2``.

    ``xi_1`` is the eigenvalue of smallest absolute value.
    """
    ev = eigvals_ordered(xi)
    return _out(0.5 * np.sum(ev[..., 1:] ** 2, axis=-1))


def rho(xi) -> float | np.ndarray:
    """Gauge of ``{j_bar <= 1/2}``: ``sqrt(xi_2^2 + ... + xi_n^2)``."""
    ev = eigvals_ordered(xi)
    return _out(np.sqrt(np.sum(ev[..., 1:] ** 2, axis=-1)))


def rho_polar_from_eigs(ev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Polar gauge from ordered eigenvalues.

    Returns the values and a boolean mask that is ``True`` on the "thin"
    branch (always ``True`` in 2D).
    """
    a = np.abs(ev)
    if ev.shape[-1] == 2:
        return a[..., 0] + a[..., 1], np.ones(a.shape[:-1], dtype=bool)
    s12 = a[..., 0] + a[..., 1]
    thin = s12 <= a[..., 2]
    val = np.where(thin, np.hypot(s12, a[..., 2]), (s12 + a[..., 2]) / SQRT2)
    return val, thin


def rho_polar_batch(taus) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`rho_polar`: ``(values, thin_mask)``."""
    return rho_polar_from_eigs(eigvals_ordered(taus))


def rho_polar(tau) -> IntegrandValue:
    """Michell integrand ``rho°`` (polar of :func:`rho`).

    Parameters
    ----------
    tau : SymMat or array_like
        A single symmetric 2x2 or 3x3 matrix.

    Returns
    -------
    IntegrandValue
        In 2D ``|tau_1| + |tau_2|`` with branch ``"planar"``.  In 3D
        ``sqrt((|tau_1|+|tau_2|)^2 + tau_3^2)`` on the ``"thin"`` branch
        ``|tau_1|+|tau_2| <= |tau_3|`` and ``(|tau_1|+|tau_2|+|tau_3|)/sqrt 2``
        on the ``"fat"`` branch.
    """
    a = as_matrix(tau)
    val, thin = rho_polar_from_eigs(eigvals_ordered(a))
    if a.shape[0] == 2:
        branch = "planar"
    else:
        branch = "thin" if bool(thin) else "fat"
    return IntegrandValue(float(val), branch)


def j_bar_star(tau) -> float | np.ndarray:
    """Infinitesimal-mass integrand ``(rho°)^2 / 2``."""
    val, _ = rho_polar_batch(as_matrix(tau, batch=True))
    return _out(0.5 * val**2)


def q_alpha(tau, alpha: float) -> float | np.ndarray:
    """Planar quadratic form ``|tau|^2/2 + alpha det tau``, ``alpha in [-1, 1]``."""
    a = as_matrix(tau, batch=True)
    if a.shape[-1] != 2:
        raise InputError("q_alpha is defined for 2x2 matrices only")
    if not -1.0 <= alpha <= 1.0:
        raise InputError("alpha must lie in [-1, 1]")
    return _out(0.5 * frob2(a) + alpha * np.linalg.det(a))


def Q_xi(xi, tau) -> float | np.ndarray:
    """Quadratic form ``|tau|^2/2 - (xi : tau)^2 / 2`` for ``rho(xi) <= 1``.

    Nonnegative on the wave cone; may be negative elsewhere.
    """
    x = as_matrix(xi)
    if rho(x) > 1.0 + 1e-12:
        raise PreconditionError(f"rho(xi) = {rho(x):.6g} exceeds 1")
    t = as_matrix(tau, batch=True)
    if t.shape[-1] != x.shape[0]:
        raise InputError("dimension mismatch between xi and tau")
    dot = np.einsum("ij,...ij->...", x, t)
    return _out(0.5 * frob2(t) - 0.5 * dot**2)


def rho_polar_bruteforce(tau, grid_n: int = 2048, t_points: int = 17) -> float:
    """Independent lower bound for ``rho°(tau)`` by direct search.

    After diagonalizing ``tau`` with LAPACK, maximizes ``sum x_i |tau_i|`` over
    nonnegative ``x`` whose largest ``n - 1`` entries lie in the unit ball.
    Each candidate is parametrized by the index ``k`` of its smallest entry,
    an angle placing the other entries on the unit sphere, and
    ``x_k = t * min(others)``.  The best grid point is refined by a bounded
    scalar search in the angle.
    """
    a = as_matrix(tau)
    if grid_n < 64:
        raise InputError("grid_n must be at least 64")
    c = np.abs(np.linalg.eigvalsh(a))
    n = c.size
    ts = np.linspace(0.0, 1.0, t_points)
    best = 0.0
    for k in range(n):
        others = [i for i in range(n) if i != k]
        if n == 2:
            vals = c[others[0]] + ts * c[k]
            best = max(best, float(vals.max()))
            continue
        phis = np.linspace(0.0, 0.5 * np.pi, grid_n)

        def score(phi, t):
            u, v = np.cos(phi), np.sin(phi)
            return c[others[0]] * u + c[others[1]] * v + t * np.minimum(u, v) * c[k]

        grid = score(phis[:, None], ts[None, :])
        i, it = np.unravel_index(np.argmax(grid), grid.shape)
        best = max(best, float(grid[i, it]))
        lo = phis[max(i - 1, 0)]
        hi = phis[min(i + 1, grid_n - 1)]
        res = minimize_scalar(lambda p: -score(p, ts[it]), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        best = max(best, float(-res.fun))
    return best


def lambda_div_convexity_check(qform: Callable[[np.ndarray], np.ndarray], dim: int,
                               seed: int, count: int,
                               threshold: float = -1e-10) -> ConvexityReport:
    """Evaluate a quadratic form on random wave-cone matrices.

    A quadratic form is convex along wave-cone lines iff it is nonnegative on
    the cone, so the report passes when the minimum is above ``threshold``.
    ``qform`` must accept a stack ``(count, n, n)`` and return ``(count,)``.
    """
    samples = wave_cone_batch(dim, seed, count)
    vals = np.asarray(qform(samples), dtype=float)
    m = float(vals.min())
    return ConvexityReport(m, count, threshold, m >= threshold)


def tartar_form(tau) -> np.ndarray:
    """``(n - 1)|tau|^2 - (tr tau)^2``, nonnegative on the wave cone."""
    t = as_matrix(tau, batch=True)
    n = t.shape[-1]
    return (n - 1) * frob2(t) - np.trace(t, axis1=-2, axis2=-1) ** 2

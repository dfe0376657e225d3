"""Kohn-Strang integrands and their symmetric div-quasiconvex envelopes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .integrands import rho_polar_from_eigs
from .tensor import as_matrix, eigvals_ordered, frob2


@dataclass(frozen=True)
class KSParams:
    """Weights of ``h(tau) = alpha |tau|^2 + beta`` (``tau != 0``), ``h(0) = 0``.

    ``alpha`` and ``beta`` may also be arrays broadcasting against a stack of
    matrices, which is how parameter sweeps are vectorized.
    """

    alpha: float | np.ndarray
    beta: float | np.ndarray

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = np.asarray(getattr(self, name), dtype=float)
            if not (np.all(np.isfinite(v)) and np.all(v > 0)):
                raise InputError(f"{name} must be finite and positive")

    @property
    def rho_hat_scale(self) -> float | np.ndarray:
        return _out(np.sqrt(np.asarray(self.alpha) / np.asarray(self.beta)))

    @classmethod
    def from_eps(cls, eps: float) -> "KSParams":
        """The ``h_eps`` family: ``alpha = eps/2``, ``beta = 1/(2 eps)``."""
        _check_eps(eps)
        return cls(eps / 2.0, 1.0 / (2.0 * eps))

    @classmethod
    def from_step1a(cls, eps: float, m: float, kappa: float) -> "KSParams":
        """``alpha = eps/2``, ``beta = kappa^2 / (2 m eps)``."""
        _check_eps(eps)
        if m <= 0 or kappa <= 0:
            raise InputError("m and kappa must be positive")
        return cls(eps / 2.0, kappa**2 / (2.0 * m * eps))


def _check_eps(eps: float) -> None:
    if not (np.isfinite(eps) and eps > 0):
        raise InputError(f"eps must be positive, got {eps}")


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def ks_h(tau, p: KSParams) -> float | np.ndarray:
    """Two-well integrand; exactly zero only at ``|tau| = 0``."""
    a = as_matrix(tau, batch=True)
    # test the entries, not |tau|^2, which underflows for tiny nonzero tau
    zero = ~np.any(a != 0.0, axis=(-2, -1))
    return _out(np.where(zero, 0.0, p.alpha * frob2(a) + p.beta))


def ks_h_truncated(tau, p: KSParams, M: float) -> float | np.ndarray:
    """Continuous minorant ``min(alpha|tau|^2 + beta, M|tau|^2)``, increasing to ``h`` as ``M`` grows."""
    n2 = frob2(as_matrix(tau, batch=True))
    return _out(np.minimum(p.alpha * n2 + p.beta, M * n2))


def q_div_h_general(tau, p: KSParams) -> float | np.ndarray:
    """Envelope via ``rho_hat = sqrt(alpha/beta) rho°``.

    ``alpha|tau|^2 + beta rho_hat (2 - rho_hat)`` for ``rho_hat <= 1`` and
    ``alpha|tau|^2 + beta`` otherwise.
    """
    a = as_matrix(tau, batch=True)
    rp, _ = rho_polar_from_eigs(eigvals_ordered(a))
    rh = p.rho_hat_scale * rp
    quad = p.alpha * frob2(a)
    return _out(np.where(rh <= 1.0, quad + p.beta * rh * (2.0 - rh), quad + p.beta))


def q_div_h_explicit(tau, p: KSParams) -> float | np.ndarray:
    """Envelope in the explicit eigenvalue form.

    Below the threshold ``rho° < sqrt(beta/alpha)``:

    * 2D and 3D thin branch: ``2 sqrt(alpha beta) rho° - 2 alpha |t1 t2|``
    * 3D fat branch: ``2 sqrt(alpha beta) rho° + alpha (|tau|^2/2 - |t1 t2| - |t1 t3| - |t2 t3|)``

    Above it the integrand is not relaxed.
    """
    a = as_matrix(tau, batch=True)
    ev = eigvals_ordered(a)
    rp, thin = rho_polar_from_eigs(ev)
    t = np.abs(ev)
    n2 = frob2(a)
    lin = 2.0 * np.sqrt(p.alpha * p.beta) * rp
    thin_val = lin - 2.0 * p.alpha * t[..., 0] * t[..., 1]
    if a.shape[-1] == 2:
        relaxed = thin_val
    else:
        cross = t[..., 0] * t[..., 1] + t[..., 0] * t[..., 2] + t[..., 1] * t[..., 2]
        fat_val = lin + p.alpha * (0.5 * n2 - cross)
        relaxed = np.where(thin, thin_val, fat_val)
    unrelaxed = rp >= np.sqrt(p.beta / p.alpha)
    return _out(np.where(unrelaxed, p.alpha * n2 + p.beta, relaxed))


def q_div_h_eps(tau, eps: float) -> float | np.ndarray:
    """Envelope of ``h_eps``; equals ``(eps/2)|tau|^2 + rho° - (eps/2) rho°^2`` when ``eps rho° <= 1``."""
    return q_div_h_general(tau, KSParams.from_eps(eps))


def q_div_h_step1a(tau, eps: float, m: float, kappa: float) -> float | np.ndarray:
    """Envelope of ``h_eps^m`` written directly in ``(eps, m, kappa)``.

    For ``rho° <= kappa / (eps sqrt m)`` the 2D / 3D thin value is
    ``kappa rho° / sqrt m - eps |t1 t2|`` and the 3D fat value is
    ``kappa rho° / sqrt m + (eps/2)(|tau|^2/2 - |t1 t2| - |t1 t3| - |t2 t3|)``.
    """
    p = KSParams.from_step1a(eps, m, kappa)
    a = as_matrix(tau, batch=True)
    ev = eigvals_ordered(a)
    rp, thin = rho_polar_from_eigs(ev)
    t = np.abs(ev)
    n2 = frob2(a)
    lin = kappa * rp / np.sqrt(m)
    thin_val = lin - eps * t[..., 0] * t[..., 1]
    if a.shape[-1] == 2:
        relaxed = thin_val
    else:
        cross = t[..., 0] * t[..., 1] + t[..., 0] * t[..., 2] + t[..., 1] * t[..., 2]
        relaxed = np.where(thin, thin_val, lin + 0.5 * eps * (0.5 * n2 - cross))
    unrelaxed = rp >= kappa / (eps * np.sqrt(m))
    return _out(np.where(unrelaxed, p.alpha * n2 + p.beta, relaxed))

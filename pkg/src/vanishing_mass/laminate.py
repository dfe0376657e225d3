"""Periodic slab laminates recovering the infinitesimal-mass energy.

A slab family ``D^i`` depends on the single coordinate ``x_i``: the union of
``(m/k, (m + gamma_i eps)/k)``, ``m = 0..k-1``, intersected with the unit cube.
Its 1D cross-section fraction is ``p_i = gamma_i eps``, so every Venn region
of the families has measure equal to a product of ``p_i`` and ``1 - p_i``.
Diagonal stress entry ``j`` is carried on a union of families none of which
depends on ``x_j``, which makes ``sigma_eps mu_eps`` divergence free.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .errors import InputError
from .integrands import Q_xi, j_bar_star


@dataclass(frozen=True)
class SlabFamily:
    axis: int
    fraction: float
    eps: float
    periods: int

    def __post_init__(self):
        if not 0.0 < self.fraction * self.eps < 1.0:
            raise InputError("slab width must lie strictly inside one period")

    @property
    def width(self) -> float:
        """1D cross-section fraction ``gamma eps``."""
        return self.fraction * self.eps

    def intervals(self) -> np.ndarray:
        m = np.arange(self.periods)
        return np.stack([m / self.periods, (m + self.width) / self.periods], axis=1)

    def indicator(self, x: np.ndarray) -> np.ndarray:
        """Membership of points ``x`` (shape ``(..., n)``) by their ``axis`` coordinate."""
        t = x[..., self.axis] * self.periods
        return (t - np.floor(t)) < self.width

    def count_midpoints(self, n: int) -> int:
        """How many of the midpoints ``(i + 1/2)/n`` fall in a slab."""
        x = (np.arange(n) + 0.5) / n
        t = x * self.periods
        return int(np.count_nonzero((t - np.floor(t)) < self.width))


@dataclass(frozen=True)
class LaminateConstruction:
    """Slab families with the diagonal stress they carry.

    ``amplitudes[j]`` is the value of ``sigma_jj`` on the union of the
    families listed in ``supports[j]`` (zero elsewhere).
    """

    dim: int
    case: str
    alphas: tuple[float, ...]
    gammas: tuple[float, ...]
    eps: float
    periods: int
    families: tuple[SlabFamily, ...]
    amplitudes: tuple[float, ...]
    supports: tuple[tuple[int, ...], ...]

    @property
    def fractions(self) -> np.ndarray:
        return np.array([f.width for f in self.families])

    def regions(self):
        """Yield ``(membership pattern, measure, diagonal of sigma)`` per nonempty Venn region inside ``D_eps``."""
        p = self.fractions
        for pattern in itertools.product((0, 1), repeat=len(self.families)):
            if not any(pattern):
                continue
            meas = float(np.prod([pi if s else 1.0 - pi for pi, s in zip(p, pattern)]))
            diag = np.array([amp if any(pattern[i] for i in sup) else 0.0
                             for amp, sup in zip(self.amplitudes, self.supports)])
            yield pattern, meas, diag


@dataclass(frozen=True)
class RegionMeasureTable:
    """Lebesgue measures of the families, their intersections and unions."""

    singles: tuple
    pairs: dict
    triple: object
    union: object
    pair_unions: dict


@dataclass(frozen=True)
class StudyRow:
    eps: float
    periods: int
    energy: float
    limit: float
    error: float
    bound: float


@dataclass(frozen=True)
class StudyResult:
    alphas: tuple[float, ...]
    case: str
    rows: list[StudyRow]
    slope: float | None


def default_periods(eps: float) -> int:
    """``k(eps) = ceil(eps^(-1/2))``, so that ``eps / k -> 0``."""
    return int(math.ceil(eps ** -0.5 - 1e-12))


def build_construction(alphas, eps: float, k: int | None = None) -> LaminateConstruction:
    """Laminate for ``sigma = diag(alphas)``.

    Parameters
    ----------
    alphas : sequence of float
        Two or three diagonal entries ordered by absolute value ascending.
    eps : float
        Mass parameter in ``(0, 1)``.
    k : int, optional
        Number of periods; defaults to :func:`default_periods`.

    Notes
    -----
    In 2D, and in 3D when ``|a3| >= |a1| + |a2|`` (case ``3D-I``), two
    families are used with ``gamma = |a2| / (|a1| + |a2|)`` (``1 - eps`` when
    ``a1 = 0``).  Otherwise (``3D-II``) three families with
    ``gamma_i = (S - 2|a_i|) / S``, ``S = |a1| + |a2| + |a3|``.
    """
    a = tuple(float(x) for x in alphas)
    n = len(a)
    if n not in (2, 3):
        raise InputError("need two or three alphas")
    if not all(np.isfinite(a)):
        raise InputError("alphas must be finite")
    if any(abs(a[i]) > abs(a[i + 1]) for i in range(n - 1)):
        raise InputError("alphas must be ordered by absolute value ascending")
    if not 0.0 < eps < 1.0:
        raise InputError("eps must lie in (0, 1)")
    k = default_periods(eps) if k is None else int(k)
    if k < 1:
        raise InputError("period count must be positive")
    b = [abs(x) for x in a]

    def two_family_gamma():
        return 1.0 - eps if b[0] == 0.0 else b[1] / (b[0] + b[1])

    if n == 2 or b[2] >= b[0] + b[1]:
        g = two_family_gamma()
        gammas = (g, 1.0 - g)
        amps = [a[0] / (1.0 - g), a[1] / g]
        sups = [(1,), (0,)]
        if n == 3:
            amps.append(a[2])
            sups.append((0, 1))
        case = "2D" if n == 2 else "3D-I"
    else:
        s = sum(b)
        g1 = (b[1] + b[2] - b[0]) / s
        g2 = (b[0] + b[2] - b[1]) / s
        gammas = (g1, g2, 1.0 - g1 - g2)
        amps = [a[i] / (1.0 - gammas[i]) for i in range(3)]
        sups = [(1, 2), (0, 2), (0, 1)]
        case = "3D-II"
    fams = tuple(SlabFamily(i, g, eps, k) for i, g in enumerate(gammas))
    return LaminateConstruction(n, case, a, gammas, eps, k, fams, tuple(amps), tuple(sups))


def corrupt_construction(c: LaminateConstruction) -> LaminateConstruction:
    """Swap the supports of the first two stress entries (negative control).

    Entry 0 then lives on a family varying in ``x_0``, breaking the
    divergence-free structure.
    """
    sups = list(c.supports)
    sups[0], sups[1] = sups[1], sups[0]
    return replace(c, supports=tuple(sups))


def measure_table(c: LaminateConstruction, exact: bool = False) -> RegionMeasureTable:
    """Exact measures from the product structure.

    With ``exact=True`` all values are :class:`fractions.Fraction` built from
    the binary values of ``gamma_i eps``, so identities hold exactly.
    """
    p = [Fraction(f.width) if exact else f.width for f in c.families]
    one = Fraction(1) if exact else 1.0
    idx = range(len(p))
    pairs = {(i, j): p[i] * p[j] for i, j in itertools.combinations(idx, 2)}
    pair_unions = {(i, j): one - (one - p[i]) * (one - p[j])
                   for i, j in itertools.combinations(idx, 2)}
    triple = p[0] * p[1] * p[2] if len(p) == 3 else None
    comp = one
    for v in p:
        comp *= one - v
    return RegionMeasureTable(tuple(p), pairs, triple, one - comp, pair_unions)


def total_mass(c: LaminateConstruction) -> float:
    """``mu_eps(Q) = L(D_eps) / eps``."""
    return float(measure_table(c).union) / c.eps


def energy_eps(c: LaminateConstruction) -> float:
    """``(1/eps) sum_R L(R) |sigma_R|^2 / 2`` over the Venn regions."""
    return sum(m * 0.5 * float(d @ d) for _, m, d in c.regions()) / c.eps


def limit_energy(alphas) -> float:
    return float(j_bar_star(np.diag(np.asarray(alphas, dtype=float))))


def separated_energy(c: LaminateConstruction) -> float:
    """Energy if the families did not overlap: ``sum_j amp_j^2 sum_(i in S_j) gamma_i / 2``."""
    return sum(0.5 * amp**2 * sum(c.gammas[i] for i in sup)
               for amp, sup in zip(c.amplitudes, c.supports))


def cc_check(c: LaminateConstruction, xi) -> float:
    """``int Q_xi(tau_eps) dx`` for ``tau_eps = sqrt(eps) sigma_eps mu_eps``.

    ``tau_eps`` equals ``sigma_R / sqrt(eps)`` on each region, so the integral
    is ``(1/eps) sum_R L(R) Q_xi(sigma_R)``.
    """
    xi = np.asarray(xi, dtype=float)
    total = 0.0
    for _, m, d in c.regions():
        total += m * Q_xi(xi, np.diag(d))
    return total / c.eps


def _gauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def weak_divergence_residual(c: LaminateConstruction, test_fn_degree: int = 2,
                             quad_n: int | None = None) -> float:
    """Largest ``|int sigma_eps mu_eps : grad phi dx|`` over bump-weighted monomial fields.

    Test fields are ``phi = b(x) x^a e_r`` with ``b = prod x_j (1 - x_j)`` and
    ``|a| <= test_fn_degree``.  Only the ``rr`` stress component pairs with
    ``grad phi``, and it is ``amp_r / eps`` times the indicator of a union of
    families.  Writing that indicator as one minus a product of complements
    splits the integral into products of 1D integrals, each evaluated by
    Gauss-Legendre on the slab intervals, which is exact for polynomials.
    """
    n = c.dim
    deg = int(test_fn_degree)
    qn = quad_n or deg // 2 + 3
    gx, gw = _gauss(qn)

    def integrals(fam: SlabFamily | None, coef: np.ndarray) -> tuple[float, float]:
        # (integral over [0, 1], integral over [0, 1] minus the slabs of fam)
        poly = np.polynomial.Polynomial(coef)
        full = float(np.sum(gw * poly(gx)))
        if fam is None:
            return full, full
        iv = fam.intervals()
        lo, hi = iv[:, :1], iv[:, 1:]
        pts = lo + (hi - lo) * gx[None, :]
        inside = float(np.sum((hi - lo) * (gw[None, :] * poly(pts))))
        return full, full - inside

    base = np.polynomial.Polynomial([0.0, 1.0, -1.0])
    worst = 0.0
    for r in range(n):
        fam_on_axis = {c.families[i].axis: c.families[i] for i in c.supports[r]}
        for a in itertools.product(range(deg + 1), repeat=n):
            if sum(a) > deg:
                continue
            full_prod, comp_prod = 1.0, 1.0
            for j in range(n):
                g = base * np.polynomial.Polynomial([0.0] * a[j] + [1.0])
                if j == r:
                    g = g.deriv()
                f, w = integrals(fam_on_axis.get(j), g.coef)
                full_prod *= f
                comp_prod *= w
            val = c.amplitudes[r] / c.eps * (full_prod - comp_prod)
            worst = max(worst, abs(val))
    return worst


def convergence_study(alphas, eps_list, k_rule=default_periods) -> StudyResult:
    """Energies along a decreasing sequence of ``eps``.

    ``error`` is ``|E_eps - j_bar_star(diag(alphas))|``.  ``bound`` is the
    overlap deficit ``E_sep - E_eps`` plus ``|E_sep - limit|``, an upper bound
    for the error (``E_sep`` from :func:`separated_energy`).  The slope is the
    least-squares fit of ``log error`` against ``log eps``; it is ``None``
    when the energies are exact to rounding.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise InputError("eps_list must be strictly decreasing")
    limit = limit_energy(alphas)
    rows = []
    case = ""
    for eps in eps_list:
        c = build_construction(alphas, eps, k_rule(eps))
        case = c.case
        e = energy_eps(c)
        sep = separated_energy(c)
        rows.append(StudyRow(eps, c.periods, e, limit, abs(e - limit),
                             (sep - e) + abs(sep - limit)))
    errs = np.array([r.error for r in rows])
    slope = None
    if len(rows) >= 2 and np.all(errs > 1e-12 * max(1.0, limit)):
        slope = float(np.polyfit(np.log(eps_list), np.log(errs), 1)[0])
    return StudyResult(tuple(float(a) for a in alphas), case, rows, slope)


@dataclass(frozen=True)
class MonteCarloEstimate:
    singles: np.ndarray
    union: float
    union_se: float
    singles_se: np.ndarray
    samples: int


def monte_carlo_measures(c: LaminateConstruction, n_samples: int = 10**7,
                         seed: int = 0, chunk: int = 10**6) -> MonteCarloEstimate:
    """Estimate family and union measures from uniform samples of the cube."""
    rng = np.random.default_rng(seed)
    nf = len(c.families)
    hits = np.zeros(nf)
    union_hits = 0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        x = rng.random((m, c.dim))
        member = np.stack([f.indicator(x) for f in c.families], axis=1)
        hits += member.sum(axis=0)
        union_hits += int(np.count_nonzero(member.any(axis=1)))
        done += m
    ps = hits / n_samples
    pu = union_hits / n_samples
    return MonteCarloEstimate(ps, pu, float(np.sqrt(pu * (1 - pu) / n_samples)),
                              np.sqrt(ps * (1 - ps) / n_samples), n_samples)


def midpoint_energy(c: LaminateConstruction, grid_n: int = 2048) -> tuple[float, float]:
    """Midpoint-rule energy on a ``grid_n^n`` grid and an a-priori error bound.

    Region membership depends on one coordinate per family, so the grid
    count factorizes into per-axis counts and the full grid is never formed.
    The bound uses that each slab changes its midpoint count by at most one
    cell, i.e. ``|p_hat_i - p_i| <= k / grid_n``.
    """
    ph = np.array([f.count_midpoints(grid_n) / grid_n for f in c.families])
    total = 0.0
    for pattern in itertools.product((0, 1), repeat=len(ph)):
        if not any(pattern):
            continue
        meas = float(np.prod([p if s else 1.0 - p for p, s in zip(ph, pattern)]))
        diag = np.array([amp if any(pattern[i] for i in sup) else 0.0
                         for amp, sup in zip(c.amplitudes, c.supports)])
        total += meas * 0.5 * float(diag @ diag)
    dp = c.periods / grid_n
    bound = sum(0.5 * amp**2 * len(sup) * dp for amp, sup in zip(c.amplitudes, c.supports))
    return total / c.eps, bound / c.eps

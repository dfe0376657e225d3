"""Ground-structure Michell problem and its limit-compliance quantities.

A bar from node ``a`` to node ``b`` with unit direction ``e`` (pointing from
``a`` to ``b``) and axial force ``q`` (tension positive) contributes ``-q e``
to the nodal balance at ``a`` and ``+q e`` at ``b``; equilibrium is
``B q = f``.  On a bar the stress is rank one, ``q e (x) e``, whose polar gauge
is ``|q|``, so the mass cost of a truss is ``sum_i l_i |q_i|``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from math import gcd

import numpy as np

from .errors import InputError, PreconditionError, UnbalancedLoadError
from .integrands import rho_polar_batch
from .simplex import LPResult, solve_lp

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Node:
    id: int
    position: np.ndarray


@dataclass(frozen=True)
class Bar:
    a: int
    b: int
    length: float
    direction: np.ndarray


@dataclass
class GroundStructure:
    """Nodes (rows of ``positions``) and candidate bars joining them."""

    positions: np.ndarray
    bars: list[Bar]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def nodes(self) -> list[Node]:
        return [Node(i, p) for i, p in enumerate(self.positions)]

    @property
    def lengths(self) -> np.ndarray:
        return np.array([b.length for b in self.bars])

    def equilibrium_matrix(self) -> np.ndarray:
        n, d = self.positions.shape
        mat = np.zeros((n * d, len(self.bars)))
        for i, bar in enumerate(self.bars):
            mat[bar.a * d:(bar.a + 1) * d, i] = -bar.direction
            mat[bar.b * d:(bar.b + 1) * d, i] = bar.direction
        return mat

    def with_bars(self, pairs) -> "GroundStructure":
        return GroundStructure(self.positions, [make_bar(self.positions, a, b) for a, b in pairs])


@dataclass
class LoadCase:
    """Point loads keyed by node id."""

    loads: dict[int, np.ndarray]

    def vector(self, n_nodes: int, dim: int) -> np.ndarray:
        f = np.zeros(n_nodes * dim)
        for j, v in self.loads.items():
            if not 0 <= j < n_nodes:
                raise InputError(f"load applied to unknown node {j}")
            v = np.asarray(v, dtype=float)
            if v.shape != (dim,):
                raise InputError(f"load at node {j} has wrong dimension")
            f[j * dim:(j + 1) * dim] += v
        return f

    def scaled(self, t: float) -> "LoadCase":
        return LoadCase({j: t * np.asarray(v, dtype=float) for j, v in self.loads.items()})


@dataclass(frozen=True)
class BalanceReport:
    force_residual: float
    moment_residual: float
    scale: float
    ok: bool


@dataclass
class TrussSolution:
    """Optimal bar forces with the dual (virtual displacement) certificate."""

    q: np.ndarray
    objective: float
    lp_status: str
    structure: GroundStructure
    loads: LoadCase
    displacement: np.ndarray
    dual_gap: float
    dual_violation: float
    equilibrium_residual: float
    iterations: int = 0


@dataclass
class LimitShape:
    """Optimal mass distribution ``mu*`` and stress ``sigma*`` on the bars.

    ``kappa`` is ``int rho°(sigma) d mu`` and ``compliance`` is
    ``int rho°(sigma)^2 / 2 d mu``; for the optimal shape these are ``kappa``
    and ``kappa^2 / 2``.
    """

    kappa: float
    mu_weights: np.ndarray
    sigma: np.ndarray
    compliance: float
    bars: list[Bar] = field(default_factory=list)

    @property
    def sigma_scale(self) -> np.ndarray:
        """Signed magnitude ``s_i`` with ``sigma_i = s_i e_i (x) e_i``."""
        return np.array([np.trace(s) for s in self.sigma])


def make_bar(positions: np.ndarray, a: int, b: int) -> Bar:
    if a == b:
        raise InputError("a bar needs two distinct nodes")
    d = positions[b] - positions[a]
    length = float(np.linalg.norm(d))
    if length == 0.0:
        raise InputError(f"nodes {a} and {b} coincide")
    return Bar(int(a), int(b), length, d / length)


def build_grid_ground_structure(nx: int, ny: int, nz: int | None = None,
                                spacing: float = 1.0,
                                connectivity_radius: float | None = None) -> GroundStructure:
    """Regular grid with bars between all node pairs within a radius.

    Node ids run with ``x`` fastest: ``id = i + nx*j (+ nx*ny*k)``.  A bar
    that passes through an intermediate grid node is dropped, since the two
    shorter collinear bars covering it are present as well.
    """
    dims = [nx, ny] + ([] if nz is None else [nz])
    if any(int(d) != d or d < 2 for d in dims):
        raise InputError("grid needs at least two nodes per direction")
    radius = spacing if connectivity_radius is None else connectivity_radius
    if spacing <= 0 or radius < spacing * (1 - 1e-12):
        raise InputError("need spacing > 0 and radius >= spacing")
    idx = np.array(list(itertools.product(*[range(d) for d in reversed(dims)])))[:, ::-1]
    positions = idx * float(spacing)
    r2 = (radius / spacing) ** 2 * (1 + 1e-12)
    pairs = []
    for a in range(len(idx)):
        for b in range(a + 1, len(idx)):
            off = idx[b] - idx[a]
            if off @ off > r2:
                continue
            g = 0
            for o in off:
                g = gcd(g, abs(int(o)))
            if g == 1:
                pairs.append((a, b))
    return GroundStructure(positions, [make_bar(positions, a, b) for a, b in pairs])


def complete_ground_structure(positions) -> GroundStructure:
    """All pairs of the given nodes (no overlap removal)."""
    positions = np.asarray(positions, dtype=float)
    pairs = itertools.combinations(range(len(positions)), 2)
    return GroundStructure(positions, [make_bar(positions, a, b) for a, b in pairs])


def check_balanced(lc: LoadCase, positions) -> BalanceReport:
    """Residual force and moment of a load case.

    Balanced means both are at most ``1e-10 * max(1, |f|)``, ``|f|`` being the
    Euclidean norm of the stacked load vector.
    """
    positions = np.asarray(positions, dtype=float)
    dim = positions.shape[1]
    force = np.zeros(dim)
    moment = np.zeros(1 if dim == 2 else 3)
    total2 = 0.0
    for j, v in lc.loads.items():
        v = np.asarray(v, dtype=float)
        force += v
        total2 += float(v @ v)
        x = positions[j]
        moment += x[0] * v[1] - x[1] * v[0] if dim == 2 else np.cross(x, v)
    scale = max(1.0, np.sqrt(total2))
    fr = float(np.linalg.norm(force))
    mr = float(np.linalg.norm(moment))
    return BalanceReport(fr, mr, scale, fr <= 1e-10 * scale and mr <= 1e-10 * scale)


def solve_michell_lp(gs: GroundStructure, lc: LoadCase) -> TrussSolution:
    """Minimum-volume truss: ``min sum l_i |q_i|`` subject to ``B q = f``.

    Solved with :func:`vanishing_mass.simplex.solve_lp` on the split
    ``q = q+ - q-``.  The multipliers of the equilibrium rows are a virtual
    displacement ``u`` with ``|e_i . (u_b - u_a)| <= l_i``; ``f . u`` equals
    the optimum, which certifies it.

    Raises
    ------
    UnbalancedLoadError
        If the loads do not annihilate rigid motions.
    InfeasibleError
        If no bar forces in the ground structure carry the load.
    """
    rep = check_balanced(lc, gs.positions)
    if not rep.ok:
        raise UnbalancedLoadError(
            f"unbalanced load: force residual {rep.force_residual:.3e}, "
            f"moment residual {rep.moment_residual:.3e}", rep)
    if not gs.bars:
        raise InputError("ground structure has no bars")
    bmat = gs.equilibrium_matrix()
    f = lc.vector(len(gs.positions), gs.dim)
    ell = gs.lengths
    res: LPResult = solve_lp(np.concatenate([ell, ell]), np.hstack([bmat, -bmat]), f)
    nb = len(gs.bars)
    q = res.x[:nb] - res.x[nb:]
    u = res.duals
    objective = float(ell @ np.abs(q))
    fscale = max(np.abs(f).max(initial=0.0), 1e-300)
    sol = TrussSolution(
        q=q,
        objective=objective,
        lp_status=res.status,
        structure=gs,
        loads=lc,
        displacement=u.reshape(-1, gs.dim),
        dual_gap=abs(objective - float(f @ u)),
        dual_violation=float(np.max(np.abs(bmat.T @ u) - ell, initial=0.0).clip(min=0.0)),
        equilibrium_residual=float(np.abs(bmat @ q - f).max(initial=0.0) / fscale),
        iterations=res.iterations,
    )
    log.info("michell LP: kappa=%.17g, %d pivots", objective, res.iterations)
    return sol


def _rank_one(bars: list[Bar], s: np.ndarray) -> np.ndarray:
    e = np.array([b.direction for b in bars])
    return s[:, None, None] * e[:, :, None] * e[:, None, :]


def extract_limit_shape(sol: TrussSolution) -> LimitShape:
    """``w_i = |q_i| l_i / kappa``, ``sigma_i = kappa sign(q_i) e_i (x) e_i``.

    ``sign(0)`` is taken as ``+1``; such bars carry no mass.
    """
    kappa = sol.objective
    if not kappa > 1e-14:
        raise PreconditionError("empty optimal shape (zero load)")
    bars = sol.structure.bars
    w = np.abs(sol.q) * sol.structure.lengths / kappa
    sign = np.where(sol.q < 0, -1.0, 1.0)
    return LimitShape(kappa=kappa, mu_weights=w, sigma=_rank_one(bars, kappa * sign),
                      compliance=0.5 * kappa**2, bars=list(bars))


def weighted_shape(sol: TrussSolution, weights) -> LimitShape:
    """Shape carrying the same bar forces with prescribed bar masses.

    The stress is forced to ``sigma_i = q_i l_i / w_i e_i (x) e_i``; the
    resulting compliance is ``sum_i (q_i l_i)^2 / (2 w_i)``.  Bars with zero
    force may have zero weight.
    """
    w = np.asarray(weights, dtype=float)
    ell = sol.structure.lengths
    if w.shape != sol.q.shape or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise InputError("weights must be a probability vector over the bars")
    carrying = np.abs(sol.q) > 0
    if np.any(carrying & (w == 0)):
        raise InputError("a loaded bar needs positive weight")
    s = np.where(carrying, sol.q * ell / np.where(w > 0, w, 1.0), 0.0)
    sigma = _rank_one(sol.structure.bars, s)
    rp, _ = rho_polar_batch(sigma)
    return LimitShape(kappa=float(w @ rp), mu_weights=w, sigma=sigma,
                      compliance=float(w @ (0.5 * rp**2)), bars=list(sol.structure.bars))


def verify_entropy_condition(shape: LimitShape) -> float:
    """``|sum w rho°(sigma)^2 - (sum w rho°(sigma))^2|``; zero iff ``rho°(sigma)`` is ``mu``-a.e. constant."""
    rp, _ = rho_polar_batch(shape.sigma)
    w = shape.mu_weights
    return float(abs(w @ rp**2 - (w @ rp) ** 2))


def two_bar_problem() -> tuple[GroundStructure, LoadCase]:
    """Unit square, all six bars; loads ``e1`` at ``e1``, ``e2`` at ``e2``, ``-(e1+e2)`` at 0."""
    gs = complete_ground_structure([[0, 0], [1, 0], [0, 1], [1, 1]])
    lc = LoadCase({1: np.array([1.0, 0.0]), 2: np.array([0.0, 1.0]),
                   0: np.array([-1.0, -1.0])})
    return gs, lc

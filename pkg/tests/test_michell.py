import itertools
import time

import numpy as np
import pytest

from vanishing_mass import michell as mi
from vanishing_mass.errors import InfeasibleError, InputError, PreconditionError, UnbalancedLoadError
from vanishing_mass.integrands import rho_polar_batch


def vertex_oracle(gs, lc):
    """min sum l|q| over Bq = f by enumerating basic solutions (independent bar subsets)."""
    b = gs.equilibrium_matrix()
    f = lc.vector(len(gs.positions), gs.dim)
    ell = gs.lengths
    rank = np.linalg.matrix_rank(b)
    best = np.inf
    for k in range(1, rank + 1):
        for sub in itertools.combinations(range(len(ell)), k):
            cols = b[:, sub]
            if np.linalg.matrix_rank(cols) < k:
                continue
            q, *_ = np.linalg.lstsq(cols, f, rcond=None)
            if np.abs(cols @ q - f).max() > 1e-9:
                continue
            best = min(best, float(ell[list(sub)] @ np.abs(q)))
    return best


def cantilever():
    gs = mi.build_grid_ground_structure(3, 2, connectivity_radius=np.sqrt(2.0))
    lc = mi.LoadCase({2: np.array([0.0, -1.0]), 0: np.array([2.0, 0.5]), 3: np.array([-2.0, 0.5])})
    return gs, lc


@pytest.mark.parametrize("args,bars", [
    ((2, 2, None, 1.0, None), 4),
    ((2, 2, None, 1.0, np.sqrt(2.0)), 6),
    ((3, 3, None, 1.0, None), 12),
    ((3, 3, None, 1.0, np.sqrt(2.0)), 20),
    ((3, 2, None, 1.0, np.sqrt(2.0)), 11),
    ((2, 2, 2, 1.0, None), 12),
])
def test_grid_bar_counts(args, bars):
    assert len(mi.build_grid_ground_structure(*args).bars) == bars


def test_grid_drops_covered_bars():
    gs = mi.build_grid_ground_structure(3, 1 + 1, connectivity_radius=2.0)
    pairs = {(b.a, b.b) for b in gs.bars}
    assert (0, 2) not in pairs and (0, 1) in pairs and (1, 2) in pairs


def test_grid_errors():
    with pytest.raises(InputError):
        mi.build_grid_ground_structure(1, 3)
    with pytest.raises(InputError):
        mi.build_grid_ground_structure(2, 2, connectivity_radius=0.5)


def test_balance_examples():
    gs, lc = mi.two_bar_problem()
    assert mi.check_balanced(lc, gs.positions).ok
    r = mi.check_balanced(mi.LoadCase({0: np.array([1.0, 0.0])}), [[0.0, 0.0]])
    assert r.force_residual == 1.0 and not r.ok
    r = mi.check_balanced(mi.LoadCase({0: np.array([0.0, 1.0]), 1: np.array([0.0, -1.0])}),
                          [[1.0, 0.0], [-1.0, 0.0]])
    assert r.force_residual == 0.0 and r.moment_residual == 2.0 and not r.ok


def test_two_bar():
    gs, lc = mi.two_bar_problem()
    t = time.perf_counter()
    sol = mi.solve_michell_lp(gs, lc)
    assert time.perf_counter() - t < 0.1
    shape = mi.extract_limit_shape(sol)
    assert abs(sol.objective - 2.0) < 1e-12
    assert np.allclose(sol.q, [1, 1, 0, 0, 0, 0], atol=1e-12)
    assert np.allclose(shape.mu_weights, [0.5, 0.5, 0, 0, 0, 0], atol=1e-12)
    assert abs(shape.compliance - 2.0) < 1e-12
    assert mi.verify_entropy_condition(shape) == 0.0
    rp, _ = rho_polar_batch(shape.sigma)
    assert np.allclose(rp[shape.mu_weights > 0], shape.kappa, atol=1e-10)
    assert abs(shape.mu_weights.sum() - 1.0) < 1e-10


def test_two_bar_family():
    gs, lc = mi.two_bar_problem()
    sol = mi.solve_michell_lp(gs, lc)
    vals = []
    for d in np.arange(1, 10) / 10:
        w = np.zeros(6)
        w[0], w[1] = d, 1 - d
        s = mi.weighted_shape(sol, w)
        assert abs(s.compliance - (1 / (2 * d) + 1 / (2 * (1 - d)))) < 1e-12
        vals.append(s.compliance)
    assert int(np.argmin(vals)) == 4
    w = np.zeros(6)
    w[0], w[1] = 0.25, 0.75
    assert abs(mi.weighted_shape(sol, w).compliance - 8 / 3) < 1e-12


def test_single_bar():
    gs = mi.complete_ground_structure([[0.0, 0.0], [1.0, 0.0]])
    lc = mi.LoadCase({1: np.array([1.0, 0.0]), 0: np.array([-1.0, 0.0])})
    sol = mi.solve_michell_lp(gs, lc)
    shape = mi.extract_limit_shape(sol)
    assert sol.objective == 1.0 and sol.q.tolist() == [1.0]
    assert shape.mu_weights.tolist() == [1.0] and shape.compliance == 0.5
    assert mi.verify_entropy_condition(shape) == 0.0


def test_cantilever_against_vertex_oracle():
    gs, lc = cantilever()
    sol = mi.solve_michell_lp(gs, lc)
    oracle = vertex_oracle(gs, lc)
    assert abs(oracle - 8.5) < 1e-12  # frozen
    assert abs(sol.objective - oracle) < 1e-9
    assert sol.dual_gap < 1e-9 and sol.dual_violation < 1e-9


def test_load_scaling():
    gs, lc = cantilever()
    a = mi.extract_limit_shape(mi.solve_michell_lp(gs, lc))
    b = mi.extract_limit_shape(mi.solve_michell_lp(gs, lc.scaled(3.0)))
    assert abs(b.kappa - 3 * a.kappa) < 1e-9
    assert np.allclose(a.mu_weights, b.mu_weights, atol=1e-12)
    assert abs(b.compliance - 9 * a.compliance) < 1e-8


def test_refinement_monotone():
    gs, lc = mi.two_bar_problem()
    full = mi.solve_michell_lp(gs, lc).objective
    for drop in range(2, 6):
        pairs = [(b.a, b.b) for i, b in enumerate(gs.bars) if i != drop]
        assert mi.solve_michell_lp(gs.with_bars(pairs), lc).objective >= full - 1e-12


def test_3d_problem():
    gs = mi.build_grid_ground_structure(2, 2, 2, connectivity_radius=np.sqrt(3.0))
    lc = mi.LoadCase({0: np.array([-1.0, 0, 0]), 7: np.array([1.0, 0, 0])})
    # nodes 0 and 7 are opposite corners; the load is not along the diagonal, so moments
    assert not mi.check_balanced(lc, gs.positions).ok
    d = gs.positions[7] - gs.positions[0]
    lc = mi.LoadCase({0: -d, 7: d})
    sol = mi.solve_michell_lp(gs, lc)
    assert abs(sol.objective - 3.0) < 1e-9
    assert mi.verify_entropy_condition(mi.extract_limit_shape(sol)) < 1e-8 * 9


def test_errors():
    gs, _ = mi.two_bar_problem()
    with pytest.raises(UnbalancedLoadError):
        mi.solve_michell_lp(gs, mi.LoadCase({1: np.array([1.0, 0.0])}))
    mech = mi.build_grid_ground_structure(2, 2)
    lc = mi.LoadCase({0: np.array([-1.0, 0.0]), 3: np.array([1.0, 0.0])})
    lc = mi.LoadCase({0: np.array([-1.0, -1.0]), 3: np.array([1.0, 1.0])})
    with pytest.raises(InfeasibleError) as exc:
        mi.solve_michell_lp(mech, lc)
    y = exc.value.certificate
    assert y is not None
    zero = mi.solve_michell_lp(gs, mi.LoadCase({0: np.zeros(2)}))
    with pytest.raises(PreconditionError):
        mi.extract_limit_shape(zero)

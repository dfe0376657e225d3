import numpy as np
import pytest
from scipy.optimize import linprog

from vanishing_mass.errors import InfeasibleError
from vanishing_mass.simplex import independent_rows, solve_lp


def test_small_lp():
    # min x1 + 2 x2 s.t. x1 + x2 = 1
    r = solve_lp([1.0, 2.0], [[1.0, 1.0]], [1.0])
    assert r.x.tolist() == [1.0, 0.0] and r.objective == 1.0 and r.duals.tolist() == [1.0]


def test_redundant_rows_dropped():
    a = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [1.0, 2.0, 1.0]])
    assert independent_rows(a).tolist() == [1, 2] or len(independent_rows(a)) == 2
    r = solve_lp([1.0, 1.0, 1.0], a, [1.0, 1.0, 2.0])
    assert abs(r.objective - 1.0) < 1e-12


def test_inconsistent_rows_certificate():
    a = np.array([[1.0, 1.0], [2.0, 2.0]])
    b = np.array([1.0, 3.0])
    with pytest.raises(InfeasibleError) as exc:
        solve_lp([1.0, 1.0], a, b)
    y = exc.value.certificate
    assert np.all(a.T @ y <= 1e-12) and b @ y > 0


def test_phase_one_certificate():
    # x >= 0 with x1 + x2 = -1 is infeasible
    a = np.array([[1.0, 1.0]])
    with pytest.raises(InfeasibleError) as exc:
        solve_lp([1.0, 1.0], a, [-1.0])
    y = exc.value.certificate
    assert np.all(a.T @ y <= 1e-12) and -1.0 * y[0] > 0


def test_degenerate_cycling_example():
    # Beale's classic cycling LP in equality form
    c = np.array([-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0])
    a = np.array([[0.25, -60.0, -0.04, 9.0, 1.0, 0.0, 0.0],
                  [0.5, -90.0, -0.02, 3.0, 0.0, 1.0, 0.0],
                  [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]])
    b = np.array([0.0, 0.0, 1.0])
    r = solve_lp(c, a, b)
    assert abs(r.objective - (-0.05)) < 1e-12


def test_against_highs():
    rng = np.random.default_rng(0)
    for _ in range(150):
        m, n = rng.integers(2, 8), rng.integers(8, 20)
        a = rng.normal(size=(m, n))
        x0 = rng.uniform(0, 1, n) * (rng.uniform(size=n) < 0.5)
        b = a @ x0
        c = rng.uniform(0.1, 2.0, n)
        ref = linprog(c, A_eq=a, b_eq=b, bounds=(0, None), method="highs")
        r = solve_lp(c, a, b)
        assert ref.status == 0
        assert abs(r.objective - ref.fun) <= 1e-8 * max(1.0, abs(ref.fun))
        assert np.abs(a @ r.x - b).max() <= 1e-9 * max(1.0, np.abs(b).max())
        assert np.all(a.T @ r.duals <= c + 1e-9)
        assert abs(b @ r.duals - r.objective) <= 1e-8 * max(1.0, abs(r.objective))

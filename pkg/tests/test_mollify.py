import numpy as np
import pytest
from scipy.integrate import dblquad

from vanishing_mass import mollify as mo
from vanishing_mass.errors import InputError, PreconditionError

DOM = mo.unit_disk()
DELTA = 0.0075


def test_domain_constants():
    # frozen from dense sampling of the smoothstep cutoff
    assert abs(DOM.hess_sup - 37.004) < 1e-2
    assert abs(DOM.delta_0 - 0.9 / (3 * DOM.hess_sup)) < 1e-15
    assert abs(DOM.delta_0 - 0.0081072) < 1e-6
    assert mo.normal_residual(DOM) <= 1e-8
    assert mo.jacobian_symmetry_residual(DOM, DELTA) == 0.0


def test_eta_normalized():
    from scipy.integrate import quad
    c = mo.eta_constant(2)
    radial = quad(lambda r: 2 * np.pi * r * np.exp(-1 / (1 - r * r)), 0, 1, epsabs=1e-14)[0]
    assert abs(c * radial - 1.0) < 1e-12


def test_theta_examples():
    t, jac = mo.theta(np.zeros(2), DELTA, DOM)
    assert np.all(t == 0.0) and np.all(jac == np.eye(2))
    z = DOM.boundary_sampler(36)
    t, _ = mo.theta(z, DELTA, DOM)
    assert np.abs(t - z * (1 + 3 * DELTA)).max() < 1e-14
    x = np.random.default_rng(0).uniform(-1.6, 1.6, (5000, 2))
    for d in (DELTA, DELTA / 10):
        t, _ = mo.theta(x, d, DOM)
        assert np.linalg.norm(t - x, axis=-1).max() <= 3 * DOM.grad_sup * d * (1 + 1e-12)
    with pytest.raises(PreconditionError):
        mo.theta(z, 0.01, DOM)
    with pytest.raises(PreconditionError):
        mo.theta(z, 0.0, DOM)


def test_expansion():
    r = mo.check_expansion(DOM, 0.01, strict=False)
    assert r.passed and abs(r.min_distance - 0.03) < 1e-12
    assert mo.check_expansion(DOM, 0.9 * DOM.delta_0).passed
    assert not mo.check_expansion(DOM, DELTA, direction=-1.0).passed


def test_injectivity():
    r = mo.injectivity_check(DOM, DELTA)
    assert r.passed and r.min_ratio >= 1 - 3 * DELTA * DOM.c_k - 1e-12


@pytest.mark.parametrize("t", [-1.0, -0.7, -0.2, 0.0, 0.35, 0.9])
def test_halfplane_against_dblquad(t):
    ref = dblquad(lambda y, x: float(mo.eta(np.array([x, y]))),
                  max(t, -1.0), 1.0, lambda x: -np.sqrt(max(1 - x * x, 0)),
                  lambda x: np.sqrt(max(1 - x * x, 0)), epsabs=1e-13)[0]
    assert abs(float(mo.halfplane_mass(t)) - ref) < 1e-10


@pytest.mark.parametrize("t1,t2", [(0.1, 0.3), (-0.4, 0.2), (0.5, -0.6), (-0.3, -0.3), (0.0, 0.0)])
def test_quadrant_against_dblquad(t1, t2):
    ref = dblquad(lambda y, x: float(mo.eta(np.array([x, y]))),
                  t1, 1.0, lambda x: max(t2, -np.sqrt(max(1 - x * x, 0))),
                  lambda x: max(t2, np.sqrt(max(1 - x * x, 0))), epsabs=1e-13)[0]
    assert abs(float(mo.quadrant_mass(t1, t2)) - ref) < 1e-10


def test_atom_near_center_closed_form():
    w = np.array([[1.0, 0.2], [0.2, -0.5]])
    lam = mo.DiscreteMeasure().add_atom((0.0, 0.0), w)
    f = mo.mollify(lam, DELTA, DOM)
    x = np.random.default_rng(1).uniform(-DELTA, DELTA, (200, 2))
    ref = w[None] * (mo.eta(x / DELTA) / DELTA**2)[:, None, None]
    assert np.abs(f(x) - ref).max() <= 1e-9 * np.abs(ref).max()


def test_mass_atoms():
    mu = mo.DiscreteMeasure(scalar=True).add_atom((0.1, 0.2), 1.0)
    assert mo.mass_check(mu, DELTA, DOM) <= 1e-6
    rng = np.random.default_rng(0)
    mu = mo.DiscreteMeasure(scalar=True)
    pts = rng.uniform(-0.7, 0.7, (10, 2))
    pts[0] = (1.0, 0.0)
    for p in pts:
        mu.add_atom(p, 0.1)
    assert mo.mass_check(mu, DELTA, DOM) <= 1e-6


def test_support_collar():
    lam = mo.DiscreteMeasure().add_atom((1.0, 0.0), np.eye(2)).add_atom((0.0, -1.0), np.eye(2))
    r = mo.support_check(mo.mollify(lam, DELTA, DOM))
    assert r.passed and r.max_abs == 0.0


def test_source_divergence():
    assert mo.measure_divergence_residual(mo.square_truss()) < 1e-12
    assert mo.measure_divergence_residual(mo.braced_cross()) < 1e-12
    assert mo.measure_divergence_residual(mo.airy_bump()) < 1e-12
    broken = mo.square_truss()
    broken.segments.pop()
    assert mo.measure_divergence_residual(broken) > 1e-2


def test_weak_star_linear_rate():
    lam = mo.DiscreteMeasure(scalar=True).add_atom((1.0, 0.0), 1.0)
    deltas = [0.008, 0.004, 0.002]
    err = mo.weak_star_errors(lam, deltas, DOM)
    # the atom moves inward by 3 delta; the test field has unit slope in x
    assert np.allclose(err, 3 * np.array(deltas), rtol=1e-3)


def test_total_variation_bound():
    lam = mo.DiscreteMeasure().add_atom((0.99, 0.0), np.diag([1.0, -1.0]))
    r = mo.total_variation_check(lam, DELTA, DOM)
    assert r.passed and r.field_tv <= r.bound


def test_input_errors():
    with pytest.raises(InputError):
        mo.DiscreteMeasure().add_atom((0, 0), [[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(InputError):
        mo.DiscreteMeasure(scalar=True).add_airy((0, 0), 0.5, 1.0)
    with pytest.raises(InputError):
        mo.DiscreteMeasure().add_box((0, 0), (0, 1), np.eye(2))
    with pytest.raises(InputError):
        mo.mass_check(mo.DiscreteMeasure().add_atom((0, 0), np.eye(2)), DELTA, DOM)
    with pytest.raises(PreconditionError):
        mo.mollify(mo.DiscreteMeasure(), 0.01, DOM)

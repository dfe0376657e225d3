import numpy as np
import pytest

from vanishing_mass import envelopes as env
from vanishing_mass.errors import InputError
from vanishing_mass.integrands import rho_polar_batch
from vanishing_mass.tensor import random_sym


def test_examples():
    p = env.KSParams(1.0, 1.0)
    assert env.ks_h(np.zeros((2, 2)), p) == 0.0
    assert env.ks_h(np.eye(2), p) == 3.0
    assert env.ks_h(np.diag([1e-300, 0.0]), p) == 1.0
    assert env.q_div_h_general(np.diag([2.0, 0.0]), p) == 5.0
    assert abs(env.q_div_h_general(np.diag([0.25, 0.25]), p) - 0.875) < 1e-15
    assert abs(env.q_div_h_explicit(np.diag([0.25, 0.25]), p) - 0.875) < 1e-15
    assert env.q_div_h_general(np.zeros((3, 3)), p) == 0.0
    # fat branch: 2 sqrt(ab) rho + a(|tau|^2 - rho^2) = 20 * 3/sqrt2 + (3 - 4.5)
    big = env.KSParams(1.0, 100.0)
    hand = 20 * 3 / np.sqrt(2.0) + (3.0 - 4.5)
    assert abs(env.q_div_h_explicit(np.eye(3), big) - hand) < 1e-12
    assert abs(env.q_div_h_general(np.eye(3), big) - hand) < 1e-12
    assert abs(hand - 40.926406871192846) < 1e-12
    assert abs(env.q_div_h_eps(np.eye(2), 1e-3) - 1.999) < 1e-12
    assert env.q_div_h_eps(np.zeros((2, 2)), 1e-3) == 0.0
    t = np.diag([3.0, 1.0])
    assert env.q_div_h_explicit(t, p) == env.ks_h(t, p)
    assert abs(env.q_div_h_step1a(np.diag([1.0, 0.0]), 1e-3, 1.0, 1.0) - env.q_div_h_general(
        np.diag([1.0, 0.0]), env.KSParams(5e-4, 500.0))) < 1e-12


def test_validation():
    with pytest.raises(InputError):
        env.KSParams(0.0, 1.0)
    with pytest.raises(InputError):
        env.KSParams.from_eps(-1.0)


@pytest.mark.parametrize("dim", [2, 3])
def test_general_matches_explicit(dim):
    rng = np.random.default_rng(dim)
    t = random_sym(dim, rng, 50000, scale=2.0)
    p = env.KSParams(rng.uniform(0.1, 10, 50000), rng.uniform(0.1, 10, 50000))
    assert np.abs(env.q_div_h_general(t, p) - env.q_div_h_explicit(t, p)).max() <= 1e-10


@pytest.mark.parametrize("dim", [2, 3])
def test_step1a_matches_general(dim):
    rng = np.random.default_rng(5)
    t = random_sym(dim, rng, 2000)
    for eps, m, kappa in ((0.1, 2.0, 1.5), (0.01, 0.5, 3.0)):
        p = env.KSParams.from_step1a(eps, m, kappa)
        assert np.abs(env.q_div_h_step1a(t, eps, m, kappa) - env.q_div_h_general(t, p)).max() < 1e-10


@pytest.mark.parametrize("dim", [2, 3])
def test_envelope_below_h_and_limit(dim):
    rng = np.random.default_rng(9)
    t = random_sym(dim, rng, 20000)
    p = env.KSParams(0.7, 1.3)
    assert np.all(env.q_div_h_general(t, p) <= env.ks_h(t, p) + 1e-12)
    rp, _ = rho_polar_batch(t)
    n2 = np.einsum("kij,kij->k", t, t)
    for eps in (1e-2, 1e-3, 1e-4):
        err = np.abs(env.q_div_h_eps(t, eps) - rp)
        assert np.all(err <= eps * (n2 + rp**2))


def test_truncation_increases_to_h():
    t = np.diag([0.3, -0.2])
    p = env.KSParams(1.0, 2.0)
    vals = [env.ks_h_truncated(t, p, m) for m in (1.0, 10.0, 100.0, 1e4)]
    assert vals == sorted(vals) and vals[-1] == env.ks_h(t, p)


def test_convex_along_wave_cone_lines():
    from vanishing_mass.tensor import wave_cone_batch
    rng = np.random.default_rng(3)
    p = env.KSParams(1.0, 2.0)
    for dim in (2, 3):
        sig = wave_cone_batch(dim, 11, 200)
        a = random_sym(dim, rng, 200)
        t = np.linspace(-2, 2, 41)
        vals = env.q_div_h_general(a[:, None] + t[None, :, None, None] * sig[:, None], p)
        second = vals[:, :-2] + vals[:, 2:] - 2 * vals[:, 1:-1]
        assert second.min() >= -1e-9

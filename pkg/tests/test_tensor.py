import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vanishing_mass.errors import InputError
from vanishing_mass.tensor import (SymMat, as_matrix, eigen_ordered, eigvals_ordered, inner,
                                   is_singular, random_sym, sample_wave_cone, wave_cone_batch)


def test_symmat_roundtrip():
    m = SymMat.from_array([[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, 6.0]])
    assert m.dim == 3
    assert np.array_equal(m.array, np.asarray(m))
    assert SymMat.diag(1, 2).array.tolist() == [[1.0, 0.0], [0.0, 2.0]]


@pytest.mark.parametrize("bad", [
    [[1.0, 2.0], [3.0, 1.0]],
    [[1.0, np.nan], [np.nan, 1.0]],
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    np.eye(4),
])
def test_as_matrix_rejects(bad):
    with pytest.raises(InputError):
        as_matrix(bad)


def test_ordering_examples():
    assert eigen_ordered(np.diag([3.0, -1.0])).eigvals.tolist() == [-1.0, 3.0]
    assert eigen_ordered(np.diag([2.0, -2.0, 1.0])).eigvals.tolist() == [1.0, -2.0, 2.0]
    assert eigen_ordered(np.zeros((3, 3))).eigvals.tolist() == [0.0, 0.0, 0.0]


@pytest.mark.parametrize("dim", [2, 3])
def test_decomposition_against_lapack(dim):
    rng = np.random.default_rng(1)
    a = random_sym(dim, rng, 2000)
    ref = np.sort(np.abs(np.linalg.eigvalsh(a)), axis=-1)
    assert np.abs(np.abs(eigvals_ordered(a)) - ref).max() < 1e-12
    for m in a[:300]:
        sp = eigen_ordered(m)
        assert np.abs(sp.recompose() - m).max() < 1e-12
        assert abs(np.linalg.det(sp.rotation) - 1.0) < 1e-12


def test_repeated_and_near_repeated_roots():
    rng = np.random.default_rng(2)
    for gap in (0.0, 1e-14, 1e-10, 1e-6):
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        a = q @ np.diag([1.0, 1.0 + gap, -3.0]) @ q.T
        a = 0.5 * (a + a.T)
        sp = eigen_ordered(a)
        assert np.abs(sp.recompose() - a).max() < 1e-13
        assert np.abs(sp.rotation.T @ sp.rotation - np.eye(3)).max() < 1e-13


sym3 = arrays(np.float64, (3, 3), elements=st.floats(-1e3, 1e3, allow_nan=False, allow_subnormal=False))


@settings(max_examples=200, deadline=None)
@given(sym3)
def test_property_recompose(a):
    a = 0.5 * (a + a.T)
    sp = eigen_ordered(a)
    scale = max(1.0, np.abs(a).max())
    assert np.abs(sp.recompose() - a).max() <= 1e-12 * scale
    mags = np.abs(sp.eigvals)
    assert np.all(np.diff(mags) >= -1e-12 * scale)


def test_inner_and_wave_cone():
    a, b = np.diag([1.0, 2.0]), np.array([[0.0, 1.0], [1.0, 3.0]])
    assert inner(a, b) == 6.0
    w = wave_cone_batch(3, 0, 1000)
    assert np.abs(np.linalg.det(w)).max() < 1e-12
    s = sample_wave_cone(2, 0, 5)
    assert len(s) == 5 and all(is_singular(x.matrix.array) for x in s)
    assert not is_singular(np.eye(2))

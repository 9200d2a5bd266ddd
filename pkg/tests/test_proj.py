from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from equidyn import proj
from equidyn.errors import DimensionMismatch, ZeroVector
from equidyn.proj import ChartVector, fs_distance, fs_form, normalize

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
cplx = st.builds(complex, finite, finite)


def raw_vectors(k):
    return st.lists(cplx, min_size=k + 1, max_size=k + 1).filter(
        lambda v: max(abs(c) for c in v) > 1e-3
    )


def test_normalize_scaling():
    assert normalize((2, 0)).coords == (1, 0)


def test_normalize_removes_pivot_phase():
    x = normalize((0, 3j))
    assert x.coords == (0, 1)


def test_normalize_idempotent():
    x = normalize((1 + 1j, 1 - 1j))
    assert np.allclose(np.abs(x.array), 1.0)
    assert x.array[0].imag == 0 and x.array[0].real >= 0
    assert normalize(x.coords) == x


def test_normalize_zero_vector():
    with pytest.raises(ZeroVector):
        normalize((0, 0))


def test_fs_distance_examples():
    assert fs_distance(normalize((1, 0)), normalize((0, 1))) == pytest.approx(1.0)
    x = normalize((0.3, 1 + 2j))
    assert fs_distance(x, x) == pytest.approx(0.0, abs=1e-12)
    assert fs_distance(normalize((1, 1)), normalize((1, -1))) == pytest.approx(1.0)


def test_fs_distance_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        fs_distance(normalize((1, 0)), normalize((1, 0, 0)))


def test_fs_form_p1():
    assert fs_form(ChartVector(0, (0j,)))[0, 0].real == pytest.approx(1 / math.pi)
    assert fs_form(ChartVector(0, (1 + 0j,)))[0, 0].real == pytest.approx(1 / (4 * math.pi))


def test_fs_form_p2_origin():
    H = fs_form(ChartVector(2, (0j, 0j)))
    assert np.allclose(H, np.eye(2) / math.pi)
    assert np.all(np.linalg.eigvalsh(H) > 0)


def test_fs_form_total_mass_polar_oracle():
    # integral of (1/pi)(1+r^2)^-2 over the plane, computed radially
    r = np.linspace(0, 2000, 2_000_001)
    g = 2 * r / (1 + r**2) ** 2
    assert np.trapezoid(g, r) == pytest.approx(1.0, abs=1e-5)


def test_sample_fs_volume():
    rng = np.random.default_rng(1)
    assert proj.sample_fs_volume(rng, 0) == []
    X = proj.sample_fs_rows(np.random.default_rng(2), 100_000, 1)
    z = X[:, 0] / X[:, 1]
    assert np.mean(np.abs(z) ** 2 / (1 + np.abs(z) ** 2)) == pytest.approx(0.5, abs=0.01)
    a = proj.sample_fs_volume(np.random.default_rng(3), 10, 2)
    b = proj.sample_fs_volume(np.random.default_rng(3), 10, 2)
    assert a == b


def test_chordal_ball_mass_is_r_squared():
    n = 200_000
    X = proj.sample_fs_rows(np.random.default_rng(4), n, 1)
    c = normalize((0.3 + 0.1j, 1)).array[None]
    for r in (0.2, 0.5):
        inside = proj.chordal_rows(X, np.repeat(c, n, axis=0)) < r
        p = inside.mean()
        assert abs(p - r**2) < 3 * math.sqrt(r**2 * (1 - r**2) / n)


@settings(max_examples=100, deadline=None)
@given(raw_vectors(2), raw_vectors(2), raw_vectors(2))
def test_triangle_inequality(a, b, c):
    x, y, z = normalize(a), normalize(b), normalize(c)
    assert fs_distance(x, z) <= fs_distance(x, y) + fs_distance(y, z) + 1e-12


@settings(max_examples=100, deadline=None)
@given(raw_vectors(1), raw_vectors(1), cplx.filter(lambda c: abs(c) > 1e-2))
def test_distance_scale_invariance(a, b, lam):
    x, y = normalize(a), normalize(b)
    xs = normalize([lam * c for c in a])
    assert fs_distance(xs, y) == pytest.approx(fs_distance(x, y), abs=1e-12)
    assert 0 <= fs_distance(x, y) <= 1 + 1e-15
    assert fs_distance(x, y) == pytest.approx(fs_distance(y, x), abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(raw_vectors(2))
def test_normalize_invariants(a):
    x = normalize(a)
    v = x.array
    m = np.abs(v)
    assert m.max() == pytest.approx(1.0)
    piv = int(np.argmax(m >= m.max() - 1e-15))
    assert v[piv].imag == 0 and v[piv].real >= 0
    assert normalize(x.coords).isclose(x)

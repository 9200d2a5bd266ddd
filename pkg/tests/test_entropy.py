from __future__ import annotations

import cmath
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from equidyn import endo, entropy, library, measure, proj
from equidyn.empirical import EmpiricalMeasure
from equidyn.entropy import dyn_distance, separated_set, sigma_count
from equidyn.errors import EmptyBall, InsufficientGrowth, NoValidPatch
from equidyn.proj import fs_distance, normalize

Z2 = library.build_map("z2")
POW = library.power_map_p2(2)


def z(c):
    return normalize((c, 1))


def torus(m):
    th = 2 * np.pi * np.arange(m) / m
    A, B = np.meshgrid(th, th)
    return np.stack([np.exp(1j * A.ravel()), np.exp(1j * B.ravel()), np.ones(m * m)], axis=1)


def test_dyn_distance_examples():
    x, y = z(0.3 + 0.1j), z(-0.7j)
    assert dyn_distance(Z2, x, y, 1) == pytest.approx(fs_distance(x, y))
    th = 1e-4
    y = z(cmath.exp(1j * th))
    for n in range(1, 8):
        # chordal distance between unit-circle points at angle a is sin(a/2)
        assert dyn_distance(Z2, z(1), y, n) == pytest.approx(math.sin(2 ** (n - 1) * th / 2), rel=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_dyn_distance_monotone(seed, n):
    f = library.build_map("z2m1")
    X = proj.points_from_rows(proj.sample_fs_rows(np.random.default_rng(seed), 2, 1))
    assert dyn_distance(f, X[0], X[1], n + 1) >= dyn_distance(f, X[0], X[1], n)


def test_separated_set_examples():
    pool = measure.circle_measure(200).points
    assert separated_set(Z2, 3, 1.5, pool).cardinality == 1
    assert separated_set(Z2, 3, 1e-9, pool).cardinality == 200


def test_separated_set_pairs_and_maximality():
    pool = proj.sample_fs_rows(np.random.default_rng(0), 300, 1)
    res = separated_set(library.build_map("rational"), 3, 0.3, pool)
    P = res.points
    for i in range(len(P)):
        for j in range(i):
            assert dyn_distance(library.build_map("rational"), P[i], P[j], 3) >= 0.3
    for x in proj.points_from_rows(pool):
        assert min(dyn_distance(library.build_map("rational"), x, p, 3) for p in P) < 0.3 or any(
            x.isclose(p) for p in P
        )


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_packing_monotonicity(seed):
    rng = np.random.default_rng(seed)
    pool = proj.sample_fs_rows(rng, 400, 1)
    f = library.build_map("z2m2")
    a = separated_set(f, 3, 0.2, pool).cardinality
    b = separated_set(f, 3, 0.3, pool).cardinality
    c = separated_set(f, 3, 0.2, np.concatenate([pool, proj.sample_fs_rows(rng, 200, 1)])).cardinality
    assert b <= a <= c


def test_entropy_z2():
    pool = measure.circle_measure(2**15).points
    res = separated_set(Z2, 8, 0.2, pool)
    table = entropy.entropy_table(Z2, range(4, 11, 2), [0.2], pool)
    cal = table["table"][0]["calibration"]
    assert 0.5 * cal * 2**8 <= res.cardinality <= 2 * cal * 2**8
    assert table["estimate"] == pytest.approx(math.log(2), rel=0.15)


def test_entropy_z3():
    pool = measure.circle_measure(3**9).points
    est = entropy.entropy_estimate(library.build_map("z3"), [3, 4, 5, 6], [0.2], pool)
    assert est == pytest.approx(math.log(3), rel=0.15)


def test_entropy_power_map_torus():
    est = entropy.entropy_estimate(POW, [1, 2, 3, 4], [0.3], torus(256))
    assert est == pytest.approx(2 * math.log(2), rel=0.2)


def test_entropy_pool_saturation():
    with pytest.raises(InsufficientGrowth):
        entropy.entropy_estimate(Z2, [4, 5, 6, 7], [0.2], measure.circle_measure(64).points)


def test_brin_katok_examples():
    mu = measure.circle_measure(2**12)
    r = entropy.brin_katok(Z2, mu, z(1), 1.0, [1])
    # the open ball misses only the antipodal atom
    assert r.values[0] == pytest.approx(0.0, abs=1e-3)
    fixed = EmpiricalMeasure.dirac(z(1))
    r = entropy.brin_katok(Z2, fixed, z(1), 0.1, range(1, 11))
    assert all(v == 0 for v in r.values) and r.plateau == 0


def test_brin_katok_plateau():
    mu = measure.circle_measure(2**16)
    r = entropy.brin_katok(Z2, mu, None, 0.1, range(6, 11), rng=np.random.default_rng(1))
    assert 0.85 * math.log(2) <= r.plateau <= 1.15 * math.log(2)


def test_brin_katok_empty_ball():
    mu = EmpiricalMeasure.dirac(z(1))
    with pytest.raises(EmptyBall):
        entropy.brin_katok(Z2, mu, z(-1), 0.1, [1])


def test_graph_volume_examples():
    rng = np.random.default_rng(2)
    v = entropy.graph_volume(Z2, 5, 100_000, rng)
    assert v.target == 31
    assert abs(v.value - 31) < 3 * v.std_error and abs(v.value - 31) < 0.02 * 31
    v = entropy.graph_volume(Z2, 1, 1000, rng)
    assert v.value == pytest.approx(1.0)
    v = entropy.graph_volume(POW, 3, 20_000, rng)
    assert abs(v.value - 49) < 3 * v.std_error and abs(v.value - 49) < 0.05 * 49


@pytest.mark.parametrize("name", library.BUNDLED)
def test_graph_volume_all_maps(name):
    f = library.bundled_map(name)
    n = 4 if f.k == 1 else 2
    v = entropy.graph_volume(f, n, 20_000, np.random.default_rng(3))
    assert abs(v.value - entropy.graph_volume_target(f.d, f.k, n)) < 3 * v.std_error + 1e-9


def test_diagonal_term_matches_degree():
    # i1 = i2 = i: the mixed pairing of (f^i)^*omega with itself is d^{2i}
    X = proj.sample_fs_rows(np.random.default_rng(4), 50_000, 2)
    M, H = endo.pullback_metric_rows(POW, X, 2)
    vals = (np.linalg.det(M) / np.linalg.det(H)).real
    se = vals.std() / math.sqrt(len(vals))
    assert abs(vals.mean() - 16) < 3 * se


def test_restricted_volume():
    rng = np.random.default_rng(5)
    S = entropy.line_samples([1, 0, 0], 20_000, rng)
    v1 = entropy.restricted_graph_volume(POW, 1, S, target_degree=1)
    assert v1.value == pytest.approx(1.0, rel=0.05)
    v4 = entropy.restricted_graph_volume(POW, 4, S, target_degree=1)
    assert v4.target == 15
    assert v4.value == pytest.approx(15, rel=0.05)
    vals = [entropy.restricted_graph_volume(POW, n, S).value for n in range(1, 5)]
    g = entropy.growth_exponents(range(1, 5), vals)
    assert g["lov"] == pytest.approx(math.log(2), rel=0.1)
    assert g["lov"] < 2 * math.log(2) and g["slope"] < 2 * math.log(2)


def test_jacobian_check():
    rng = np.random.default_rng(6)
    res = entropy.jacobian_constant_check(Z2, measure.circle_measure(2**14), 50, rng)
    assert res.max_deviation < 0.15 and res.constant
    res = entropy.jacobian_constant_check(Z2, EmpiricalMeasure.dirac(z(1)), 10, rng)
    assert not res.constant
    assert res.max_deviation == pytest.approx(1 - 1 / 2)


def test_jacobian_mass_floor_excludes_light_patches():
    mu = measure.circle_measure(2**10)
    with pytest.raises(NoValidPatch):
        entropy.jacobian_constant_check(Z2, mu, 20, np.random.default_rng(7), mass_floor=0.5)


def test_sigma_count_examples():
    assert sigma_count(4, 7, 1) == 1
    assert sigma_count(4, 2, 0.5) == 7
    n = 60
    c = sigma_count(4, n, 0.3)
    assert math.log(c, 4) / n < 1


def brute_sigma(dk, n, sigma):
    import itertools

    j0 = math.ceil(n * Fraction(sigma))
    return sum(1 for w in itertools.product(range(dk), repeat=n) if w.count(0) >= j0)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(0, 6), st.fractions(0, 1).filter(lambda s: s > 0))
def test_sigma_count_brute_force(dk, n, sigma):
    if not Fraction(1, dk) < sigma <= 1:
        return
    assert sigma_count(dk, n, sigma) == brute_sigma(dk, n, sigma)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(2, 20))
def test_sigma_count_normalized_decreasing(p, q):
    # along horizons with n*sigma an integer, count * 4^-n strictly decreases
    sigma = Fraction(p, q)
    if not Fraction(1, 4) < sigma <= 1:
        return
    ns = list(range(q, 201, q))
    vals = [Fraction(sigma_count(4, n, sigma), 4**n) for n in ns]
    assert all(b < a for a, b in zip(vals, vals[1:]))

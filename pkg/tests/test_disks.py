from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from equidyn import disks, library
from equidyn.disks import annulus_modulus, area_diameter_check, disk_area, disk_diameter, linear_disk
from equidyn.errors import PreconditionViolated
from equidyn.proj import normalize


def z(c):
    return normalize((c, 1))


def test_linear_disk_area():
    for c in (z(0), z(2 + 1j), normalize((1, 0))):
        assert disk_area(linear_disk(c, chordal_radius=0.3)) == pytest.approx(0.09, abs=1e-4)


def test_linear_disk_area_p2():
    d = linear_disk(normalize((1, 2j, -1)), chordal_radius=0.3, rng=np.random.default_rng(0))
    assert disk_area(d) == pytest.approx(0.09, abs=1e-4)


def test_whole_line_area():
    # U(zeta) = (zeta, 1) on |zeta| <= R covers P^1 minus a disk of area 1/(1+R^2)
    R = 1e4
    d = disks.polynomial_disk([[0, 1], [1, 0]], outer_radius=R)
    assert disk_area(d) == pytest.approx(1.0, abs=1e-6)


def test_image_under_square():
    # U(zeta) = (zeta^2, 1) covers |w| < rho^2 twice
    rho = 0.5
    d = disks.polynomial_disk([[0, 1], [0, 0], [1, 0]], outer_radius=rho)
    image = rho**4 / (1 + rho**4)
    assert disk_area(d) / 2 == pytest.approx(image, rel=0.01)


def test_diameter_examples():
    for rho in (0.01, 0.05):
        assert disk_diameter(linear_disk(z(0.3), chordal_radius=rho)) == pytest.approx(2 * rho, rel=0.02)
    pt = disks.grid_disk(np.array([[1, 0]], dtype=complex), np.array([0j]), (0, 1), 0.0)
    assert disk_diameter(pt) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_diameter_monotone_in_radius(seed, a, b):
    d = disks.random_polynomial_disk(np.random.default_rng(seed), k=2)
    lo, hi = sorted((a, b))
    assert disk_diameter(d, lo) <= disk_diameter(d, hi) + 1e-12


def test_annulus_modulus():
    assert annulus_modulus(math.exp(-2 * math.pi), 1.0) == pytest.approx(1.0)
    with pytest.raises(PreconditionViolated):
        annulus_modulus(0.5, 0.5)
    assert annulus_modulus(0.1, 0.9) == pytest.approx(annulus_modulus(0.1, 0.3) + annulus_modulus(0.3, 0.9))


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 0.9), st.floats(1e-3, 1.0), st.floats(1.01, 100))
def test_modulus_scale_invariant(r, lam, q):
    assert annulus_modulus(lam * r, lam * r * q) == pytest.approx(annulus_modulus(r, r * q))


@pytest.mark.parametrize("rho,x", [(0.1, 0.3), (0.4, 0.5), (0.2, 0.05)])
def test_linear_ratio_closed_form(rho, x):
    d = linear_disk(z(0.7 - 0.2j), chordal_radius=rho)
    assert area_diameter_check(d, x, 1.0) == pytest.approx(disks.linear_ratio(rho, x), rel=0.02)


def test_linear_ratio_monotone_in_outer_area():
    # fixed inner disk, larger outer disk: the ratio does not increase
    r = 0.05
    vals = [disks.linear_ratio(rho, r / rho) for rho in (0.1, 0.2, 0.4, 0.8)]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_ratio_vanishes_as_annulus_closes():
    d = linear_disk(z(0.1), chordal_radius=0.3)
    vals = [area_diameter_check(d, 1 - t, 1.0) for t in (1e-1, 1e-2, 1e-3)]
    assert vals[2] < vals[1] < vals[0] and vals[2] < 1e-3


def test_area_refinement_stable():
    d = disks.random_polynomial_disk(np.random.default_rng(3), k=2)
    assert disk_area(d, levels=6) == pytest.approx(disk_area(d, levels=3), rel=0.01)


def test_choose_l():
    assert disks.choose_l(2, 2, 0.1) == 7
    tau, d, eps = 2, 2, 0.1
    l = disks.choose_l(tau, d, eps)
    assert 2 * tau * d**-l / (1 - 1 / d) < eps <= 2 * tau * d ** -(l - 1) / (1 - 1 / d)


def test_ljubich_z2():
    rep = disks.ljubich_experiment(library.build_map("z2"), z(0.8 + 0.6j), 0.025, 0.05, range(0, 7))
    rows = rep["table"]
    assert rows[0]["succeeded"] == 1
    d0 = disk_diameter(linear_disk(z(0.8 + 0.6j), chordal_radius=0.025))
    assert rows[0]["median_diameter"] == pytest.approx(d0, rel=0.02)
    assert all(r["succeeded"] == r["attempted"] == 2 ** r["n"] for r in rows)
    # the branches of the 2^n-th root on the unit circle contract by exactly 2 per step
    assert rep["diameter_slope"] == pytest.approx(-math.log(2), rel=0.2)
    assert rep["diameter_slope"] <= rep["diameter_slope_target"]


def test_ljubich_rejects_postcritical_disk():
    with pytest.raises(PreconditionViolated):
        disks.ljubich_experiment(library.build_map("z2m1"), z(-1.0), 0.025, 0.05, [2])


def test_random_family_ratios_finite():
    r = disks.random_family_ratios(30, np.random.default_rng(0))
    assert np.all(np.isfinite(r)) and np.all(r > 0)
    assert r.max() < 3 * disks.LINEAR_BASELINE

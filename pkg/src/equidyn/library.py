"""Bundled test maps.

The JSON files under ``maps/`` are the canonical copies; the Python builders
here are what generated them and are used for random families in tests.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .endo import HomogeneousMap, map_from_json_dict

PERTURBATION_EPS = 0.3


def poly_p1(coeffs, name: str = "") -> HomogeneousMap:
    """Polynomial z -> sum c_j z^j (highest power first) as a map of P^1."""
    coeffs = list(coeffs)
    d = len(coeffs) - 1
    top = {(d - j, j): complex(c) for j, c in enumerate(coeffs) if c != 0}
    return HomogeneousMap.from_dicts(1, d, [top, {(0, d): 1.0}], name=name)


def rational_p1(num, den, name: str = "") -> HomogeneousMap:
    """Rational map num/den, both coefficient lists of equal length (highest first)."""
    d = len(num) - 1
    a = {(d - j, j): complex(c) for j, c in enumerate(num) if c != 0}
    b = {(d - j, j): complex(c) for j, c in enumerate(den) if c != 0}
    return HomogeneousMap.from_dicts(1, d, [a, b], name=name)


def product_map(p, q, name: str = "") -> HomogeneousMap:
    """[p(z,t) : q(w,t) : t^d] for two degree-d polynomials p, q (highest first)."""
    d = len(p) - 1
    assert len(q) == d + 1
    f0 = {(d - j, 0, j): complex(c) for j, c in enumerate(p) if c != 0}
    f1 = {(0, d - j, j): complex(c) for j, c in enumerate(q) if c != 0}
    return HomogeneousMap.from_dicts(2, d, [f0, f1, {(0, 0, d): 1.0}], name=name)


def power_map_p2(d: int = 2) -> HomogeneousMap:
    return HomogeneousMap.from_dicts(
        2, d, [{(d, 0, 0): 1.0}, {(0, d, 0): 1.0}, {(0, 0, d): 1.0}], name=f"power{d}_p2"
    )


def perturbed_map(eps: float = PERTURBATION_EPS) -> HomogeneousMap:
    return HomogeneousMap.from_dicts(
        2, 2, [{(2, 0, 0): 1.0, (0, 1, 1): eps}, {(0, 2, 0): 1.0}, {(0, 0, 2): 1.0}],
        name="perturbed",
    )


def random_product_map(rng: np.random.Generator, d: int = 2) -> HomogeneousMap:
    p = [1.0] + list(rng.standard_normal(d) + 1j * rng.standard_normal(d))
    q = [1.0] + list(rng.standard_normal(d) + 1j * rng.standard_normal(d))
    return product_map(p, q, name="random_product")


def _builders() -> dict:
    return {
        "z2": lambda: poly_p1([1, 0, 0], "z2"),
        "z2m2": lambda: poly_p1([1, 0, -2], "z2m2"),
        "z2m1": lambda: poly_p1([1, 0, -1], "z2m1"),
        "z3": lambda: poly_p1([1, 0, 0, 0], "z3"),
        "z2p01": lambda: poly_p1([1, 0, 0.1], "z2p01"),
        "rational": lambda: rational_p1([1, 0, -1], [1, 0, 1], "rational"),
        "power2_p2": lambda: power_map_p2(2),
        "product": lambda: product_map([1, 0, -2], [1, 0, -1], "product"),
        "perturbed": lambda: perturbed_map(),
    }


BUNDLED = tuple(_builders())


def build_map(name: str) -> HomogeneousMap:
    return _builders()[name]()


def bundled_path(name: str):
    return resources.files("equidyn").joinpath("maps", f"{name}.json")


def bundled_map(name: str) -> HomogeneousMap:
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled map {name!r}; choose from {', '.join(BUNDLED)}")
    data = json.loads(bundled_path(name).read_text())
    return map_from_json_dict(data, name=name)

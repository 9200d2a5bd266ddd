"""Weighted atomic probability measures on P^k and their point-cloud files."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import proj
from .errors import SchemaError
from .proj import POINT_TOL, ProjPoint

PROVENANCES = ("tree", "backward-sample", "cesaro", "external")


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Atoms as canonical rows ``points`` (N, k+1) with positive ``weights``.

    Build through :meth:`from_rows` so duplicates are merged and the mass is
    renormalized to 1.
    """

    points: np.ndarray
    weights: np.ndarray
    provenance: str = "external"
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_rows(
        cls,
        points,
        weights=None,
        provenance: str = "external",
        merge_tol: float | None = POINT_TOL,
        normalize: bool = True,
        meta: dict | None = None,
    ) -> "EmpiricalMeasure":
        X = proj.normalize_rows(proj.as_rows(points))
        N = X.shape[0]
        w = np.full(N, 1.0 / N) if weights is None else np.asarray(weights, dtype=float).copy()
        if w.shape != (N,):
            raise ValueError("weights must have one entry per atom")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        keep = w > 0
        X, w = X[keep], w[keep]
        if merge_tol is not None and len(X) > 1:
            labels = proj.cluster_labels(X, merge_tol)
            n_lab = labels.max() + 1
            if n_lab < len(X):
                _, first = np.unique(labels, return_index=True)
                w = np.bincount(labels, weights=w, minlength=n_lab)
                X = X[first]
        if normalize and len(w):
            w = w / math.fsum(w)
        return cls(X, w, provenance, dict(meta or {}))

    @classmethod
    def dirac(cls, x: ProjPoint, provenance: str = "external") -> "EmpiricalMeasure":
        return cls(x.array[None].copy(), np.ones(1), provenance, {})

    @property
    def k(self) -> int:
        return self.points.shape[1] - 1

    @property
    def size(self) -> int:
        return len(self.weights)

    def __len__(self) -> int:
        return self.size

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights)

    @property
    def atoms(self) -> list[tuple[ProjPoint, float]]:
        return list(zip(proj.points_from_rows(self.points), map(float, self.weights)))

    def sorted(self) -> "EmpiricalMeasure":
        """Atoms in a canonical order (lexicographic on rounded coordinates)."""
        keys = np.round(np.concatenate([self.points.real, self.points.imag], axis=1), 12)
        order = np.lexsort(keys.T[::-1])
        return EmpiricalMeasure(self.points[order], self.weights[order], self.provenance, dict(self.meta))

    # -- point-cloud CSV --------------------------------------------------

    def to_csv(self, path=None) -> str:
        k = self.k
        header = [c for i in range(k + 1) for c in (f"re{i}", f"im{i}")] + ["weight"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row, wt in zip(self.points, self.weights):
            vals = []
            for z in row:
                vals += [_fmt(z.real), _fmt(z.imag)]
            vals.append(_fmt(wt))
            w.writerow(vals)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source, provenance: str = "external") -> "EmpiricalMeasure":
        text = Path(source).read_text() if not isinstance(source, str) or "\n" not in source else source
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise SchemaError("empty point-cloud file")
        header = rows[0]
        if len(header) < 5 or header[-1] != "weight" or (len(header) - 1) % 2:
            raise SchemaError(f"unexpected header {header}")
        k1 = (len(header) - 1) // 2
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        if data.size == 0:
            raise SchemaError("point cloud has no atoms")
        X = data[:, 0 : 2 * k1 : 2] + 1j * data[:, 1 : 2 * k1 : 2]
        # stored rows are already canonical: keep them bit-exact
        return cls(X, data[:, -1].copy(), provenance, {})


def _fmt(v: float) -> str:
    return format(float(v), ".17g")

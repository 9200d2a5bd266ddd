"""Acceptance suite: one test per criterion, summarized as PASS/FAIL lines.

Run ``pytest tests/test_acceptance.py -v`` and read the "acceptance criteria"
section at the end of the report.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from equidyn import cli, disks, entropy, exceptional, fiber, library, measure, proj
from equidyn.empirical import EmpiricalMeasure
from equidyn.errors import EquidynError, ExceptionalStart, LemmaViolation
from equidyn.exceptional import CandidateSet
from equidyn.proj import normalize

LOG2 = math.log(2)


def z(c):
    return normalize((c, 1))


def detail(record_property, text):
    record_property("detail", text)


@pytest.fixture(scope="module")
def ljubich_report():
    t0 = time.perf_counter()
    rep = disks.ljubich_experiment(
        library.bundled_map("z2m1"), z(0.4 + 0.5j), 0.025, 0.05, range(4, 11), epsilon=0.1,
        rng=np.random.default_rng(0),
    )
    rep["runtime"] = time.perf_counter() - t0
    return rep


@pytest.mark.criterion(1)
def test_criterion_01_equidistribution(record_property):
    t0 = time.perf_counter()
    f = library.bundled_map("z2")
    mu = measure.tree_measure(f, z(2), 12)
    d1 = measure.discrepancy(mu, measure.circle_measure(4096), 0.1)
    try:
        measure.tree_measure(f, z(0), 12)
        exceptional_raised = False
    except ExceptionalStart:
        exceptional_raised = True
    g = library.bundled_map("z2m2")
    d2 = measure.discrepancy(measure.tree_measure(g, z(0.3 + 0.7j), 12), measure.tree_measure(g, z(-1.1 - 0.4j), 12))
    dt = time.perf_counter() - t0
    detail(record_property, f"z2 disc={d1:.4f} (<0.02), x=0 ExceptionalStart={exceptional_raised}, "
                            f"z2-2 disc={d2:.4f} (<0.03), {dt:.1f}s")
    assert d1 < 0.02 and exceptional_raised and d2 < 0.03 and dt < 30


@pytest.mark.criterion(2)
def test_criterion_02_exceptional_set(record_property):
    t0 = time.perf_counter()
    inf = normalize((1, 0))

    def same_points(report, expected):
        pts = report.points()
        return len(pts) == len(expected) and all(any(p.isclose(q) for p in pts) for q in expected)

    ok_z2 = same_points(exceptional.exceptional_p1(library.bundled_map("z2")), [z(0), inf])
    ok_z2m2 = same_points(exceptional.exceptional_p1(library.bundled_map("z2m2")), [inf])
    rep = exceptional.exceptional_candidates_p2(library.bundled_map("power2_p2"), rng=np.random.default_rng(0))
    lines = rep.by_codim(1)
    points = rep.by_codim(2)
    coord_lines = {A.label for A in lines}
    want_lines = {"{X0=0}", "{X1=0}", "{X2=0}"}
    unit = [normalize(v) for v in np.eye(3)]
    coord_points = all(any(CandidateSet.points([u]).distance(A.data).min() < 1e-8 for A in points) for u in unit)
    pert = exceptional.exceptional_candidates_p2(library.bundled_map("perturbed"), rng=np.random.default_rng(0))
    rejected = "{X0=0}" not in {A.label for A in pert.by_codim(1)}
    verdict = dict(pert.tested).get("{X0=0}")
    dt = time.perf_counter() - t0
    detail(record_property, f"z2 {{0,inf}}={ok_z2}, z2-2 {{inf}}={ok_z2m2}, power lines={sorted(coord_lines)}, "
                            f"power points={coord_points}, perturbed {{z=0}} verdict={verdict!r}, {dt:.1f}s")
    assert ok_z2 and ok_z2m2 and want_lines <= coord_lines and coord_points and rejected and dt < 120


def _candidate_sets(f, rng):
    if f.k == 1:
        sets = [CandidateSet.points(x[None]) for x in exceptional.fixed_points_p1(f)]
        sets += [CandidateSet.points(x[None]) for x in exceptional.fixed_points_p1(f.compose(f))]
        sets += [CandidateSet.points(x[None]) for x in fiber.critical_points_rows(f)]
        return sets
    sets = [CandidateSet.coordinate_subspace([i], 2, rng) for i in range(3)]
    sets += [CandidateSet.coordinate_subspace([j for j in range(3) if j != i], 2, rng) for i in range(3)]
    forms = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    sets += [CandidateSet.hyperplanes(a[None], rng) for a in forms]
    sets += [CandidateSet.points(x[None]) for x in fiber.critical_points_rows(f, rng, lines=2)[:4]]
    return sets


@pytest.mark.criterion(3)
def test_criterion_03_degree_lemma(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    tested = violations = other = 0
    worst = 0.0
    for name in library.BUNDLED:
        f = library.bundled_map(name)
        for A in _candidate_sets(f, rng):
            tested += 1
            try:
                s = exceptional.degree_along_set(f, A, rng)
                worst = max(worst, s / f.d**A.codim)
            except LemmaViolation:
                violations += 1
            except EquidynError:
                other += 1
    dt = time.perf_counter() - t0
    detail(record_property, f"{tested} sets over {len(library.BUNDLED)} maps, LemmaViolation={violations}, "
                            f"other degree errors={other}, max s/d^p={worst:.2f}, {dt:.1f}s")
    assert violations == 0 and worst <= 1


@pytest.mark.criterion(4)
def test_criterion_04_lyapunov(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    out = {}
    for name in ("z2", "z2m1", "z2p01"):
        f = library.bundled_map(name)
        mu = measure.backward_measure(f, 500, 60, rng)
        out[name] = measure.lyapunov_min(f, mu, 30, 500, rng).min_exponent
    dt = time.perf_counter() - t0
    bound = LOG2 / 2 - 0.05
    ok = abs(out["z2"] / LOG2 - 1) <= 0.05 and out["z2m1"] >= bound and out["z2p01"] >= bound
    detail(record_property, f"z2 {out['z2']:.4f} (log2={LOG2:.4f}), z2-1 {out['z2m1']:.4f}, "
                            f"z2+0.1 {out['z2p01']:.4f} (>= {bound:.4f}), {dt:.1f}s")
    assert ok and dt < 60


@pytest.mark.criterion(5)
def test_criterion_05_mixing(record_property):
    t0 = time.perf_counter()
    f = library.bundled_map("z2")
    mu = measure.circle_measure(2**14)
    phi = measure.re_moment()
    c = measure.mixing_correlation(f, mu, phi, phi, 10)
    dt = time.perf_counter() - t0
    detail(record_property, f"correlation at n=10: {c:.2e} (<0.05), {dt:.1f}s")
    assert c < 0.05 and dt < 10


@pytest.mark.criterion(6)
def test_criterion_06_branch_contraction(record_property, ljubich_report):
    rep = ljubich_report
    rows = rep["table"]
    counts = all(r["succeeded"] >= 0.9 * 2 ** r["n"] for r in rows)
    slope, target = rep["diameter_slope"], rep["diameter_slope_target"]
    rel = abs(slope / target - 1)
    succ = ",".join(f"{r['succeeded']}/{r['attempted']}" for r in rows)
    detail(record_property, f"l={rep['l']}, branches {succ}, counts ok={counts}, median log-diameter slope "
                            f"{slope:.4f} vs -(log2)/2={target:.4f} (rel err {rel:.0%}, tol 20%), "
                            f"{rep['runtime']:.1f}s")
    assert counts and rel <= 0.2 and rep["runtime"] < 120


@pytest.mark.criterion(7)
def test_criterion_07_graph_volume(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    a = entropy.graph_volume(library.bundled_map("z2"), 5, 100_000, rng)
    b = entropy.graph_volume(library.bundled_map("power2_p2"), 3, 100_000, rng)
    dt = time.perf_counter() - t0
    ok_a = abs(a.value - 31) <= 3 * a.std_error and abs(a.value / 31 - 1) <= 0.02
    ok_b = abs(b.value - 49) <= 3 * b.std_error and abs(b.value / 49 - 1) <= 0.05
    detail(record_property, f"k=1 n=5: {a.value:.3f}+-{a.std_error:.3f} (31), k=2 n=3: "
                            f"{b.value:.3f}+-{b.std_error:.3f} (49), {dt:.1f}s")
    assert ok_a and ok_b and dt < 120


@pytest.mark.criterion(8)
def test_criterion_08_restricted_volume(record_property):
    t0 = time.perf_counter()
    f = library.bundled_map("power2_p2")
    S = entropy.line_samples([1, 0, 0], 20_000, np.random.default_rng(0))
    ns = [1, 2, 3, 4]
    vals = [entropy.restricted_graph_volume(f, n, S).value for n in ns]
    g = entropy.growth_exponents(ns, vals)
    dt = time.perf_counter() - t0
    ok = abs(g["lov"] / LOG2 - 1) <= 0.1 and g["lov"] < 2 * LOG2
    detail(record_property, f"volumes {[round(v, 3) for v in vals]}, lov {g['lov']:.4f} vs log2 "
                            f"(LS slope {g['slope']:.4f}), < 2log2={2 * LOG2:.4f}, {dt:.1f}s")
    assert ok and dt < 60


@pytest.mark.criterion(9)
def test_criterion_09_entropy(record_property):
    t0 = time.perf_counter()
    f = library.bundled_map("z2")
    pool = measure.circle_measure(2**15).points
    h = entropy.entropy_estimate(f, [4, 6, 8, 10], [0.2], pool)
    bk = entropy.brin_katok(f, measure.circle_measure(2**16), None, 0.1, range(6, 11), np.random.default_rng(0))
    atom = entropy.brin_katok(f, EmpiricalMeasure.dirac(z(1)), z(1), 0.1, range(1, 11))
    dt = time.perf_counter() - t0
    ok_h = abs(h / LOG2 - 1) <= 0.15
    ok_bk = 0.85 <= bk.plateau / LOG2 <= 1.15
    ok_atom = all(v == 0 for v in atom.values) and atom.plateau == 0
    detail(record_property, f"h_top {h:.4f} ({h / LOG2:.3f} log2), Brin-Katok plateau {bk.plateau / LOG2:.3f} log2, "
                            f"atomic {max(atom.values)}, {dt:.1f}s")
    assert ok_h and ok_bk and ok_atom and dt < 180


@pytest.mark.criterion(10)
def test_criterion_10_constant_jacobian(record_property):
    t0 = time.perf_counter()
    f = library.bundled_map("z2")
    rng = np.random.default_rng(0)
    circ = entropy.jacobian_constant_check(f, measure.circle_measure(2**14), 50, rng)
    atom = entropy.jacobian_constant_check(f, EmpiricalMeasure.dirac(z(1)), 50, rng)
    dt = time.perf_counter() - t0
    detail(record_property, f"circle max deviation {circ.max_deviation:.4f} over {len(circ.deviations)} patches, "
                            f"atom deviation {atom.max_deviation:.3f} flagged={not atom.constant}, {dt:.1f}s")
    assert circ.max_deviation < 0.15 and len(circ.deviations) == 50 and not atom.constant and dt < 30


@pytest.mark.criterion(11)
def test_criterion_11_counting(record_property):
    t0 = time.perf_counter()
    rows = entropy.sigma_growth(4, [20, 40, 60], 0.3)
    rates = [r["rate"] for r in rows]
    decreasing = all(b < a for a, b in zip(rates, rates[1:]))
    dt = time.perf_counter() - t0
    detail(record_property, f"log4(count)/n at n=20,40,60: {[round(r, 4) for r in rates]}, "
                            f"decreasing={decreasing}, < 1 at 60={rates[-1] < 1}, {dt:.3f}s")
    assert decreasing and rates[-1] < 1 and dt < 1


@pytest.mark.criterion(12)
def test_criterion_12_appendix_lemma(record_property, ljubich_report):
    t0 = time.perf_counter()
    branch = np.concatenate([np.asarray(r["ratios"], dtype=float) for r in ljubich_report["table"]])
    fam = disks.random_family_ratios(200, np.random.default_rng(0))
    small = np.concatenate([fam[:100], branch])
    full = np.concatenate([fam, branch])
    c_fit = float(small.max())
    change = abs(full.max() / c_fit - 1)
    finite = bool(np.all(np.isfinite(full)))
    within = bool(np.all(full <= c_fit * 1.1))
    dt = time.perf_counter() - t0
    detail(record_property, f"fitted c={c_fit:.4f} from {len(small)} disks ({len(branch)} branch disks), "
                            f"doubled max {full.max():.4f} (change {change:.1%}, tol 10%), "
                            f"linear baseline {disks.LINEAR_BASELINE:.4f}, {dt:.1f}s")
    assert finite and change <= 0.1 and within and dt < 120


@pytest.mark.criterion(13)
def test_criterion_13_solver_soundness(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst, sums_ok = 0.0, True
    for name in library.BUNDLED:
        f = library.bundled_map(name)
        Y = proj.sample_fs_rows(rng, 100, f.k)
        reps, mult, resid = fiber.fiber_rows(f, Y, rng)
        sums_ok &= bool(np.all(mult.sum(axis=1) == f.d**f.k))
        worst = max(worst, float(resid[mult > 0].max()))
    oracle_err = 0.0
    for i in range(20):
        g = np.random.default_rng(100 + i)
        if i == 0:
            p, q = [1, 0, -2], [1, 0, -1]
            f = library.bundled_map("product")
        else:
            p = [1.0] + list(g.standard_normal(2) + 1j * g.standard_normal(2))
            q = [1.0] + list(g.standard_normal(2) + 1j * g.standard_normal(2))
            f = library.product_map(p, q)
        w = g.standard_normal(2) + 1j * g.standard_normal(2)
        y = normalize((w[0], w[1], 1))
        got = fiber.fiber_homotopy(f, y, g)
        a = fiber.fiber_p1(library.poly_p1(p), normalize((w[0], 1)))
        b = fiber.fiber_p1(library.poly_p1(q), normalize((w[1], 1)))
        for pa, ma in a.points:
            for pb, mb in b.points:
                u = pa.array[0] / pa.array[1]
                v = pb.array[0] / pb.array[1]
                want = normalize((u, v, 1))
                dist = min(proj.fs_distance(want, x) if m == ma * mb else 1.0 for x, m in got.points)
                oracle_err = max(oracle_err, dist)
    dt = time.perf_counter() - t0
    detail(record_property, f"max residual {worst:.1e} (<1e-8), multiplicity sums ok={sums_ok}, "
                            f"product oracle max distance {oracle_err:.1e} (<1e-8), {dt:.1f}s")
    assert worst < 1e-8 and sums_ok and oracle_err < 1e-8 and dt < 120


@pytest.mark.criterion(14)
def test_criterion_14_determinism(record_property, tmp_path, capsys):
    runs = [
        ["sample-mu", "--map", "z2m2", "--method", "backward", "--samples", "3000", "--seed", "7"],
        ["lov", "--map", "power2_p2", "--n", "2", "--samples", "3000", "--seed", "7"],
        ["lyapunov", "--map", "z2m1", "--n", "10", "--samples", "600", "--depth", "20", "--seed", "7"],
        ["fiber", "--map", "perturbed", "--y", "0.3:-1.2:1", "--seed", "7"],
    ]
    identical = 0
    for i, argv in enumerate(runs):
        outs = []
        for j, threads in enumerate((1, 2, 4, 1)):
            d = tmp_path / f"{i}-{j}"
            assert cli.run(argv + ["--out", str(d), "--threads", str(threads)]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
        identical += all(o == outs[0] for o in outs)
    capsys.readouterr()
    api = [entropy.graph_volume(library.bundled_map("perturbed"), 2, 2000, 5, threads=t).value for t in (1, 3)]
    api_same = api[0] == api[1]
    detail(record_property, f"{identical}/{len(runs)} CLI commands byte-identical over threads 1,2,4 and a "
                            f"repeat; API graph_volume identical across threads={api_same}")
    assert identical == len(runs) and api_same

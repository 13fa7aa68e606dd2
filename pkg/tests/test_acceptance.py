"""Acceptance suite: one PASS/FAIL line per criterion (1-10).

Each test records its outcome and runtime through the ``criterion`` context
manager; the lines are printed in the terminal summary (see conftest.py) and
also when the module is run as a script.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

import oracles
from fdl import io
from fdl.cli import main
from fdl.hls import (
    HlsExponents,
    StepFunction,
    hls_sum,
    iota_closed_form,
    iota_matrix,
    iota_quadrature,
    scaling_check,
    scaling_slope,
    worst_case_search,
)
from fdl.nls import SolverConfig, evolve, picard_iterate
from fdl.propagator import (
    AdmissiblePair,
    SpatialGrid,
    WaveField,
    apply_propagator,
    compose_check,
    dispersive_ratio,
    gaussian,
    strichartz_norm,
)
from fdl.selfaffine import (
    DEFAULT_PATTERN,
    assumption_constant,
    build,
    family_of_pieces,
    identity_pattern,
    refine,
    sup_distance,
    validate_pattern,
)

RESULTS: dict[int, str] = {}

PATTERNS = {
    "default": DEFAULT_PATTERN,
    "a3b15": validate_pattern(3, 15, "+-+-+-+-+-+-+++", "-+-+-+-+-+-+---"),
    "a5b7": validate_pattern(5, 7, "++++-++", "----+--"),
    "a2b6": validate_pattern(2, 6, "+-+-++", "-+-+--"),
    "identity4": identity_pattern(4),
}
MAX_POINTS = 4**8
LEVEL2 = [0, 1, 2, 1, 2, 3, 4, 3, 4, 3, 2, 3, 2, 3, 4, 3, 4]
KERNEL = (4 * math.pi) ** -0.5


@contextmanager
def criterion(number: int, title: str, budget: float):
    """Record PASS/FAIL with runtime; a run over ``budget`` seconds fails."""
    t0 = time.perf_counter()
    detail = {}
    try:
        yield detail
    except BaseException as exc:
        elapsed = time.perf_counter() - t0
        RESULTS[number] = f"criterion {number:2d} FAIL  {title} ({elapsed:.1f}s): {exc}".splitlines()[0]
        raise
    elapsed = time.perf_counter() - t0
    extra = ", ".join(f"{k}={v}" for k, v in detail.items())
    status = "PASS" if elapsed <= budget else "FAIL"
    RESULTS[number] = f"criterion {number:2d} {status}  {title} ({elapsed:.1f}s / {budget:.0f}s) {extra}".rstrip()
    assert elapsed <= budget, f"runtime {elapsed:.1f}s over {budget}s"


def levels_for(p):
    n = 1
    while n < 8 and p.b ** (n + 1) <= MAX_POINTS:
        n += 1
    return n


def test_criterion_01_exact_construction():
    with criterion(1, "exact construction", 1.0) as info:
        assert build(DEFAULT_PATTERN, 2).values.tolist() == LEVEL2
        for name, p in PATTERNS.items():
            top = levels_for(p)
            templates = {tuple(p.m_partial - p.m_partial[0]), tuple(p.d_partial - p.d_partial[0])}
            prev = None
            for n in range(1, top + 1):
                c = build(p, n) if prev is None else refine(prev)
                v = c.values
                assert v[0] == 0 and v[-1] == p.a**n, name
                assert np.all(np.abs(np.diff(v)) == 1), name
                if prev is not None:
                    assert np.array_equal(v[:: p.b], p.a * prev.values), name
                    assert sup_distance(prev, c) <= 1 / p.a ** (n - 1), name
                prev = c
            if top > 1:
                fam, _ = family_of_pieces(prev, 1)
                assert {tuple(r) for r in fam} <= templates, name
            info[name] = top


def test_criterion_02_assumption_constant():
    with criterion(2, "assumption constant C = 1", 1.0):
        for name, p in PATTERNS.items():
            assert assumption_constant(build(p, levels_for(p))).c_constant == 1, name


def test_criterion_03_cell_integrals():
    with criterion(3, "cell integrals vs quadrature and case formulas", 120.0) as info:
        worst_q = worst_c = 0.0
        cells = 0
        for level in range(1, 5):
            c = build(DEFAULT_PATTERN, level)
            v = c.values.astype(np.int64)
            inc = np.diff(v)
            # the quadrature depends on the cell only through (X_k - X_l, B, C)
            A = v[:-1, None] - v[None, :-1]
            key = np.stack(np.broadcast_arrays(A, inc[:, None], inc[None, :]), axis=-1).reshape(-1, 3)
            uniq, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
            N = c.n_intervals
            cases = [[oracles.cell_case(c, k, l) for l in range(N)] for k in range(N)]
            for alpha in (0.3, 0.5, 0.9):
                M = iota_matrix(c, alpha)
                assert M[0, 0] == pytest.approx(iota_closed_form(c, 0, 0, alpha), rel=1e-15)
                Q = np.array([iota_quadrature(c, int(i) // N, int(i) % N, alpha) for i in first])
                err = np.abs(Q[inverse.ravel()].reshape(N, N) / M - 1)
                worst_q = max(worst_q, float(err.max()))
                for k in range(N):
                    for l in range(N):
                        if cases[k][l] is not None:
                            ref = oracles.iota_case(c, k, l, alpha)
                            worst_c = max(worst_c, abs(M[k, l] - ref) / ref)
                cells += N * N
        info.update(cells=cells, quad_rel=f"{worst_q:.1e}", case_rel=f"{worst_c:.1e}")
        assert worst_q <= 1e-6
        assert worst_c <= 1e-12


def test_criterion_04_anchors():
    with criterion(4, "closed-form anchors", 60.0):
        c = build(DEFAULT_PATTERN, 1)
        assert abs(iota_closed_form(c, 0, 0, 0.5) - math.sqrt(2) / 6) <= 1e-12
        for level in range(1, 8):
            ci = build(identity_pattern(4), level)
            one = StepFunction(level, np.ones(4**level))
            assert abs(hls_sum(one, one, ci, 0.5) - 8 / 3) <= 1e-10


def test_criterion_05_scaling_law():
    with criterion(5, "scaling law slope", 300.0) as info:
        c = build(DEFAULT_PATTERN, 7)
        for alpha in (0.3, 0.5):
            slope = scaling_slope(scaling_check(c, alpha, range(3, 8)))
            info[f"slope{alpha}"] = f"{slope:+.4f}"
            assert abs(slope) <= 0.1


def test_criterion_06_hls_boundedness():
    with criterion(6, "modified HLS boundedness", 600.0) as info:
        exps = HlsExponents.matched(0.5, 0.5)
        levels = range(3, 8)
        rep = worst_case_search(build(DEFAULT_PATTERN, 7), exps, 64, 42, levels)
        r = rep.ratios()
        ident = worst_case_search(build(identity_pattern(4), 7), exps, 64, 42, levels, strict=False).ratios()
        info.update(default=f"{r.max() / r.min():.3f}", identity=f"{ident[-1] / ident[0]:.2f}")
        assert r.max() / r.min() <= 1.5
        assert np.all(np.diff(ident) > 0)
        assert ident[-1] / ident[0] >= 2.0
        # the worst cell of each level is confirmed by quadrature
        for lv in rep.levels[:2]:
            c = build(DEFAULT_PATTERN, lv.level)
            M = iota_matrix(c, 0.5)
            k, l = np.unravel_index(np.argmax(M), M.shape)
            assert iota_quadrature(c, int(k), int(l), 0.5) == pytest.approx(M[k, l], rel=1e-6)


def test_criterion_07_propagator_algebra():
    with criterion(7, "propagator algebra", 60.0) as info:
        g = SpatialGrid(1, 1024, 32.0)
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(100):
            f = WaveField(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
            t1, t2 = rng.uniform(-4, 4, 2)
            n0 = f.l2()
            unit = abs(apply_propagator(f, t1).l2() - n0) / n0
            comp = compose_check(f, t1, t2) / n0
            inv = WaveField(g, apply_propagator(apply_propagator(f, t1), -t1).values - f.values).l2() / n0
            worst = max(worst, unit, comp, inv)
        info["worst"] = f"{worst:.1e}"
        assert worst <= 1e-12
        big = SpatialGrid(1, 4096, 64.0)
        assert abs(apply_propagator(gaussian(big, 1.0), 0.5).peak() - 2**-0.25) <= 1e-8
        for w in (0.125, 0.25, 0.5, 1.0, 2.0):
            for tau in (0.01, 0.1, 1.0, -0.5):
                assert dispersive_ratio(gaussian(big, w), tau) <= KERNEL * 1.001


def test_criterion_08_strichartz_uniformity():
    with criterion(8, "Strichartz uniformity", 600.0) as info:
        grid = SpatialGrid(1, 8192, 64.0)
        curve = build(DEFAULT_PATTERN, 10)
        widths = [2.0**-k for k in range(6)]
        pair = AdmissiblePair.from_p(4.0, 0.5)
        R = np.array([[strichartz_norm(gaussian(grid, w), pair, curve, n)[1] for w in widths] for n in (5, 6, 7)])
        spread = R.max(axis=1) / R.min(axis=1)
        drift = np.abs(np.diff(R, axis=0)) / R[:-1]
        info.update(spread=f"{spread.max():.3f}", drift=f"{drift.max():.3f}")
        assert np.all(spread <= 3.0)
        assert np.all(drift <= 0.10)
        # pair admissible for H' = 1 on the same curve: ratio falls as the width shrinks
        wrong = AdmissiblePair.from_p(4.0, 1.0)
        W = [strichartz_norm(gaussian(grid, w), wrong, curve, 10, strict=False)[1] for w in widths]
        info["mismatched"] = f"{W[0]:.3f}->{W[-1]:.3f}"
        assert all(x > y for x, y in zip(W, W[1:]))


def _standard(grid, curve, **kw):
    base = dict(sigma=3.0, lam=-1.0, T=1.0, time_level=5, grid=grid, curve=curve, method="strang")
    base.update(kw)
    return SolverConfig(**base)


def test_criterion_09_nls_solver():
    with criterion(9, "NLS solver", 900.0) as info:
        curve = build(DEFAULT_PATTERN, 8)
        big = SpatialGrid(1, 4096, 64.0)
        _, trace = evolve(_standard(big, curve, time_level=8))
        assert len(trace.step) == 4**8
        assert trace.mass_drift <= 1e-10
        cfg = _standard(big, curve, time_level=8, lam=0.0)
        final, _ = evolve(cfg)
        ref = apply_propagator(cfg.initial_field(), (curve.values[-1] - curve.values[0]) / curve.scale)
        lin = WaveField(big, final.values - ref.values).l2() / ref.l2()
        assert lin <= 1e-12
        grid = SpatialGrid(1, 1024, 32.0)
        pic = picard_iterate(_standard(grid, curve, T=0.25, method="picard"), 10)
        contracting = sum(r <= 0.5 for r in pic.ratios)
        assert contracting >= 5
        gaps = []
        for n in (5, 6, 7):
            p = picard_iterate(_standard(grid, curve, T=0.25, time_level=n, method="picard"), 30)
            s, _ = evolve(_standard(grid, curve, T=0.25, time_level=n))
            gaps.append(WaveField(grid, p.final(grid).values - s.values).l2())
        info.update(
            mass=f"{trace.mass_drift:.1e}",
            linear=f"{lin:.1e}",
            contracting=contracting,
            gaps="/".join(f"{x:.1e}" for x in gaps),
        )
        assert gaps[0] > gaps[1] > gaps[2]


def test_criterion_10_criticality_scan(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with criterion(10, "criticality scan determinism", 900.0) as info:
        args = ["scan", "--sigmas", "1,2,3,4", "--control", "identity"]
        assert main(args + ["--out", "a"]) == 0
        assert main(args + ["--out", "b"]) == 0
        rows = io.read_csv(tmp_path / "a" / "scan.csv")
        assert len(rows) == 8
        assert (tmp_path / "a" / "scan.csv").read_bytes() == (tmp_path / "b" / "scan.csv").read_bytes()
        man = io.load_manifest(tmp_path / "a" / "manifest.json")
        assert man["exit_status"] == 0
        info["rows"] = len(rows)


if __name__ == "__main__":
    import sys

    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(code)

"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances are the stated ones.  Criteria whose targets the implementation
cannot reach fail here on purpose; see the project notes for the analysis.
Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline;
they are also collected in the terminal summary.
"""
from __future__ import annotations

import math
import time

import numpy as np
import pytest

from lifespan_lab import harness
from lifespan_lab.coefficients import make_constant, make_power_law
from lifespan_lab.exponents import gamma_hwy, lifespan_exponent, p_hwy, p_strauss
from lifespan_lab.inequality import audit_identity, audit_prop_tfm1, identity_refinement_rate
from lifespan_lab.solver import (
    SolverConfig,
    default_data,
    direct_reference_run,
    run,
    transformed_solution_at,
)
from lifespan_lab.testfn import CutoffPsi, verify_cutoff_bounds
from lifespan_lab.wkb import build_m_star, make_grid

from conftest import FOUR_MODELS

pytestmark = pytest.mark.acceptance

R0 = 1.0


def _models():
    return {k: make_power_law(*v) for k, v in FOUR_MODELS.items()}


# ---------------------------------------------------------------- shared runs

@pytest.fixture(scope="module")
def linear_runs():
    """N=3 linear runs of the four models at h = 1/128 and 1/256, s_max = 10."""
    t0 = time.perf_counter()
    out = {}
    for name, m in _models().items():
        for h in (1 / 128, 1 / 256):
            cfg = SolverConfig(N=3, p=2.0, h=h, s_max=10.0, record_every=int(1 / (8 * h)) * 4)
            out[name, h] = run(m, cfg, default_data(1.0), nonlinearity_on=False)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def transform_pairs():
    t0 = time.perf_counter()
    out = {}
    h = 1 / 256
    times = (0.5, 1.0, 1.5, 2.0)
    for alpha, mu in ((0.0, 0.0), (1.0, 0.0), (0.5, 1.0)):
        m = make_power_law(alpha, mu, 2.0)
        cfg = SolverConfig(N=3, p=2.0, h=h, s_max=1.0, r_max=R0 + float(m.A(2.0)) + 2.0)
        direct = direct_reference_run(m, cfg, default_data(1.0), 2.0, record_times=np.array(times))
        pairs = []
        for snap in direct["snapshots"]:
            tr = transformed_solution_at(m, cfg, default_data(1.0), snap["t"])
            pairs.append((snap["t"], tr, snap))
        out[alpha, mu] = pairs
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def tfm1_run():
    cfg = SolverConfig(N=3, p=2.0, h=1 / 64, s_max=16.5, record_every=4, track_qstar=False)
    return run(make_constant(), cfg, default_data(0.3))


@pytest.fixture(scope="module")
def identity_runs():
    m = make_constant()
    out = {}
    for h in (1 / 64, 1 / 128, 1 / 256):
        cfg = SolverConfig(N=3, p=2.0, h=h, s_max=4.0, record_every=1, keep_frames=True)
        out[h] = run(m, cfg, default_data(0.3))
    return out


@pytest.fixture(scope="module")
def supercritical_run():
    cfg = SolverConfig(N=3, p=3.0, h=1 / 32, s_max=50.0, record_every=16, track_qstar=False)
    return run(make_constant(), cfg, default_data(0.01))


# ---------------------------------------------------------------- criteria

def test_criterion_1_exponent_algebra(acceptance_report):
    t0 = time.perf_counter()
    errs = []
    for N in range(2, 9):
        # independent oracle: (N+1 + sqrt(N^2 + 10N - 7)) / (2(N-1))
        ref = (N + 1 + math.sqrt(N * N + 10 * N - 7)) / (2 * (N - 1))
        errs.append(abs(p_hwy(N, 0.0) - ref))
        errs.append(abs(p_strauss(N) - ref))
    g = abs(gamma_hwy(3, 0.0, 1 + math.sqrt(2)))
    le = lifespan_exponent(3, 0.0, 2.0)
    ph = abs(p_hwy(3, 0.5) - (9 + math.sqrt(249)) / 14)
    dt = time.perf_counter() - t0
    ok = max(errs) <= 1e-12 and g <= 1e-10 and le == pytest.approx(2.0, abs=1e-14) and ph <= 1e-12 and dt < 1
    acceptance_report(1, "exponent algebra", ok,
                      f"max|p_hwy-p_S|={max(errs):.1e} gamma={g:.1e} lifespan_exp={le!r} "
                      f"|p_hwy(3,.5)-oracle|={ph:.1e} runtime={dt:.2f}s")
    assert ok


def test_criterion_2_wkb(acceptance_report):
    t0 = time.perf_counter()
    grid = make_grid(30.0, 12001)
    tail = grid >= 22.5
    parts, ok = [], True
    for name, m in _models().items():
        prof = build_m_star(m, 60.0, grid)
        lo, hi = float(prof.ratio[tail].min()), float(prof.ratio[tail].max())
        good = (prof.residual_sup <= 1e-5 and np.all(prof.m > 0) and np.all(prof.m_prime < 0)
                and lo >= 0.98 and hi <= 1.02)
        ok &= bool(good)
        parts.append(f"{name}: res={prof.residual_sup:.1e} band=[{lo:.4f},{hi:.4f}]")
    exact = build_m_star(make_constant(), 60.0, grid)
    rel = float(np.max(np.abs(exact.m / np.exp(-grid) - 1.0)))
    dt = time.perf_counter() - t0
    ok = ok and rel <= 1e-8 and dt < 10
    acceptance_report(2, "WKB correctness", ok,
                      "; ".join(parts) + f"; exact e^-t rel={rel:.1e}; runtime={dt:.1f}s")
    assert ok


def _drift(out):
    H = out.history
    return max(float(np.max(np.abs(H[k] / H[k][0] - 1.0))) for k in ("Q1", "Qstar"))


def test_criterion_3_conservation(acceptance_report, linear_runs):
    runs, dt = linear_runs
    parts, ok = [], True
    for name in FOUR_MODELS:
        d1, d2 = _drift(runs[name, 1 / 128]), _drift(runs[name, 1 / 256])
        good = runs[name, 1 / 128].verdict == "survived" and d1 <= 1e-3 and d1 / d2 >= 3.0
        ok &= good
        parts.append(f"{name}: drift={d1:.1e} ratio={d1 / d2:.2f}")
    ok = ok and dt < 120
    acceptance_report(3, "conservation", ok, "; ".join(parts) + f"; runtime={dt:.1f}s")
    assert ok


def test_criterion_4_transform_equivalence(acceptance_report, transform_pairs):
    pairs, dt = transform_pairs
    parts, ok = [], True
    for key, seq in pairs.items():
        err = max(float(np.max(np.abs(tr["u"] - snap["u"]))) for _, tr, snap in seq)
        ok &= err <= 1e-3 and len(seq) == 4
        parts.append(f"(alpha,mu)={key}: sup err={err:.1e}")
    ok = ok and dt < 120
    acceptance_report(4, "Liouville-transform equivalence", ok, "; ".join(parts) + f"; runtime={dt:.1f}s")
    assert ok


def test_criterion_6_cutoff_lemma(acceptance_report):
    Rs = (10.0, 100.0, 1000.0)
    c0 = [verify_cutoff_bounds(CutoffPsi(R, 2.0, make_constant())).C for R in Rs]
    m = make_power_law(0.0, 1.0, 2.0)
    c1 = [verify_cutoff_bounds(CutoffPsi(R, 2.0, m)).C for R in Rs]
    bound = math.exp(float(m.B_infinity))
    spread0 = max(c0) / min(c0) - 1.0
    spread1 = max(c1) / min(c1)
    vs_undamped = max(max(c / c0[0], c0[0] / c) for c in c1)
    ok = spread0 <= 0.01 and spread1 <= bound and vs_undamped <= bound
    acceptance_report(6, "cutoff lemma", ok,
                      f"b=0 C={c0[0]:.4g} spread={spread0:.1e}; damped C={[round(c, 4) for c in c1]} "
                      f"max/min={spread1:.3f} vs-undamped={vs_undamped:.3f} bound e^B(inf)={bound:.3f}")
    assert ok


def test_criterion_7_inequality_audit(acceptance_report, tfm1_run, identity_runs):
    t0 = time.perf_counter()
    m = make_constant()
    aud = audit_prop_tfm1(tfm1_run, m, [2, 4, 8, 16], default_data(0.3), 3, 2.0, stability=0.2)
    hs = sorted(identity_runs, reverse=True)
    res = [audit_identity(identity_runs[h], m, CutoffPsi(4.0, 2.0, m), 3).max_residual for h in hs]
    rate = identity_refinement_rate(res, hs)
    dt = time.perf_counter() - t0
    ok_id = res[-1] <= 1e-3 and rate >= 1.8
    ok = aud.passed and ok_id and dt < 300
    ratios = ", ".join(f"{x:.4g}" for x in aud.ratio)
    acceptance_report(7, "test-function inequality audit", ok,
                      f"prop ratios=[{ratios}] spread={aud.spread:.2f} (needs <=0.20); "
                      f"identity residual h=1/256: {res[-1]:.1e} rate={rate:.2f}")
    assert ok


def _sweep(tmp, model_cfg, N, p, eps_max, eps_min, n, h, s_max, grid_check=False):
    cfg = {"model": model_cfg,
           "solver": {"N": N, "p": p, "h": h, "s_max": s_max, "record_every": 1000},
           "data": {}, "sweep": {"eps_max": eps_max, "eps_min": eps_min, "n": n},
           "audits": {"grid_check": grid_check}}
    return harness.lifespan_sweep(harness.SweepSpec.from_config(cfg), tmp)


def test_criterion_8_lifespan_scaling(acceptance_report, tmp_path):
    t0 = time.perf_counter()
    recs = _sweep(tmp_path / "n1", {"family": "constant"}, 1, 2.0, 0.1, 0.01, 6, 1 / 64, 400.0,
                  grid_check=True)
    fit = harness.fit_lifespan_exponent(recs, 1, 0.0, 2.0)
    grid_dev = max(abs(r.T_blowup_half_h - r.T_blowup) / r.T_blowup for r in recs)
    # report-only diagnostics
    d3 = _sweep(tmp_path / "n3", {"family": "constant"}, 3, 2.0, 4.0, 1.0, 4, 1 / 16, 2000.0)
    f3 = harness.fit_lifespan_exponent(d3, 3, 0.0, 2.0)
    dt_ = _sweep(tmp_path / "tri", {"family": "power", "alpha": 0.5}, 3, 1.5, 4.0, 1.0, 4, 1 / 16, 2000.0)
    ft = harness.fit_lifespan_exponent(dt_, 3, 0.5, 1.5)
    dt = time.perf_counter() - t0
    dev = abs(fit.slope + 0.5) / 0.5
    ok = dev <= 0.25 and all(r.verdict == "blowup" for r in recs) and dt < 1800
    acceptance_report(8, "lifespan scaling", ok,
                      f"N=1 slope={fit.slope:.4f}+-{fit.stderr:.1e} dev from -1/2={dev:.1%} "
                      f"grid-check max rel change={grid_dev:.1%}; diagnostic N=3 slope={f3.slope:.3f} "
                      f"vs {f3.slope_corollary:.3f}; diagnostic Tricomi slope={ft.slope:.3f} "
                      f"vs {ft.slope_corollary:.3f}; runtime={dt:.0f}s")
    assert ok


def test_criterion_9_supercritical_sanity(acceptance_report, supercritical_run):
    out = supercritical_run
    ok = out.verdict == "survived" and out.T_blowup is None
    acceptance_report(9, "literature-consistency check", ok,
                      f"N=3 p=3 eps=0.01 verdict={out.verdict} reached s={out.final_state.s:.2f}")
    assert ok


def test_criterion_5_finite_speed(acceptance_report, linear_runs, transform_pairs, tfm1_run,
                                  identity_runs, supercritical_run):
    """Runs last so that every shared acceptance run is available."""
    outcomes = [(f"linear {k[0]} h={k[1]:.4g}", v) for k, v in linear_runs[0].items()]
    outcomes += [(f"transformed {k} t={t}", tr["outcome"])
                 for k, seq in transform_pairs[0].items() for t, tr, _ in seq]
    outcomes += [("prop audit", tfm1_run), ("supercritical", supercritical_run)]
    outcomes += [(f"identity h={h:.4g}", o) for h, o in identity_runs.items()]
    worst_name, worst = max(((n, o.max_support_excess(R0, o.final_state.r[1])) for n, o in outcomes),
                            key=lambda x: x[1])
    ok = worst <= 3.0
    acceptance_report(5, "finite speed", ok,
                      f"{len(outcomes)} runs; max(support - r0 - s)/h = {worst:.1f} ({worst_name}); needs <= 3")
    assert ok

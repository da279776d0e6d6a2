"""Acceptance checks; each test prints one PASS/FAIL line at full tolerance.

The Monte Carlo sweeps take minutes and are marked ``slow``.
"""
import time

import numpy as np
import pytest

from specinit.asymptotics import (
    critical_ratios,
    linear_rho_limit,
    one_bit_predict,
    parametric_rho,
    predict,
    q_inverse,
)
from specinit.cli import alpha_c_vs_t, oracle_instance
from specinit.harness import ExperimentConfig, sweep, z_score
from specinit.model import (
    make_logistic,
    make_pr_subset,
    make_pr_trimming,
    make_quantizer,
    sample_zy,
)
from specinit.quadrature import base_moments, default_rule, expect, lambda_moments_grid, DEFAULT_ORDER, gauss_hermite
from specinit.spectral import arrowhead_solve, arrowhead_view, spiked_diag_spectrum, spiked_diag_top

QUANT = dict(theta=0.48, i1=(4.7947, 4.9847), i2=(0.8995, 0.8998))
LOGISTIC = {"type": "logistic", "kappa": 3.0, "beta": 6.0}
N, TRIALS = 2048, 16


def emit(request, k, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    with request.config.pluginmanager.get_plugin("capturemanager").global_and_fixture_disabled():
        print("\n" + line)
    return ok


def grid_for(model):
    return tuple(float(a) for a in np.geomspace(0.3, 4.0, 12) * critical_ratios(model).alpha_c_max)


def run_sweep(model_cfg, alphas, ensemble="gaussian"):
    cfg = ExperimentConfig(model=model_cfg, n=N, alpha_grid=alphas, trials=TRIALS, ensemble=ensemble, seed=2024)
    return sweep(cfg)


def band(stats, preds=None):
    """Per-quantity pass rates at 3 standard errors, with optional override predictions."""
    rates, worst = {}, {}
    for q in ("rho", "lam1", "lam2"):
        zs = []
        for i, row in enumerate(stats.rows):
            pred = row[f"{q}_pred"] if preds is None else preds[q][i]
            zs.append(z_score(row[f"{q}_mean"], row[f"{q}_std"], pred, row["trials"]))
        rates[q] = float(np.mean([abs(z) <= 3 for z in zs]))
        worst[q] = float(np.max(np.abs(zs)))
    return rates, worst


def fmt_rates(rates, worst):
    return ", ".join(f"{q} {rates[q]:.0%} (max |z| {worst[q]:.1f})" for q in rates)


@pytest.fixture(scope="module")
def logistic_stats():
    return run_sweep(LOGISTIC, grid_for(make_logistic(3, 6)))


@pytest.fixture(scope="module")
def subset_stats():
    return run_sweep({"type": "pr_subset", "kappa": 1.0, "t": 1.5}, grid_for(make_pr_subset(1, 1.5)))


@pytest.fixture(scope="module")
def trimming_stats():
    return run_sweep({"type": "pr_trimming", "kappa": 1.0, "t": 3.0}, grid_for(make_pr_trimming(1, 3)))


def test_c1_quantizer_constants(request):
    t0 = time.perf_counter()
    m = make_quantizer(**QUANT)
    rule = default_rule()
    b1 = expect(m, rule, lambda z, s: 1.0 * (z == 1.0))
    b2 = expect(m, rule, lambda z, s: 1.0 * (z == QUANT["theta"]))
    w1 = expect(m, rule, lambda z, s: s * s * (z == 1.0))
    w2 = expect(m, rule, lambda z, s: s * s * (z == QUANT["theta"]))
    dt = time.perf_counter() - t0
    got = np.array([b1, b2, w1, w2])
    ref = np.array([1.0086e-6, 1.5970e-4, 2.3976e-5, 1.2926e-4])
    rel = np.abs(got / ref - 1)
    ok = bool(np.all(rel <= 1e-3) and dt < 1)
    assert emit(request, 1, ok, f"max rel err {rel.max():.2e}, {dt:.3f} s")


def test_c2_quantizer_phases(request):
    t0 = time.perf_counter()
    m = make_quantizer(**QUANT)
    rep = critical_ratios(m)
    alphas = np.geomspace(1e3, 1e6, 60)
    rho = np.array([predict(m, None, a).rho_limit for a in alphas])
    dt = time.perf_counter() - t0
    zeros_err = np.abs(np.array(rep.zeros) - [1.0765, 1.1844, 3.3127]) if len(rep.zeros) == 3 else np.array([np.inf])
    ac_err = np.abs(np.array(rep.alpha_c) / [3.6279e3, 9.6302e3, 2.0947e5] - 1) if len(rep.alpha_c) == 3 \
        else np.array([np.inf])
    a1, a2, a3 = rep.alpha_c if len(rep.alpha_c) == 3 else (np.nan,) * 3
    r1, r2, r3, r4 = alphas < a1, (alphas > a1) & (alphas < a2), (alphas > a2) & (alphas < a3), alphas > a3
    shape_ok = bool(np.all(rho[r1] == 0) and np.all(rho[r2] > 0) and np.all(rho[r3] == 0)
                    and np.all(rho[r4] > 0) and np.all(np.diff(rho[r4]) > 0)
                    and predict(m, None, 1e9).rho_limit > 0.99)
    ok = bool(zeros_err.max() <= 1e-3 and ac_err.max() <= 1e-3 and shape_ok and dt < 10)
    detail = (f"zeros {', '.join(f'{z:.5f}' for z in rep.zeros)} (max abs err {zeros_err.max():.1e}), "
              f"alpha_c {', '.join(f'{a:.6g}' for a in rep.alpha_c)} (max rel err {ac_err.max():.1e}), "
              f"four-region shape {'ok' if shape_ok else 'wrong'}, {dt:.1f} s")
    assert emit(request, 2, ok, detail)


def test_c3_one_bit_universality(request):
    t0 = time.perf_counter()
    worst = 0.0
    for m in (make_logistic(3, 6), make_pr_subset(1, 1.5)):
        bm = base_moments(m)
        ac = bm.d / (bm.c - bm.d) ** 2
        for a in np.geomspace(0.05, 500, 50) * ac:
            p, q = predict(m, None, a), one_bit_predict(bm.c, bm.d, a)
            for u, v in ((p.rho_limit, q.rho_limit), (p.lambda1_limit, q.lambda1_limit),
                         (p.lambda2_limit, q.lambda2_limit)):
                if u != v:
                    worst = max(worst, abs(u - v) / max(abs(u), abs(v)))
    dt = time.perf_counter() - t0
    assert emit(request, 3, worst <= 1e-8 and dt < 10, f"max rel diff {worst:.2e}, {dt:.2f} s")


def test_c4_arrowhead_oracle(request):
    t0 = time.perf_counter()
    worst, bad = 0.0, 0
    for n in (20, 50, 100):
        for seed in range(100):
            el, ec, il = oracle_instance(n, seed)
            worst = max(worst, el, ec)
            bad += (max(el, ec) > 1e-8) or not il
    hand = arrowhead_solve(arrowhead_view(np.array([[0.0, 1.0], [1.0, 0.0]])))
    hand_ok = abs(hand.lambda1 - 1) < 1e-12 and abs(hand.cos_sq_point - 0.5) < 1e-12
    dt = time.perf_counter() - t0
    ok = bad == 0 and hand_ok and dt < 30
    assert emit(request, 4, ok, f"300 instances, worst err {worst:.2e}, failures {bad}, {dt:.1f} s")


@pytest.mark.slow
def test_c5_logistic_sweep(request, logistic_stats):
    rates, worst = band(logistic_stats)
    gap = logistic_stats.column("gap_mean")
    alphas = logistic_stats.column("alpha")
    below = gap[alphas < critical_ratios(make_logistic(3, 6)).alpha_c_max].mean()
    ratio = gap[-1] / below
    ok = all(r >= 0.9 for r in rates.values()) and ratio >= 5
    assert emit(request, 5, ok, f"{fmt_rates(rates, worst)}; gap ratio largest/below {ratio:.2f}")


@pytest.mark.slow
def test_c6_trimming_subset(request, trimming_stats, subset_stats):
    trim = make_pr_trimming(1, 3)
    rep = critical_ratios(trim)
    preds_t = {"rho": [parametric_rho(trim, None, a, rep) for a in trimming_stats.column("alpha")],
               "lam1": trimming_stats.column("lam1_pred"), "lam2": trimming_stats.column("lam2_pred")}
    bm = base_moments(make_pr_subset(1, 1.5))
    closed = [one_bit_predict(bm.c, bm.d, a) for a in subset_stats.column("alpha")]
    preds_s = {"rho": [p.rho_limit for p in closed], "lam1": [p.lambda1_limit for p in closed],
               "lam2": [p.lambda2_limit for p in closed]}
    rt, wt = band(trimming_stats, preds_t)
    rs, ws = band(subset_stats, preds_s)

    def interior_min(kind, lo, hi, steps):
        rows = [r for r in alpha_c_vs_t(kind, 1.0, np.linspace(lo, hi, steps)) if r["alpha_c_min"] != ""]
        ac = np.array([r["alpha_c_min"] for r in rows])
        i = int(np.argmin(ac))
        return 0 < i < len(ac) - 1, rows[i]["t"]

    tmin_ok, tmin = interior_min("pr_trimming", 2.0, 12.0, 41)
    smin_ok, smin = interior_min("pr_subset", 0.2, 6.0, 30)
    ok = all(r >= 0.9 for r in (*rt.values(), *rs.values())) and tmin_ok and smin_ok
    detail = (f"trimming {fmt_rates(rt, wt)}; subset {fmt_rates(rs, ws)}; "
              f"alpha_c(t) minima at t={tmin:.3g} (trimming), t={smin:.3g} (subset)")
    assert emit(request, 6, ok, detail)


def test_c7_large_alpha(request):
    vals = {m.name: predict(m, None, 1e6).rho_limit for m in (make_pr_trimming(1, 3), make_logistic(3, 6))}
    ok = all(v >= 0.999 for v in vals.values())
    assert emit(request, 7, ok, ", ".join(f"{k} rho={v:.6f}" for k, v in vals.items()))


def test_c8_spiked_diagonal(request):
    model = make_logistic(3, 6)
    rng = np.random.default_rng(8)
    m = 10**5
    s = rng.standard_normal(m)
    _, z = sample_zy(model, s, rng)
    v = z * s
    top = spiked_diag_top(z, v, 1.0)
    target = q_inverse(model, None, 1.0)
    c = base_moments(model).c
    spec = spiked_diag_spectrum(z, v, 1.0)
    assert spec[0] == pytest.approx(top, rel=1e-12)
    bulk = np.sort(spec[1:])
    d = base_moments(model).d
    # law of z: atoms at 0 (mass 1 - d) and 1 (mass d); compare both one-sided limits at every point
    F = lambda x: np.where(x < 0, 0.0, np.where(x < 1, 1 - d, 1.0))
    F_left = lambda x: np.where(x <= 0, 0.0, np.where(x <= 1, 1 - d, 1.0))
    pts = np.concatenate([bulk, [-1.0, 0.0, 0.5, 1.0, 2.0]])
    right = np.searchsorted(bulk, pts, side="right") / bulk.size
    left = np.searchsorted(bulk, pts, side="left") / bulk.size
    ks = float(max(np.max(np.abs(right - F(pts))), np.max(np.abs(left - F_left(pts)))))
    rel = abs(top / target - 1)
    ok = rel <= 0.01 and ks <= 0.01 and abs(target - (1 + c)) < 1e-10
    assert emit(request, 8, ok, f"top {top:.5f} vs Q^-1(1) = 1 + c = {target:.5f} (rel {rel:.1e}), KS {ks:.2e}")


def test_c9_norm_estimation(request):
    model = make_pr_trimming(3, 3)
    errs = []
    for seed in range(100):
        rng = np.random.default_rng([9, seed])
        y, _ = sample_zy(model, rng.standard_normal(10**5), rng)
        errs.append(abs(np.sqrt(np.mean(y)) - 3.0))
    good = int(np.sum(np.array(errs) < 0.05))
    assert emit(request, 9, good >= 99, f"{good}/100 runs within 0.05, worst {max(errs):.4f}")


def test_c10_quadrature(request):
    r = gauss_hermite(DEFAULT_ORDER)
    e = [abs(r.weights.sum() - 1), abs(r.weights @ r.nodes**2 - 1), abs(r.weights @ r.nodes**4 - 3)]
    worst = 0.0
    for m in (make_logistic(3, 6), make_pr_trimming(1, 3), make_pr_subset(1, 1.5), make_quantizer(**QUANT)):
        lams = m.tau * (1 + np.geomspace(1e-4, 100, 40))
        a = lambda_moments_grid(m, r, lams)
        b = lambda_moments_grid(m, gauss_hermite(2 * DEFAULT_ORDER), lams)
        worst = max(worst, float(np.max(np.abs(a - b) / np.abs(b))))
    ok = e[0] <= 1e-13 and e[1] <= 1e-12 and e[2] <= 1e-10 and worst <= 1e-9
    assert emit(request, 10, ok, f"moment errs {e[0]:.1e}, {e[1]:.1e}, {e[2]:.1e}; order doubling {worst:.1e}")


@pytest.mark.slow
def test_c11_linear_baseline(request, logistic_stats, subset_stats):
    from specinit.harness import sweep_linear_rho

    sub_max = float(subset_stats.column("rho_linear_mean").max())
    lin = sweep_linear_rho(logistic_stats)
    model = make_logistic(3, 6)
    zs = [z_score(row.mean(), row.std(ddof=1), linear_rho_limit(model, None, a), row.size)
          for row, a in zip(lin, logistic_stats.column("alpha"))]
    worst = float(np.max(np.abs(zs)))
    ok = sub_max <= 0.01 and worst <= 3
    assert emit(request, 11, ok, f"subset max mean rho_linear {sub_max:.2e}; logistic max |z| {worst:.2f}")


@pytest.mark.slow
def test_c12_rademacher(request):
    stats = run_sweep(LOGISTIC, grid_for(make_logistic(3, 6)), ensemble="rademacher")
    rates, worst = band(stats)
    ok = all(r >= 0.9 for r in rates.values())
    assert emit(request, 12, ok, fmt_rates(rates, worst))

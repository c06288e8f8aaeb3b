"""The eleven acceptance criteria, each printing one PASS/FAIL line."""

import time
from datetime import date, timedelta
from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from lakeice.classify import (DailyLabelSeries, DailyScoreCube, SMOClassifier, daily_labels, extract_ice_dates,
                              gaussian_weights, metrics, mta_smooth)
from lakeice.cli import main
from lakeice.icedetect import IceState, classify_pixel
from lakeice.insitu import detect_by_correlation, detect_by_pressure, detect_by_spectral_energy
from lakeice.lswt import (AtmParams, BandSpec, fit_lswt_regression, inverse_planck, invert_pmw,
                          regression_samples, simulate_toa_radiance, validation_stats)
from lakeice.phenology import two_step_phenology
from lakeice.rastergeo import estimate_geolocation_shift
from synth import (correlation_splice, exhaustive_shift_oracle, pressure_splice, scene, spectral_splice,
                   synthetic_season)
from test_classify_svm import best_linear_accuracy, blobs, qp_oracle, xor
from workspace import FIXTURES, build_workspace


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def test_criterion_01_ice_dates_from_daily_labels(verdict):
    expected = {"sils_viirs1": (date(2017, 1, 6), date(2017, 4, 7)),
                "sihl_modis": (date(2017, 1, 3), date(2017, 3, 10)),
                "sihl_viirs1": (date(2017, 1, 3), date(2017, 3, 12))}
    t0 = time.perf_counter()
    got = {k: extract_ice_dates(DailyLabelSeries.from_csv(FIXTURES / f"{k}.csv")) for k in expected}
    dt = time.perf_counter() - t0
    ok = all((got[k].ice_on, got[k].ice_off) == v for k, v in expected.items()) and dt < 1.0
    detail = ", ".join(f"{k} {got[k].ice_on}/{got[k].ice_off}" for k in expected)
    verdict(1, ok, f"{detail}; {dt:.3f} s")


def test_criterion_02_pmw_round_trip(verdict):
    band = BandSpec("I5", 11.45)
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        T = rng.uniform(240, 320)
        atm = AtmParams(rng.uniform(0.5, 1), rng.uniform(0, 3), rng.uniform(0, 3), 0.0, rng.uniform(0.95, 1))
        worst = max(worst, abs(invert_pmw(simulate_toa_radiance(T, atm, band), atm, band).lswt - T))
    worst_reg = 0.0
    n_points = set()
    for _ in range(20):
        atm = AtmParams(rng.uniform(0.5, 1), rng.uniform(0, 3), rng.uniform(0, 3), 0.0, rng.uniform(0.95, 1))
        t_skin = rng.uniform(260, 300)
        s = regression_samples(t_skin, atm, band)
        n_points.add((len(s), s[0, 0] - t_skin, s[-1, 0] - t_skin))
        a, b = fit_lswt_regression(s)
        for T in s[:, 0]:
            L = simulate_toa_radiance(T, atm, band)
            worst_reg = max(worst_reg, abs(a * inverse_planck(L, band) + b - invert_pmw(L, atm, band).lswt))
    dt = time.perf_counter() - t0
    ok = worst < 1e-3 and worst_reg < 0.05 and n_points == {(21, -5.0, 15.0)} and dt < 5.0
    verdict(2, ok, f"max inversion error {worst:.2e} K, max regression-path gap {worst_reg:.4f} K; {dt:.2f} s")


def test_criterion_03_ice_threshold_truth_table(verdict):
    rows = []
    for n, i2, t in product((0.45, 0.46), (0.08, 0.09), (275.0, 274.9)):
        want = IceState.ICE if (n != 0.45 and i2 != 0.08 and t != 275.0) else IceState.OPEN_WATER
        rows.append((n, i2, t, classify_pixel(n, i2, t), want))
    ok = len(rows) == 8 and all(got is want for *_, got, want in rows)
    verdict(3, ok, f"{sum(got is want for *_, got, want in rows)}/8 cases match, "
                   f"{sum(r[3] is IceState.ICE for r in rows)} ice")


def test_criterion_04_two_step_phenology(verdict):
    obs, truth = synthetic_season(seed=0)
    r = two_step_phenology(obs, lake="synthetic")
    start = date(2016, 10, 1)
    blip = {start + timedelta(days=d) for d in range(20, 23)}
    # nearest rank computed independently as the inverted empirical CDF
    p90 = float(np.percentile(truth["frozen"], 90, method="inverted_cdf"))
    p10 = float(np.percentile(truth["open"], 10, method="inverted_cdf"))
    ev = r.events
    ok = (len(truth["dropped"]) > 0 and ev.FUE not in blip and ev.FUS not in blip
          and abs((ev.FUE - truth["FUE"]).days) <= 1 and abs((ev.BUS - truth["BUS"]).days) <= 1
          and r.thresholds.thr_frozen == p90 and r.thresholds.thr_open == p10)
    verdict(4, ok, f"FUE {ev.FUE} (built {truth['FUE']}), BUS {ev.BUS} (built {truth['BUS']}), "
                   f"thresholds {r.thresholds.thr_frozen:.4f}/{r.thresholds.thr_open:.4f} K "
                   f"vs {p90:.4f}/{p10:.4f} K, {len(truth['dropped'])} days missing")


def test_criterion_05_svm(verdict):
    t0 = time.perf_counter()
    X, y = blobs()
    blob_acc = min((SMOClassifier(kernel=k).fit(X, y).predict(X) == y).mean() for k in ("linear", "rbf"))
    Xx, yx = xor()
    rbf_acc = (SMOClassifier(kernel="rbf").fit(Xx, yx).predict(Xx) == yx).mean()
    lin_bound = best_linear_accuracy(Xx, yx)
    gaps, kkt = [], []
    for seed, kernel in product(range(4), ("linear", "rbf")):
        rng = np.random.default_rng(seed)
        Xs = rng.normal(size=(12, 2))
        ys = (Xs[:, 0] + 0.8 * rng.normal(size=12) > 0).astype(int)
        ys[:2] = [0, 1]
        m = SMOClassifier(kernel=kernel, tol=1e-6).fit(Xs, ys)
        gaps.append(abs(m.objective_ - qp_oracle(Xs, ys, kernel)))
    rng = np.random.default_rng(3)
    Xk = rng.normal(size=(200, 4))
    yk = (Xk[:, 0] * Xk[:, 1] + 0.3 * rng.normal(size=200) > 0).astype(int)
    for kernel in ("linear", "rbf"):
        kkt.append(SMOClassifier(kernel=kernel).fit(Xk, yk).kkt_violation_)
    dt = time.perf_counter() - t0
    ok = (blob_acc == 1.0 and rbf_acc >= 0.99 and lin_bound <= 0.75 and max(gaps) < 1e-4
          and max(kkt) <= 1e-3 and dt < 10.0)
    verdict(5, ok, f"blobs {blob_acc:.0%}, XOR rbf {rbf_acc:.0%} (best linear {lin_bound:.0%}), "
                   f"max dual gap {max(gaps):.1e}, max KKT {max(kkt):.1e}; {dt:.2f} s")


def test_criterion_06_mta_properties(verdict):
    rng = np.random.default_rng(6)
    s = rng.uniform(0, 100, (30, 5))
    s[rng.random(s.shape) < 0.2] = np.nan
    identity = all(np.array_equal(mta_smooth(s, scheme, 1), s, equal_nan=True)
                   for scheme in ("mean", "median", "gaussian"))
    spike = np.array_equal(mta_smooth(np.array([[0.0], [100.0], [0.0]]), "median", 3).ravel(), [0, 0, 0])
    wsum = max(abs(gaussian_weights(w).sum() - 1) for w in range(1, 32, 2))
    in_range = True
    for k in range(300):
        cube = rng.choice([0.0, 100.0, np.nan], size=(20, 7)) if k % 2 else rng.uniform(0, 100, (20, 7))
        for scheme, w in product(("mean", "median", "gaussian"), (3, 5, 7)):
            sm = mta_smooth(cube, scheme, w)
            pct = daily_labels(DailyScoreCube(date(2017, 1, 1), sm)).pct_fp
            fin = pct[np.isfinite(pct)]
            good = sm[np.isfinite(sm)]
            in_range &= bool(((good >= 0) & (good <= 100)).all() and ((fin >= 0) & (fin <= 100)).all())
    ok = identity and spike and wsum < 1e-12 and in_range
    verdict(6, ok, f"identity {identity}, spike removed {spike}, max |sum w - 1| {wsum:.1e}, "
                   f"range kept {in_range}")


def test_criterion_07_geolocation(verdict):
    t0 = time.perf_counter()
    errs, oracle_gaps = [], []
    for shift in ((0.0, 0.0), (-0.75, -0.85), (2.0, -1.0)):
        for noise, tol in ((0.0, 0.25), (0.1, 0.5)):
            g, c, outlines = scene(shift, noise=noise, seed=7)
            s = estimate_geolocation_shift([(g, c)], outlines)
            ox, oy = exhaustive_shift_oracle(g, c, [o.ring for o in outlines])
            e = max(abs(s.sx - shift[0]), abs(s.sy - shift[1]))
            errs.append((e, tol))
            oracle_gaps.append((max(abs(s.sx - ox), abs(s.sy - oy)), tol))
    dt = time.perf_counter() - t0
    ok = all(e <= tol for e, tol in errs) and all(e <= tol for e, tol in oracle_gaps) and dt < 30
    verdict(7, ok, f"max error {max(e for e, t in errs if t == 0.25):.3f} px noiseless, "
                   f"{max(e for e, t in errs if t == 0.5):.3f} px at 10% noise, "
                   f"max gap to exhaustive oracle {max(e for e, _ in oracle_gaps):.3f} px; {dt:.1f} s")


def test_criterion_08_insitu_detectors(verdict):
    def off(r, truth):
        return max(abs((r.freeze_up - truth[0]).days), abs((r.break_up - truth[1]).days))

    shallow, deep, t1 = correlation_splice(0)
    s, t2 = spectral_splice(0)
    p, t3 = pressure_splice(0)
    results = {"correlation": (detect_by_correlation(shallow, deep), t1),
               "spectral": (detect_by_spectral_energy(s), t2),
               "pressure": (detect_by_pressure(p), t3)}
    quiet, _ = pressure_splice(0, loud=0.0, quiet=0.0)
    none = detect_by_pressure(quiet)
    errs = {k: off(r, t) if r.status == "ok" else None for k, (r, t) in results.items()}
    ok = all(e is not None and e <= 2 for e in errs.values()) and \
        none.status == "no signal" and none.freeze_up is None and none.break_up is None
    verdict(8, ok, ", ".join(f"{k} within {e} d" for k, e in errs.items()) + f"; quiet logger -> {none.status!r}")


def metric_oracle(cm):
    """Exact rational recall, precision, IoU, OA and mean IoU from the confusion matrix."""
    cm = [[Fraction(int(v)) for v in row] for row in cm]
    k = len(cm)
    row = [sum(cm[i]) for i in range(k)]
    col = [sum(cm[i][j] for i in range(k)) for j in range(k)]
    tp = [cm[i][i] for i in range(k)]
    rec = [tp[i] / row[i] if row[i] else None for i in range(k)]
    pre = [tp[i] / col[i] if col[i] else None for i in range(k)]
    iou = [tp[i] / (row[i] + col[i] - tp[i]) if row[i] + col[i] - tp[i] else None for i in range(k)]
    oa = sum(tp) / sum(row)
    defined = [v for v in iou if v is not None]
    return rec, pre, iou, oa, sum(defined) / len(defined)


def test_criterion_09_metrics(verdict):
    hand = {
        "binary": ([[8, 2], [2, 8]], {"oa": Fraction(16, 20), "iou0": Fraction(8, 12)}),
        "three-class": ([[4, 1, 0], [0, 3, 2], [1, 0, 5]], {"oa": Fraction(12, 16), "iou0": Fraction(4, 6)}),
        "four-class": ([[5, 1, 0, 0], [2, 6, 1, 0], [0, 0, 7, 3], [0, 1, 0, 4]],
                       {"oa": Fraction(22, 30), "iou0": Fraction(5, 8)}),
    }
    exact = True
    for cm, h in hand.values():
        m = metrics(np.array(cm))
        rec, pre, iou, oa, miou = metric_oracle(cm)
        exact &= m.overall_accuracy == float(oa) == float(h["oa"]) and m.iou[0] == float(h["iou0"])
        exact &= list(m.recall) == [float(v) for v in rec] and list(m.precision) == [float(v) for v in pre]
        exact &= list(m.iou) == [float(v) for v in iou] and abs(m.mean_iou - float(miou)) <= 1e-15
    rng = np.random.default_rng(9)
    bound = True
    for _ in range(1000):
        k = rng.integers(2, 6)
        cm = rng.integers(0, 30, (k, k))
        m = metrics(cm)
        for i in range(k):
            lims = [v for v in (m.recall[i], m.precision[i]) if v is not None]
            if m.iou[i] is not None and lims:
                bound &= m.iou[i] <= min(lims) + 1e-15
    verdict(9, exact and bound, f"three hand matrices exact {exact}, IoU <= min(recall, precision) "
                                f"on 1000 random matrices {bound}")


def test_criterion_10_determinism(verdict, tmp_path):
    config = build_workspace(tmp_path / "ws")
    snaps = []
    for run in ("a", "b"):
        out = tmp_path / run
        for c in ("lswt", "icemap", "phenology", "train", "predict", "insitu", "report"):
            assert main([c, "--config", str(config), "--out", str(out)]) == 0
        snaps.append({p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
    differing = sorted(k for k in snaps[0].keys() | snaps[1].keys() if snaps[0].get(k) != snaps[1].get(k))
    verdict(10, not differing and len(snaps[0]) > 0,
            f"{len(snaps[0])} artifacts over 7 commands, {len(differing)} differ between runs")


def test_criterion_11_validation_stats(verdict):
    a = np.array([270.0, 272.0, 274.0, 276.0, 278.0])
    e = np.array([0.5, -0.5, 0.0, -0.5, 0.5])
    shifted = validation_stats(a + 1.0, a)
    bias, rmse, r2 = validation_stats(a, a - 1.0 + e)
    # exact values: bias 1, RMSE sqrt(mean((1 - e)^2)), R^2 from the rational covariances
    fa = [Fraction(v).limit_denominator() for v in a]
    fb = [x - 1 + Fraction(v).limit_denominator() for x, v in zip(fa, e)]
    ma, mb = sum(fa) / 5, sum(fb) / 5
    cov = sum((x - ma) * (z - mb) for x, z in zip(fa, fb))
    r2_exact = cov ** 2 / (sum((x - ma) ** 2 for x in fa) * sum((z - mb) ** 2 for z in fb))
    rmse_exact = float(np.sqrt(float(sum((1 - Fraction(v).limit_denominator()) ** 2 for v in e) / 5)))
    ok = (shifted == (1.0, 1.0, 1.0) and abs(bias - 1.0) < 1e-12 and abs(rmse - rmse_exact) < 1e-12
          and abs(r2 - float(r2_exact)) < 1e-12)
    # the published cross-comparison magnitudes (bias about 1 K, R^2 above 0.86) only fix the
    # output format (bias, RMSE, R^2); they are not a numeric target here
    verdict(11, ok, f"constructed pairs: bias {bias:.3f} K, RMSE {rmse:.4f} K, R^2 {r2:.4f} "
                    f"(exact {float(r2_exact):.4f}); format (bias, RMSE, R^2)")

"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The end-to-end criteria (6, 8, 10, 11) drive the real CLI on freshly generated data and take a few
minutes in total; they are marked ``slow``.
"""
import csv
import json
import math
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from freqtrig.cli import main
from freqtrig.config import RunConfig
from freqtrig.datasets import generate_synthetic, power_law_images, radial_bins
from freqtrig.defense import radial_profile, spectral_slope
from freqtrig.moea import (EAConfig, PreferenceRegion, nd_sort, pm_mutation, random_trigger,
                           rnd_sort_select, sbx_crossover, sbx_pair, variation)
from freqtrig.robustness import PreprocessOp, robustness_harness
from freqtrig.runs import poisoned_test_set, train_victim
from freqtrig.spectrum import dct2, dct2_direct, idct2, low_freq_region
from freqtrig.surrogate import init_classifier, loss_and_grads
from freqtrig.trigger import Trigger, inject, inject_unclipped, objective_stealth, spatial_disparity

from oracles import numeric_grads, oracle_fronts, oracle_rndsort, random_points


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_cli(args):
    code = main([str(a) for a in args])
    assert code == 0, f"freqtrig {args[0]} exited with {code}"


def only_run(out):
    runs = [p for p in out.iterdir() if p.is_dir()]
    assert len(runs) == 1, runs
    return runs[0]


# ---------------------------------------------------------------- property criteria

def test_c01_dct_isometry_and_round_trip(acceptance):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    x = rng.random((1000, 16, 16, 3))
    X = dct2(x)
    iso = np.max(np.abs(np.linalg.norm(X.reshape(1000, -1), axis=1) - np.linalg.norm(x.reshape(1000, -1), axis=1)))
    rt = np.max(np.abs(idct2(X) - x))
    small = rng.random((20, 8, 8, 3))
    direct = max(np.max(np.abs(dct2(s) - dct2_direct(s))) for s in small)
    elapsed = time.perf_counter() - t0
    ok = iso < 1e-9 and rt < 1e-9 and direct < 1e-9 and elapsed < 10
    acceptance(1, "DCT isometry/round-trip", ok,
               f"norm gap {iso:.2e}, round-trip {rt:.2e}, direct-oracle gap {direct:.2e}, {elapsed:.2f}s")


def test_c02_spatial_equals_spectral_disparity(acceptance):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        h, w = (int(v) for v in rng.integers(4, 33, 2))
        c = int(rng.choice([1, 3]))
        region = low_freq_region(h, w, float(rng.uniform(0.05, 1.0)))
        n = int(rng.integers(1, min(6, region.size) + 1))
        t = random_trigger(region, n, float(rng.uniform(0.05, 2.0)), rng)
        x = rng.random((h, w, c))
        xb = inject_unclipped(x, t)
        spectral = np.linalg.norm(dct2(xb) - dct2(x))
        worst = max(worst, abs(spatial_disparity(x, xb) - spectral),
                    abs(spectral - objective_stealth(t) * math.sqrt(c)))
    acceptance(2, "spatial/spectral disparity", worst < 1e-9, f"max gap {worst:.2e} over 100 pairs")


def test_c03_sorting_matches_oracles(acceptance):
    rng = np.random.default_rng(3)
    mismatches = 0
    largest = 0
    for trial in range(50):
        n = 200 if trial == 0 else int(rng.integers(2, 201))
        largest = max(largest, n)
        pts = random_points(rng, n, integer=trial % 2 == 0)
        size = int(rng.integers(1, n + 1))
        bounds = tuple(rng.uniform(0.5, 4, 3))
        if nd_sort(pts) != oracle_fronts(pts):
            mismatches += 1
        if rnd_sort_select(pts, size, PreferenceRegion(*bounds)) != oracle_rndsort(pts, size, bounds):
            mismatches += 1
    acceptance(3, "nd_sort / rnd_sort_select oracles", mismatches == 0,
               f"{mismatches} mismatches over 50 instances (largest {largest})")


def test_c04_sbx_conservation_and_constraints(acceptance):
    rng = np.random.default_rng(4)
    gap = 0.0
    for _ in range(10_000):
        a, b = rng.uniform(-1, 1, 2)
        c1, c2 = sbx_pair(a, b, rng.random(), float(rng.uniform(1, 30)))
        gap = max(gap, abs((c1 + c2) - (a + b)))
    cfg = EAConfig()
    region = cfg.region(16, 16)
    outputs = violations = 0
    parents = [random_trigger(region, cfg.n_bands, cfg.epsilon, rng) for _ in range(10)]
    while outputs < 10_000:
        kids = variation(parents, cfg, rng)
        c1, c2 = sbx_crossover(parents[0], parents[1], cfg, rng)
        for t in kids + [c1, c2, pm_mutation(c1, cfg, rng)]:
            outputs += 1
            if (any(abs(m) > cfg.epsilon for m in t.magnitudes) or any(b not in region for b in t.bands)
                    or len(set(t.bands)) != t.n):
                violations += 1
        parents = kids
    ok = gap <= 1e-12 and violations == 0
    acceptance(4, "SBX conservation / variation constraints", ok,
               f"sum gap {gap:.2e}, {violations} violations in {outputs} outputs")


def test_c05_gradient_check(acceptance):
    rng = np.random.default_rng(5)
    worst = {}
    for arch in ("logistic", "mlp"):
        worst[arch] = 0.0
        for batch in range(10):
            model = init_classifier(arch, 27, 4, hidden=6, seed=batch)
            for p in model.params.values():
                p += rng.normal(0, 0.3, p.shape)
            x = rng.random((16, 3, 3, 3))
            y = rng.integers(0, 4, 16)
            _, analytic = loss_and_grads(model, x, y)
            numeric = numeric_grads(model, x, y)
            for name in analytic:
                a, n = analytic[name], numeric[name]
                rel = np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12)
                worst[arch] = max(worst[arch], rel)
    ok = max(worst.values()) < 1e-4
    acceptance(5, "surrogate gradient check", ok,
               ", ".join(f"{k} max rel err {v:.2e}" for k, v in worst.items()))


# ---------------------------------------------------------------- end-to-end runs

@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    run_cli(["gen-data", "--out", root / "data"])
    return root


@pytest.fixture(scope="module")
def logistic_search(workspace):
    t0 = time.perf_counter()
    run_cli(["optimize", "--data", workspace / "data", "--out", workspace / "opt_t1", "--threads", 1])
    run = only_run(workspace / "opt_t1")
    run_cli(["eval", "--data", workspace / "data", "--trigger", run / "best_trigger.json",
             "--out", workspace / "eval_mlp"])
    victim = read_csv(only_run(workspace / "eval_mlp") / "eval.csv")[0]
    return run, json.loads((run / "summary.json").read_text()), victim, time.perf_counter() - t0


@pytest.mark.slow
def test_c06_end_to_end_attack(acceptance, logistic_search):
    _, summary, victim, elapsed = logistic_search
    asr, acc, clean = float(victim["asr"]), float(victim["acc"]), float(victim["clean_acc"])
    ok = asr >= 90 and abs(clean - acc) <= 2 and summary["o2"] <= 0.87 and elapsed <= 600
    acceptance(6, "end-to-end attack", ok,
               f"victim ASR {asr:.2f}, ACC {acc:.2f} vs clean {clean:.2f}, o2 {summary['o2']:.4f}, "
               f"{elapsed:.0f}s")


def test_c07_low_band_trigger_survives_blur(acceptance):
    tx, ty, vx, vy = generate_synthetic()
    full = low_freq_region(16, 16, 1.0)
    low = Trigger(((0, 1), (1, 0), (1, 1)), (0.4,) * 3, 0.5, full)
    high = Trigger(((13, 14), (14, 13), (15, 15)), (0.4,) * 3, 0.5, full)
    blur = [PreprocessOp("gaussian", {"w": 3})]
    scores = {"low": [], "high": []}
    for seed in range(3):
        cfg = RunConfig({"seed": seed})
        for name, t in (("low", low), ("high", high)):
            victim = train_victim(cfg, t, tx, ty, vx, vy, 4, with_clean=False)
            px, py = poisoned_test_set(vx, vy, t, cfg.poison_spec().target_label)
            rows = robustness_harness(victim.model, vx, vy, px, py, cfg.poison_spec().target_label, blur)
            scores[name].append(rows[1]["asr"])
    lo, hi = np.mean(scores["low"]), np.mean(scores["high"])
    ratio = math.inf if hi == 0 else lo / hi
    acceptance(7, "robustness ordering", ratio >= 1.5,
               f"post-blur ASR low {lo:.2f} vs high {hi:.2f} (ratio {ratio:.2f}) over 3 seeds")


@pytest.mark.slow
def test_c08_transferability(acceptance, workspace, logistic_search):
    _, summary, victim, _ = logistic_search
    forward = (summary["asr"], float(victim["asr"]))
    run_cli(["optimize", "--data", workspace / "data", "--out", workspace / "opt_mlp", "--surrogate", "mlp"])
    run = only_run(workspace / "opt_mlp")
    mlp_summary = json.loads((run / "summary.json").read_text())
    run_cli(["eval", "--data", workspace / "data", "--trigger", run / "best_trigger.json", "--victim", "logistic",
             "--out", workspace / "eval_logistic"])
    backward = (mlp_summary["asr"], float(read_csv(only_run(workspace / "eval_logistic") / "eval.csv")[0]["asr"]))
    ok = abs(forward[0] - forward[1]) <= 5 and abs(backward[0] - backward[1]) <= 5
    acceptance(8, "transferability", ok,
               f"logistic->mlp {forward[0]:.2f}->{forward[1]:.2f}, mlp->logistic {backward[0]:.2f}->{backward[1]:.2f}")


def test_c09_slope_detector(acceptance):
    rng = np.random.default_rng(9)
    slopes = [spectral_slope(radial_profile(power_law_images(300, 16, 16, 3, -2.0, rng))) for _ in range(5)]
    k = radial_bins(16, 16)
    high = [tuple(int(v) for v in b) for b in np.argwhere((k >= 8) & (k < 16))]
    full = low_freq_region(16, 16, 1.0)
    raised = 0
    for _ in range(20):
        clean = power_law_images(200, 16, 16, 3, -2.0, rng)
        picks = rng.choice(len(high), 3, replace=False)
        t = Trigger(tuple(high[i] for i in picks), tuple(rng.uniform(0.1, 0.5, 3) * rng.choice([-1, 1], 3)),
                    0.5, full)
        before = spectral_slope(radial_profile(clean))
        after = spectral_slope(radial_profile(inject(clean, t)))
        raised += after > before
    worst = max(abs(s + 2.0) for s in slopes)
    ok = worst <= 0.15 and raised == 20
    acceptance(9, "slope detector", ok,
               f"1/f^2 slopes {min(slopes):.3f}..{max(slopes):.3f}, high-band injection raised slope {raised}/20")


@pytest.mark.slow
def test_c10_conflict_sweep(acceptance, tmp_path):
    run_cli(["gen-data", "--out", tmp_path / "data", "--per-class", 200])
    run_cli(["baseline-sweep", "--data", tmp_path / "data", "--out", tmp_path / "sweep",
             "--population", 6, "--generations", 4, "--repeats", 5])
    rows = read_csv(only_run(tmp_path / "sweep") / "sweep.csv")
    alpha = [float(r["alpha"]) for r in rows]
    rho_afr = spearmanr(alpha, [float(r["afr"]) for r in rows]).statistic
    rho_l2 = spearmanr(alpha, [float(r["l2"]) for r in rows]).statistic
    ok = len(rows) == 55 and rho_afr < 0 and rho_l2 > 0
    acceptance(10, "conflict sweep", ok,
               f"spearman(alpha, AFR) {rho_afr:.3f}, spearman(alpha, l2) {rho_l2:.3f} over {len(rows)} runs")


@pytest.mark.slow
def test_c11_determinism_across_threads(acceptance, workspace, logistic_search):
    first = logistic_search[0]
    run_cli(["optimize", "--data", workspace / "data", "--out", workspace / "opt_t2", "--threads", 2])
    second = only_run(workspace / "opt_t2")
    names = sorted(p.name for p in (first / "populations").iterdir())
    differing = [n for n in names
                 if (first / "populations" / n).read_bytes() != (second / "populations" / n).read_bytes()]
    same_set = names == sorted(p.name for p in (second / "populations").iterdir())
    ok = same_set and not differing and len(names) == 21
    acceptance(11, "determinism across --threads", ok,
               f"{len(names)} population files, {len(differing)} differ (threads 1 vs 2)")

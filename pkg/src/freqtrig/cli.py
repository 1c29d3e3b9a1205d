"""Command-line interface: ``freqtrig <command> [options]``.

Exit status 0 on success, 2 on usage or validation errors, 1 on runtime failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.stats import spearmanr

from . import plotting
from .config import ConfigError, RunConfig
from .datasets import DatasetError, SynthSpec, generate_synthetic, load_dataset, read_manifest, write_dataset
from .defense import average_spectrum, detect, radial_profile, spectrum_to_uint8
from .metrics import residual_to_uint8, spectral_residual, stealth_report
from .moea import SearchProblem, scalarized_baseline
from .robustness import DEFAULT_OPS, PreprocessOp, robustness_harness
from .runs import (new_run_dir, poisoned_test_set, pretrain_surrogate, run_search, save_surrogate,
                   train_victim, write_population, write_table)
from .surrogate import TrainingDiverged
from .trigger import inject, load_trigger, poison_dataset, save_trigger

log = logging.getLogger("freqtrig")


class UsageError(Exception):
    """Bad arguments or inputs, reported with exit status 2."""


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    overrides: dict = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "data", None) is not None:
        overrides["data"] = args.data
    if getattr(args, "out", None) is not None:
        overrides["out"] = args.out
    if getattr(args, "threads", None) is not None:
        overrides["threads"] = args.threads
    for attr, section, key in (("population", "ea", "population"), ("generations", "ea", "generations"),
                               ("n_bands", "ea", "n_bands"), ("epsilon", "ea", "epsilon"),
                               ("ratio", "poison", "ratio"), ("target", "poison", "target_label"),
                               ("surrogate", "surrogate", "arch"), ("victim", "victim", "arch")):
        value = getattr(args, attr, None)
        if value is not None:
            overrides.setdefault(section, {})[key] = value
    return cfg.with_overrides(overrides) if overrides else cfg


def _data(cfg: RunConfig):
    path = cfg.raw["data"]
    if not path:
        raise UsageError("no dataset given (use --data or the 'data' config key)")
    try:
        manifest = read_manifest(path)
        train = load_dataset(path, "train")
        test = load_dataset(path, "test")
    except (DatasetError, FileNotFoundError) as exc:
        raise UsageError(str(exc)) from exc
    if len(train[1]) == 0:
        raise UsageError(f"{path}: no training entries")
    cfg.poison_spec().check_classes(manifest["classes"])
    return manifest["classes"], train, test


def _threads(cfg: RunConfig) -> int:
    return cfg.raw["threads"] or os.cpu_count() or 1


def _trigger(path):
    try:
        return load_trigger(path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read trigger manifest {path}: {exc}") from exc


# ---------------------------------------------------------------- commands

def cmd_gen_data(args) -> None:
    try:
        spec = SynthSpec(args.classes, args.height, args.width, args.channels, args.per_class,
                         args.test_per_class, args.signal_scale, args.noise, args.seed or 0)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    tx, ty, vx, vy = generate_synthetic(spec)
    path = write_dataset(args.out, {"train": (tx, ty), "test": (vx, vy)}, spec.num_classes)
    print(f"wrote {len(ty)} train / {len(vy)} test images, {spec.num_classes} classes, "
          f"{spec.height}x{spec.width}x{spec.channels} -> {path}")


def cmd_optimize(args) -> None:
    cfg = _config(args)
    k, (tx, ty), _ = _data(cfg)
    run = new_run_dir(cfg.raw["out"], cfg.seed, "optimize")
    (run / "config.json").write_text(cfg.to_json())
    channels = tx.shape[3]
    t0 = time.perf_counter()

    def persist(pop):
        write_population(pop, run, channels)
        best = min(pop.members, key=lambda m: m.pref_distance)
        log.info("generation %d: min pref distance %.4f", pop.generation, best.pref_distance)

    result, base = run_search(cfg, tx, ty, k, _threads(cfg), persist)
    save_surrogate(base, run)
    save_trigger(result.best, run / "best_trigger.json", channels)
    o = result.best_objectives
    summary = {"o1": o.o1, "o2": o.o2, "o3": o.o3, "asr": o.asr, "acc": o.acc,
               "bands": [list(b) for b in result.best.bands],
               "magnitudes": list(result.best.magnitudes),
               "generations": len(result.history) - 1,
               "wall_time_s": time.perf_counter() - t0}
    (run / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    plotting.pareto_scatter(result.history, run / "pareto.pdf", cfg.preference(tx.shape[1]))
    print(f"{run}: best o1={o.o1:.4f} o2={o.o2:.4f} o3={o.o3:.4f} ASR={o.asr:.2f} ACC={o.acc:.2f}")


def cmd_poison(args) -> None:
    cfg = _config(args)
    trigger = _trigger(args.trigger)
    k, (tx, ty), (vx, vy) = _data(cfg)
    spec = cfg.poison_spec()
    split = poison_dataset(tx, ty, spec, trigger, np.random.default_rng(cfg.seed))
    px, py = poisoned_test_set(vx, vy, trigger, spec.target_label)
    run = new_run_dir(cfg.raw["out"], cfg.seed, "poison")
    x = np.concatenate([split.clean_x, split.poison_x])
    y = np.concatenate([split.clean_y, split.poison_y])
    write_dataset(run / "dataset", {"train": (x, y), "test": (vx, vy),
                                    "test_poisoned": (px, np.full(len(py), spec.target_label))}, k)
    write_table([{"index": int(i), "source_label": int(s)} for i, s in zip(split.indices, split.source_y)],
                run / "poison_indices.csv")
    print(f"{run}: poisoned {len(split.indices)} of {len(ty)} training samples -> label {spec.target_label}")


def cmd_eval(args) -> None:
    cfg = _config(args)
    trigger = _trigger(args.trigger)
    k, (tx, ty), (vx, vy) = _data(cfg)
    res = train_victim(cfg, trigger, tx, ty, vx, vy, k)
    run = new_run_dir(cfg.raw["out"], cfg.seed, "eval")
    row = {"victim": res.arch, "clean_acc": res.clean_acc, "acc": res.acc, "asr": res.asr,
           "acc_drop": res.clean_acc - res.acc}
    write_table([row], run / "eval.csv")
    print(f"{run}: victim={res.arch} ACC={res.acc:.2f} (clean {res.clean_acc:.2f}) ASR={res.asr:.2f}")


def cmd_robustness(args) -> None:
    cfg = _config(args)
    trigger = _trigger(args.trigger)
    try:
        ops = [PreprocessOp.parse(s) for s in args.ops] if args.ops else list(DEFAULT_OPS)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    k, (tx, ty), (vx, vy) = _data(cfg)
    res = train_victim(cfg, trigger, tx, ty, vx, vy, k, with_clean=False)
    px, py = poisoned_test_set(vx, vy, trigger, cfg.poison_spec().target_label)
    rows = robustness_harness(res.model, vx, vy, px, py, cfg.poison_spec().target_label, ops)
    run = new_run_dir(cfg.raw["out"], cfg.seed, "robustness")
    write_table(rows, run / "robustness.csv")
    plotting.robustness_bars(rows, run / "robustness.pdf")
    avg = rows[-1]["asr"] if len(rows) > 1 else rows[0]["asr"]
    print(f"{run}: original ASR={rows[0]['asr']:.2f}, average ASR under preprocessing={avg:.2f}")


def cmd_inspect(args) -> None:
    cfg = _config(args)
    trigger = _trigger(args.trigger)
    _, _, (vx, _) = _data(cfg)
    clean = vx[:args.count]
    poisoned = inject(clean, trigger)
    run = new_run_dir(cfg.raw["out"], cfg.seed, "inspect")
    rows = []
    for i, (c, p) in enumerate(zip(clean, poisoned)):
        Image.fromarray(residual_to_uint8(spectral_residual(c, p), args.gain)).save(run / f"residual_{i:03d}.png")
        Image.fromarray(residual_to_uint8(spectral_residual(c, c), args.gain)).save(run / f"residual_clean_{i:03d}.png")
        rep = stealth_report(c, p) if min(c.shape[:2]) >= 11 else None
        rows.append({"index": i, "l2": rep.l2 if rep else float("nan"),
                     "psnr": rep.psnr if rep else float("nan"), "ssim": rep.ssim if rep else float("nan")})
    write_table(rows, run / "stealth.csv")
    for label, batch in (("clean", clean), ("poisoned", poisoned)):
        Image.fromarray(spectrum_to_uint8(average_spectrum(batch))).save(run / f"avg_spectrum_{label}.png")
    profiles = {"clean": radial_profile(clean), "poisoned": radial_profile(poisoned)}
    for label, prof in profiles.items():
        (run / f"profile_{label}.txt").write_text(prof.to_text())
    plotting.profile_plot(profiles, run / "profiles.pdf")
    print(f"{run}: {len(clean)} residual maps, mean l2={np.mean([r['l2'] for r in rows]):.4f}")


def cmd_detect(args) -> None:
    cfg = _config(args)
    _, _, (vx, _) = _data(cfg)
    batch = vx[:args.count]
    if args.trigger:
        batch = inject(batch, _trigger(args.trigger))
    verdict = detect(batch, args.threshold)
    run = new_run_dir(cfg.raw["out"], cfg.seed, "detect")
    (run / "profile.txt").write_text(radial_profile(batch).to_text())
    write_table([{"slope": verdict.slope, "threshold": verdict.threshold, "verdict": verdict.label}],
                run / "detect.csv")
    print(f"{run}: slope={verdict.slope:.4f} threshold={verdict.threshold} -> {verdict.label}")


def cmd_baseline_sweep(args) -> None:
    cfg = _config(args)
    k, (tx, ty), _ = _data(cfg)
    spec = cfg.poison_spec()
    base = pretrain_surrogate(cfg, tx, ty, k)
    problem = SearchProblem(tx, ty, spec, base, cfg.retrain_config(),
                            cfg.raw["surrogate"]["o1_support"], _threads(cfg))
    rows = scalarized_baseline(problem, cfg.ea_config(), args.alphas, args.repeats)
    run = new_run_dir(cfg.raw["out"], cfg.seed, "sweep")
    write_table(rows, run / "sweep.csv")
    plotting.sweep_plot(rows, run / "sweep.pdf")
    a = [r["alpha"] for r in rows]
    rho_afr = spearmanr(a, [r["afr"] for r in rows]).statistic
    rho_l2 = spearmanr(a, [r["l2"] for r in rows]).statistic
    print(f"{run}: spearman(alpha, AFR)={rho_afr:.3f} spearman(alpha, l2)={rho_l2:.3f}")


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freqtrig", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="JSON run configuration")
        if data:
            p.add_argument("--data", help="dataset directory or manifest")
        p.add_argument("--out", help="parent directory for run directories")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--ratio", type=float, help="poison ratio")
        p.add_argument("--target", type=int, help="target label")
        return p

    g = sub.add_parser("gen-data", help="generate the synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--classes", type=int, default=4)
    g.add_argument("--height", type=int, default=16)
    g.add_argument("--width", type=int, default=16)
    g.add_argument("--channels", type=int, default=3)
    g.add_argument("--per-class", type=int, default=500)
    g.add_argument("--test-per-class", type=int, default=100)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--signal-scale", type=float, default=0.5)
    g.set_defaults(func=cmd_gen_data)

    o = common(sub.add_parser("optimize", help="search for a trigger"))
    o.add_argument("--population", type=int)
    o.add_argument("--generations", type=int)
    o.add_argument("--n-bands", dest="n_bands", type=int)
    o.add_argument("--epsilon", type=float)
    o.add_argument("--surrogate", choices=("logistic", "mlp"))
    o.set_defaults(func=cmd_optimize)

    p = common(sub.add_parser("poison", help="write a poisoned copy of a dataset"))
    p.add_argument("--trigger", required=True)
    p.set_defaults(func=cmd_poison)

    e = common(sub.add_parser("eval", help="train a fresh victim on poisoned data"))
    e.add_argument("--trigger", required=True)
    e.add_argument("--victim", choices=("logistic", "mlp"))
    e.set_defaults(func=cmd_eval)

    r = common(sub.add_parser("robustness", help="ASR under preprocessing"))
    r.add_argument("--trigger", required=True)
    r.add_argument("--victim", choices=("logistic", "mlp"))
    r.add_argument("--ops", nargs="*", help="e.g. identity gaussian:3 wiener:3 brightness:1.1 jpeg:90")
    r.set_defaults(func=cmd_robustness)

    i = common(sub.add_parser("inspect", help="spectral residual maps and stealth metrics"))
    i.add_argument("--trigger", required=True)
    i.add_argument("--count", type=int, default=16)
    i.add_argument("--gain", type=float, default=5.0)
    i.set_defaults(func=cmd_inspect)

    d = common(sub.add_parser("detect", help="spectral slope anomaly check"))
    d.add_argument("--threshold", type=float, required=True)
    d.add_argument("--trigger", help="inject this trigger before checking")
    d.add_argument("--count", type=int, default=400)
    d.set_defaults(func=cmd_detect)

    b = common(sub.add_parser("baseline-sweep", help="scalarized effectiveness/stealth sweep"))
    b.add_argument("--alphas", type=float, nargs="+", default=[round(0.1 * i, 1) for i in range(11)])
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--population", type=int)
    b.add_argument("--generations", type=int)
    b.set_defaults(func=cmd_baseline_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"freqtrig {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # invariant violations in user-supplied parameters
        print(f"freqtrig {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDiverged, OSError, RuntimeError) as exc:
        print(f"freqtrig {args.command}: failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Experiment plumbing shared by the CLI: run directories, population files, victim training."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .moea import Population, SearchProblem, SearchResult, optimize
from .surrogate import (Classifier, accuracy, attack_success_rate, init_classifier,
                        save_checkpoint, train)
from .trigger import Trigger, inject, poison_dataset, save_trigger

POPULATION_FIELDS = ["generation", "member_id", "o1", "o2", "o3", "asr", "acc",
                     "pref_distance", "trigger"]


def new_run_dir(out, seed: int, label: str) -> Path:
    """Fresh ``<out>/<label>-<timestamp>-s<seed>[-k]`` directory; existing ones are never reused."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{label}-{time.strftime('%Y%m%d-%H%M%S')}-s{seed}"
    path, k = out / stem, 1
    while True:
        try:
            path.mkdir()
            return path
        except FileExistsError:
            k += 1
            path = out / f"{stem}-{k}"


def _fmt(v: float) -> str:
    return repr(float(v))


def write_population(pop: Population, run_dir: Path, channels: int) -> Path:
    pdir = run_dir / "populations"
    tdir = run_dir / "triggers"
    pdir.mkdir(exist_ok=True)
    tdir.mkdir(exist_ok=True)
    path = pdir / f"population_g{pop.generation:03d}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POPULATION_FIELDS)
        for i, m in enumerate(pop.members):
            rel = f"triggers/g{pop.generation:03d}_m{i:02d}.json"
            save_trigger(m.trigger, run_dir / rel, channels)
            o = m.objectives
            w.writerow([pop.generation, i, _fmt(o.o1), _fmt(o.o2), _fmt(o.o3), _fmt(o.asr),
                        _fmt(o.acc), _fmt(m.pref_distance), rel])
    return path


def write_table(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in r.items()})


def pretrain_surrogate(cfg: RunConfig, x, y, num_classes: int) -> Classifier:
    s = cfg.raw["surrogate"]
    model = init_classifier(s["arch"], int(np.prod(x.shape[1:])), num_classes, s["hidden"], cfg.seed)
    return train(model, x, y, cfg.pretrain_config())


def run_search(cfg: RunConfig, x, y, num_classes: int, threads: int = 1,
               on_generation=None) -> tuple[SearchResult, Classifier]:
    spec = cfg.poison_spec()
    spec.check_classes(num_classes)
    base = pretrain_surrogate(cfg, x, y, num_classes)
    problem = SearchProblem(x, y, spec, base, cfg.retrain_config(),
                            cfg.raw["surrogate"]["o1_support"], threads)
    result = optimize(problem, cfg.ea_config(), cfg.preference(x.shape[1]), on_generation)
    return result, base


@dataclass
class VictimResult:
    arch: str
    clean_acc: float  # victim trained on clean data
    acc: float        # victim trained on poisoned data, clean test images
    asr: float        # same victim, poisoned test images of non-target classes
    model: Classifier


def poisoned_test_set(test_x, test_y, trigger: Trigger, target: int):
    keep = test_y != target
    return inject(test_x[keep], trigger), test_y[keep]


def train_victim(cfg: RunConfig, trigger: Trigger, train_x, train_y, test_x, test_y,
                 num_classes: int, arch: str | None = None, with_clean: bool = True) -> VictimResult:
    """Train a fresh victim on the poisoned training split and score it on the test split."""
    v = cfg.raw["victim"]
    arch = arch or v["arch"]
    spec = cfg.poison_spec()
    tcfg = cfg.victim_config(arch)
    dim = int(np.prod(train_x.shape[1:]))
    fresh = init_classifier(arch, dim, num_classes, v["hidden"], cfg.seed + 1)
    split = poison_dataset(train_x, train_y, spec, trigger, np.random.default_rng([cfg.seed, 99]))
    model = train(fresh, np.concatenate([split.clean_x, split.poison_x]),
                  np.concatenate([split.clean_y, split.poison_y]), tcfg)
    px, py = poisoned_test_set(test_x, test_y, trigger, spec.target_label)
    clean_acc = accuracy(train(fresh, train_x, train_y, tcfg), test_x, test_y) if with_clean else float("nan")
    return VictimResult(arch, clean_acc, accuracy(model, test_x, test_y),
                        attack_success_rate(model, px, py, spec.target_label), model)


def save_surrogate(model: Classifier, run_dir: Path) -> None:
    save_checkpoint(model, run_dir / "surrogate.ckpt")

"""Run configuration: defaults, JSON loading, and total up-front validation."""
from __future__ import annotations

import copy
import json
import math
from pathlib import Path

from .moea import EAConfig, PreferenceRegion
from .surrogate import ARCHES, TrainConfig
from .trigger import PoisonSpec

DEFAULT_LR = {"logistic": 0.5, "mlp": 0.1}

DEFAULTS = {
    "seed": 0,
    "data": None,
    "out": "runs",
    "threads": None,
    "surrogate": {"arch": "logistic", "hidden": 64, "learning_rate": None,
                  "pretrain_epochs": 20, "retrain_epochs": 20, "batch_size": 32,
                  "o1_support": "union"},
    "victim": {"arch": "mlp", "hidden": 64, "learning_rate": None, "epochs": 60, "batch_size": 32},
    "poison": {"ratio": 0.05, "target_label": 3},
    "ea": {"population": 10, "generations": 20, "n_bands": 3, "epsilon": 0.5,
           "region_fraction": 0.183, "sbx_eta": 15.0, "pm_eta": 20.0, "crossover_prob": 0.9,
           "mutation_prob": None, "band_shift_rate": 1.0},
    "preference": {"o1_max": None, "o2_max": 0.4, "o3_max": None},
}


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = problems


def _merge(base: dict, override: dict, path: str, problems: list[str]) -> None:
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            problems.append(f"{where}: unknown key")
        elif isinstance(base[key], dict):
            if not isinstance(value, dict):
                problems.append(f"{where}: expected a table of keys")
            else:
                _merge(base[key], value, where + ".", problems)
        else:
            base[key] = value


class RunConfig:
    """Validated view over the nested configuration dictionary."""

    def __init__(self, raw: dict | None = None):
        self.raw = copy.deepcopy(DEFAULTS)
        problems: list[str] = []
        _merge(self.raw, raw or {}, "", problems)
        if problems:
            raise ConfigError(problems)
        self._validate()

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([f"{path}: {exc}"]) from exc
        return cls(raw)

    def with_overrides(self, overrides: dict) -> "RunConfig":
        raw = copy.deepcopy(self.raw)
        problems: list[str] = []
        _merge(raw, overrides, "", problems)
        if problems:
            raise ConfigError(problems)
        return RunConfig(raw)

    def _validate(self) -> None:
        r = self.raw
        problems = []

        def check(key, ok, msg):
            if not ok:
                problems.append(f"{key}: {msg}")

        def posint(v):
            return isinstance(v, int) and not isinstance(v, bool) and v > 0

        check("seed", isinstance(r["seed"], int), "must be an integer")
        check("threads", r["threads"] is None or posint(r["threads"]), "must be a positive integer")
        for section in ("surrogate", "victim"):
            s = r[section]
            check(f"{section}.arch", s["arch"] in ARCHES, f"must be one of {ARCHES}")
            check(f"{section}.hidden", posint(s["hidden"]), "must be a positive integer")
            lr = s["learning_rate"]
            check(f"{section}.learning_rate", lr is None or (isinstance(lr, (int, float)) and lr > 0),
                  "must be positive")
            check(f"{section}.batch_size", posint(s["batch_size"]), "must be a positive integer")
        for key in ("pretrain_epochs", "retrain_epochs"):
            v = r["surrogate"][key]
            check(f"surrogate.{key}", isinstance(v, int) and v >= 0, "must be a non-negative integer")
        check("surrogate.o1_support", r["surrogate"]["o1_support"] in ("union", "poisoned"),
              "must be 'union' or 'poisoned'")
        check("victim.epochs", isinstance(r["victim"]["epochs"], int) and r["victim"]["epochs"] >= 0,
              "must be a non-negative integer")
        p = r["poison"]
        check("poison.ratio", isinstance(p["ratio"], (int, float)) and 0 < p["ratio"] <= 1, "must lie in (0, 1]")
        check("poison.target_label", isinstance(p["target_label"], int) and p["target_label"] >= 0,
              "must be a non-negative integer")
        try:
            self.ea_config()
        except (ValueError, TypeError) as exc:
            problems.append(f"ea: {exc}")
        for key, v in r["preference"].items():
            check(f"preference.{key}",
                  v is None or (isinstance(v, (int, float)) and math.isfinite(v) and v > 0),
                  "must be a positive number")
        if problems:
            raise ConfigError(problems)

    # ---- typed accessors

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    def ea_config(self) -> EAConfig:
        return EAConfig(**self.raw["ea"], master_seed=self.raw["seed"])

    def poison_spec(self) -> PoisonSpec:
        return PoisonSpec(float(self.raw["poison"]["ratio"]), int(self.raw["poison"]["target_label"]))

    def preference(self, height: int) -> PreferenceRegion:
        d = PreferenceRegion.default(height)
        p = self.raw["preference"]
        return PreferenceRegion(p["o1_max"] or d.o1_max, p["o2_max"] or d.o2_max, p["o3_max"] or d.o3_max)

    def _lr(self, section: str) -> float:
        s = self.raw[section]
        return float(s["learning_rate"] or DEFAULT_LR[s["arch"]])

    def pretrain_config(self) -> TrainConfig:
        s = self.raw["surrogate"]
        return TrainConfig(self._lr("surrogate"), s["pretrain_epochs"], s["batch_size"], self.seed)

    def retrain_config(self) -> TrainConfig:
        s = self.raw["surrogate"]
        return TrainConfig(self._lr("surrogate"), s["retrain_epochs"], s["batch_size"], self.seed)

    def victim_config(self, arch: str | None = None) -> TrainConfig:
        v = self.raw["victim"]
        lr = v["learning_rate"] or DEFAULT_LR[arch or v["arch"]]
        return TrainConfig(float(lr), v["epochs"], v["batch_size"], self.seed + 1)

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True) + "\n"

"""Preference-constrained NSGA-II style trigger search.

Objectives (all minimised): O1 fine-tuned surrogate loss, O2 = ||delta||_2,
O3 = summed distance of the bands to the zero-frequency band.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .spectrum import LowFreqRegion, low_freq_region
from .surrogate import Classifier, TrainConfig, evaluate_trigger
from .trigger import PoisonSpec, Trigger, objective_lowfreq, objective_stealth


@dataclass(frozen=True)
class ObjectiveVector:
    o1: float
    o2: float
    o3: float
    asr: float = float("nan")
    acc: float = float("nan")

    @property
    def values(self) -> tuple[float, float, float]:
        return (self.o1, self.o2, self.o3)


def _vals(o) -> tuple:
    return o.values if isinstance(o, ObjectiveVector) else tuple(o)


def dominates(a, b) -> bool:
    a, b = _vals(a), _vals(b)
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def nd_sort(points: Sequence) -> list[list[int]]:
    """Fast non-dominated sort; fronts list indices in input order."""
    vals = np.array([_vals(p) for p in points], dtype=float)
    n = len(vals)
    if n == 0:
        raise ValueError("nd_sort needs at least one point")
    le = np.all(vals[:, None, :] <= vals[None, :, :], axis=2)
    lt = np.any(vals[:, None, :] < vals[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    counts = dom.sum(axis=0)
    fronts = []
    current = [i for i in range(n) if counts[i] == 0]
    while current:
        fronts.append(current)
        for i in current:
            counts[dom[i]] -= 1
        counts[current] = -1
        current = [i for i in range(n) if counts[i] == 0]
    return fronts


def sparsity(front: Sequence) -> list[float]:
    """NSGA-II crowding distance of each member of a front."""
    vals = np.array([_vals(p) for p in front], dtype=float)
    n, m = vals.shape
    dist = np.zeros(n)
    if n <= 2:
        return [math.inf] * n
    for k in range(m):
        order = np.argsort(vals[:, k], kind="stable")
        lo, hi = vals[order[0], k], vals[order[-1], k]
        dist[order[0]] = dist[order[-1]] = math.inf
        if hi == lo:
            continue
        for j in range(1, n - 1):
            dist[order[j]] += (vals[order[j + 1], k] - vals[order[j - 1], k]) / (hi - lo)
    return dist.tolist()


@dataclass(frozen=True)
class PreferenceRegion:
    """Upper bounds of the attacker-preferred objective box."""

    o1_max: float
    o2_max: float
    o3_max: float

    def __post_init__(self):
        for b in self.bounds:
            if not (math.isfinite(b) and b > 0):
                raise ValueError(f"preference bounds must be finite and positive, got {self.bounds}")

    @property
    def bounds(self) -> tuple[float, float, float]:
        return (self.o1_max, self.o2_max, self.o3_max)

    @classmethod
    def default(cls, height: int) -> "PreferenceRegion":
        # O1 bound: loss of a 0.9-probability correct prediction; O3 bound 8 at 32px, scaled
        return cls(-math.log(0.9), 0.4, 8.0 * height / 32.0)


def pref_distance(o, pref: PreferenceRegion) -> float:
    """Euclidean distance from ``o`` to the box ``[0, bound]`` per objective."""
    v = np.asarray(_vals(o), dtype=float)
    return float(np.linalg.norm(v - np.clip(v, 0.0, np.asarray(pref.bounds))))


def rnd_sort_select(objectives: Sequence, size: int, pref: PreferenceRegion) -> list[int]:
    """Preference-based survivor selection; returns indices into ``objectives``.

    Whole non-dominated fronts are admitted while they fit; the remaining slots go
    to the leftover members nearest to the preference box (ties by index).
    """
    if len(objectives) < size:
        raise ValueError(f"need at least {size} candidates, got {len(objectives)}")
    chosen: list[int] = []
    for front in nd_sort(objectives):
        if len(chosen) + len(front) > size:
            break
        chosen.extend(front)
    if len(chosen) < size:
        taken = set(chosen)
        rest = [i for i in range(len(objectives)) if i not in taken]
        rest.sort(key=lambda i: (pref_distance(objectives[i], pref), i))
        chosen.extend(rest[:size - len(chosen)])
    return chosen


@dataclass(frozen=True)
class EAConfig:
    population: int = 10
    generations: int = 20
    n_bands: int = 3
    epsilon: float = 0.5
    region_fraction: float = 0.183
    sbx_eta: float = 15.0
    pm_eta: float = 20.0
    crossover_prob: float = 0.9
    mutation_prob: float | None = None  # None -> 1 / (2 n_bands), per gene
    band_shift_rate: float = 1.0
    master_seed: int = 0

    def __post_init__(self):
        if self.population < 2 or self.generations < 0 or self.n_bands < 1:
            raise ValueError("population must be >= 2, generations >= 0, n_bands >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.region_fraction <= 1.0:
            raise ValueError("region_fraction must lie in (0, 1]")
        if self.sbx_eta <= 0 or self.pm_eta <= 0 or self.band_shift_rate <= 0:
            raise ValueError("distribution indices and band_shift_rate must be positive")
        for p in (self.crossover_prob, self.mutation_rate):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")

    @property
    def mutation_rate(self) -> float:
        return 1.0 / (2 * self.n_bands) if self.mutation_prob is None else self.mutation_prob

    def region(self, height: int, width: int) -> LowFreqRegion:
        region = low_freq_region(height, width, self.region_fraction)
        if region.size < self.n_bands:
            raise ValueError(f"region of {region.size} bands cannot hold {self.n_bands} distinct bands")
        return region


# ---------------------------------------------------------------- variation

def random_trigger(region: LowFreqRegion, n: int, epsilon: float, rng: np.random.Generator) -> Trigger:
    pool = region.bands()
    picks = rng.choice(len(pool), size=n, replace=False)
    return Trigger(tuple(pool[i] for i in picks), tuple(rng.uniform(-epsilon, epsilon, n)),
                   epsilon, region)


def _repair_bands(bands: list, region: LowFreqRegion, rng: np.random.Generator) -> list:
    """Re-draw later duplicates uniformly among unused bands of the region."""
    seen, out = set(), []
    for b in bands:
        if b in seen:
            free = [c for c in region.bands() if c not in seen and c not in bands]
            b = free[rng.integers(len(free))]
        seen.add(b)
        out.append(b)
    return out


def sbx_spread(u: float, eta: float) -> float:
    if u <= 0.5:
        return (2.0 * u) ** (1.0 / (eta + 1.0))
    return (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta + 1.0))


def sbx_pair(a: float, b: float, u: float, eta: float) -> tuple[float, float]:
    """Unbounded SBX children; ``c1 + c2 == a + b`` for every ``u``."""
    beta = sbx_spread(u, eta)
    return (0.5 * ((1 + beta) * a + (1 - beta) * b),
            0.5 * ((1 - beta) * a + (1 + beta) * b))


def sbx_crossover(p1: Trigger, p2: Trigger, cfg: EAConfig, rng: np.random.Generator):
    if p1.n != p2.n or p1.epsilon != p2.epsilon or p1.region != p2.region:
        raise ValueError("parents must share n_bands, epsilon and region")
    m1, m2 = list(p1.magnitudes), list(p2.magnitudes)
    b1, b2 = list(p1.bands), list(p2.bands)
    if rng.random() < cfg.crossover_prob:
        for k in range(p1.n):
            if rng.random() < 0.5:
                m1[k], m2[k] = sbx_pair(m1[k], m2[k], rng.random(), cfg.sbx_eta)
            if rng.random() < 0.5:
                b1[k], b2[k] = b2[k], b1[k]
    eps = p1.epsilon
    kids = []
    for m, b in ((m1, b1), (m2, b2)):
        kids.append(p1.replace(bands=_repair_bands(b, p1.region, rng),
                               magnitudes=[min(max(v, -eps), eps) for v in m]))
    return kids[0], kids[1]


def polynomial_mutate(y: float, lo: float, hi: float, eta: float, r: float) -> float:
    """Bounded polynomial mutation of ``y`` within ``[lo, hi]`` driven by uniform draw ``r``."""
    span = hi - lo
    d1, d2 = (y - lo) / span, (hi - y) / span
    power = 1.0 / (eta + 1.0)
    if r < 0.5:
        val = 2.0 * r + (1.0 - 2.0 * r) * (1.0 - d1) ** (eta + 1.0)
        dq = val ** power - 1.0
    else:
        val = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * (1.0 - d2) ** (eta + 1.0)
        dq = 1.0 - val ** power
    return min(max(y + dq * span, lo), hi)


def sample_shift(rng: np.random.Generator, rate: float, size=None):
    """Band-shift magnitudes drawn from an exponential law with mean ``1 / rate``."""
    return rng.exponential(1.0 / rate, size)


def pm_mutation(t: Trigger, cfg: EAConfig, rng: np.random.Generator) -> Trigger:
    p = cfg.mutation_rate
    eps = t.epsilon
    mags = [polynomial_mutate(m, -eps, eps, cfg.pm_eta, rng.random()) if rng.random() < p else m
            for m in t.magnitudes]
    bands = []
    for u, v in t.bands:
        if rng.random() < p:
            du, dv = np.round(sample_shift(rng, cfg.band_shift_rate, 2)).astype(int)
            su, sv = rng.choice((-1, 1), size=2)
            u = min(max(u + su * du, 0), t.region.rows - 1)
            v = min(max(v + sv * dv, 0), t.region.cols - 1)
        bands.append((int(u), int(v)))
    if bands == list(t.bands) and mags == list(t.magnitudes):
        return t
    return t.replace(bands=_repair_bands(bands, t.region, rng), magnitudes=mags)


def variation(parents: Sequence[Trigger], cfg: EAConfig, rng: np.random.Generator) -> list[Trigger]:
    """Produce ``len(parents)`` offspring by random pairing, SBX and PM."""
    size = len(parents)
    kids: list[Trigger] = []
    while len(kids) < size:
        order = rng.permutation(size)
        for j in range(0, size - 1, 2):
            c1, c2 = sbx_crossover(parents[order[j]], parents[order[j + 1]], cfg, rng)
            kids.extend((pm_mutation(c1, cfg, rng), pm_mutation(c2, cfg, rng)))
    return kids[:size]


# ---------------------------------------------------------------- main loop

@dataclass
class Member:
    trigger: Trigger
    objectives: ObjectiveVector
    pref_distance: float = 0.0


@dataclass
class Population:
    generation: int
    members: list[Member] = field(default_factory=list)

    @property
    def capacity(self) -> int:
        return len(self.members)


@dataclass
class SearchProblem:
    """Everything a trigger evaluation needs besides the trigger itself."""

    x: np.ndarray
    y: np.ndarray
    spec: PoisonSpec
    base: Classifier
    train_cfg: TrainConfig
    o1_support: str = "union"
    threads: int = 1

    def evaluate(self, triggers: Sequence[Trigger], seed: int, tag: int, gen: int) -> list[ObjectiveVector]:
        def one(i):
            rng = np.random.default_rng([seed, tag, gen, i])
            cfg = TrainConfig(self.train_cfg.learning_rate, self.train_cfg.epochs,
                              self.train_cfg.batch_size, int(rng.integers(2 ** 31)))
            t = triggers[i]
            o1, rep = evaluate_trigger(self.base, self.x, self.y, self.spec, t, cfg, rng,
                                       self.o1_support)
            return ObjectiveVector(o1, objective_stealth(t), objective_lowfreq(t), rep.asr, rep.acc)

        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                return list(pool.map(one, range(len(triggers))))
        return [one(i) for i in range(len(triggers))]


def select_best(objectives: Sequence) -> int:
    """Index closest to the ideal point after per-objective min-max normalisation."""
    vals = np.array([_vals(o) for o in objectives], dtype=float)
    lo, hi = vals.min(axis=0), vals.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    d = np.linalg.norm((vals - lo) / span, axis=1)
    return int(np.argmin(d))


@dataclass
class SearchResult:
    history: list[Population]
    best: Trigger
    best_objectives: ObjectiveVector


_TAG_INIT, _TAG_VARY, _TAG_EVAL = 1, 2, 3


def optimize(problem: SearchProblem, cfg: EAConfig, pref: PreferenceRegion,
             on_generation: Callable[[Population], None] | None = None) -> SearchResult:
    h, w = problem.x.shape[1:3]
    region = cfg.region(h, w)
    seed = cfg.master_seed
    init_rng = np.random.default_rng([seed, _TAG_INIT])
    triggers = [random_trigger(region, cfg.n_bands, cfg.epsilon, init_rng) for _ in range(cfg.population)]
    objs = problem.evaluate(triggers, seed, _TAG_EVAL, 0)

    def snapshot(gen, ts, os_):
        pop = Population(gen, [Member(t, o, pref_distance(o, pref)) for t, o in zip(ts, os_)])
        if on_generation is not None:
            on_generation(pop)
        return pop

    history = [snapshot(0, triggers, objs)]
    for gen in range(cfg.generations):
        kids = variation(triggers, cfg, np.random.default_rng([seed, _TAG_VARY, gen]))
        kid_objs = problem.evaluate(kids, seed, _TAG_EVAL, gen + 1)
        pool_t, pool_o = triggers + kids, objs + kid_objs
        keep = rnd_sort_select(pool_o, cfg.population, pref)
        triggers = [pool_t[i] for i in keep]
        objs = [pool_o[i] for i in keep]
        history.append(snapshot(gen + 1, triggers, objs))
    best = select_best(objs)
    return SearchResult(history, triggers[best], objs[best])


# ---------------------------------------------------------------- scalarized baseline

def _minmax(v: np.ndarray) -> np.ndarray:
    lo, hi = v.min(), v.max()
    return np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)


def scalarized_scores(objectives: Sequence[ObjectiveVector], alpha: float) -> np.ndarray:
    o1 = np.array([o.o1 for o in objectives])
    o2 = np.array([o.o2 for o in objectives])
    return alpha * _minmax(o1) + (1.0 - alpha) * _minmax(o2)


def scalarized_search(problem: SearchProblem, cfg: EAConfig, alpha: float):
    """Single-objective EA on ``alpha * O1 + (1 - alpha) * O2`` (both min-max normalised).

    Returns ``(trigger, objectives)`` of the best final member.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    h, w = problem.x.shape[1:3]
    region = cfg.region(h, w)
    seed = cfg.master_seed
    init_rng = np.random.default_rng([seed, _TAG_INIT])
    triggers = [random_trigger(region, cfg.n_bands, cfg.epsilon, init_rng) for _ in range(cfg.population)]
    objs = problem.evaluate(triggers, seed, _TAG_EVAL, 0)
    for gen in range(cfg.generations):
        kids = variation(triggers, cfg, np.random.default_rng([seed, _TAG_VARY, gen]))
        kid_objs = problem.evaluate(kids, seed, _TAG_EVAL, gen + 1)
        pool_t, pool_o = triggers + kids, objs + kid_objs
        keep = np.argsort(scalarized_scores(pool_o, alpha), kind="stable")[:cfg.population]
        triggers = [pool_t[i] for i in keep]
        objs = [pool_o[i] for i in keep]
    best = int(np.argmin(scalarized_scores(objs, alpha)))
    return triggers[best], objs[best]


def scalarized_baseline(problem: SearchProblem, cfg: EAConfig, alphas: Sequence[float],
                        repeats: int = 1) -> list[dict]:
    """Sweep the effectiveness/stealth weight; one row per (alpha, repeat)."""
    rows = []
    for alpha in alphas:
        for rep in range(repeats):
            run_cfg = EAConfig(**{**cfg.__dict__, "master_seed": cfg.master_seed + rep})
            t, o = scalarized_search(problem, run_cfg, alpha)
            rows.append({"alpha": float(alpha), "repeat": rep, "afr": 1.0 - o.asr / 100.0,
                         "l2": o.o2, "o1": o.o1, "asr": o.asr})
    return rows

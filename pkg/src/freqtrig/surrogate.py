"""Small numpy classifiers trained by mini-batch SGD, used as surrogate and victim models."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .trigger import PoisonSpec, Trigger, poison_dataset

ARCHES = ("logistic", "mlp")
INPUT_OFFSET = 0.5  # pixels are centred before the first layer


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss during epoch {epoch}")
        self.epoch = epoch


@dataclass
class Classifier:
    arch: str
    input_dim: int
    num_classes: int
    hidden: int
    params: dict[str, np.ndarray] = field(repr=False)

    def copy(self) -> "Classifier":
        return replace(self, params={k: v.copy() for k, v in self.params.items()})

    def param_names(self) -> list[str]:
        return ["W", "b"] if self.arch == "logistic" else ["W1", "b1", "W2", "b2"]


def _glorot(rng, fan_in, fan_out):
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out))


def init_classifier(arch: str, input_dim: int, num_classes: int, hidden: int = 64,
                    seed: int = 0) -> Classifier:
    if arch not in ARCHES:
        raise ValueError(f"unknown architecture {arch!r}; choose from {ARCHES}")
    rng = np.random.default_rng(seed)
    if arch == "logistic":
        params = {"W": _glorot(rng, input_dim, num_classes), "b": np.zeros(num_classes)}
        hidden = 0
    else:
        params = {"W1": _glorot(rng, input_dim, hidden), "b1": np.zeros(hidden),
                  "W2": _glorot(rng, hidden, num_classes), "b2": np.zeros(num_classes)}
    return Classifier(arch, input_dim, num_classes, hidden, params)


def _flatten(model: Classifier, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
    if x.shape[1] != model.input_dim:
        raise ValueError(f"model expects {model.input_dim} inputs, got {x.shape[1]}")
    return x - INPUT_OFFSET


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def logits(model: Classifier, x: np.ndarray) -> np.ndarray:
    a = _flatten(model, x)
    p = model.params
    if model.arch == "logistic":
        return a @ p["W"] + p["b"]
    h = np.maximum(a @ p["W1"] + p["b1"], 0.0)
    return h @ p["W2"] + p["b2"]


def predict(model: Classifier, x: np.ndarray) -> np.ndarray:
    return np.argmax(logits(model, x), axis=1)


def cross_entropy(model: Classifier, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-sample cross-entropy of the softmax outputs."""
    z = logits(model, x)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -logp[np.arange(len(y)), y]


def loss_and_grads(model: Classifier, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over the batch and its gradient w.r.t. every parameter."""
    return _loss_and_grads(model, _flatten(model, x), np.asarray(y))


def _loss_and_grads(model: Classifier, a: np.ndarray, y: np.ndarray):
    n = len(y)
    p = model.params
    if model.arch == "logistic":
        z = a @ p["W"] + p["b"]
    else:
        pre = a @ p["W1"] + p["b1"]
        h = np.maximum(pre, 0.0)
        z = h @ p["W2"] + p["b2"]
    probs = softmax(z)
    loss = float(-np.mean(np.log(np.maximum(probs[np.arange(n), y], 1e-300))))
    dz = probs
    dz[np.arange(n), y] -= 1.0
    dz /= n
    if model.arch == "logistic":
        return loss, {"W": a.T @ dz, "b": dz.sum(axis=0)}
    dh = (dz @ p["W2"].T) * (pre > 0)
    return loss, {"W1": a.T @ dh, "b1": dh.sum(axis=0), "W2": h.T @ dz, "b2": dz.sum(axis=0)}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs < 0:
            raise ValueError(f"invalid training config {self}")


def train(model: Classifier, x: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> Classifier:
    """Mini-batch SGD on mean cross-entropy. Returns a new model; the input is left untouched."""
    y = np.asarray(y)
    if len(y) == 0:
        raise ValueError("cannot train on an empty dataset")
    if y.min() < 0 or y.max() >= model.num_classes:
        raise ValueError("labels out of range for this model")
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    a = _flatten(model, x)
    n = len(y)
    with np.errstate(over="ignore", invalid="ignore"):
        _sgd(model, a, y, cfg, rng, n)
    return model


def _sgd(model, a, y, cfg, rng, n):
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grads = _loss_and_grads(model, a[batch], y[batch])
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch)
            for k, g in grads.items():
                model.params[k] -= cfg.learning_rate * g
        if not all(np.all(np.isfinite(v)) for v in model.params.values()):
            raise TrainingDiverged(epoch)


@dataclass(frozen=True)
class EvalReport:
    acc: float   # % of clean samples classified correctly
    asr: float   # % of eligible poisoned samples classified as the target; nan if none eligible
    loss: float  # mean cross-entropy over the objective's support set


def accuracy(model: Classifier, x: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        raise ValueError("accuracy is undefined on an empty set")
    return 100.0 * float(np.mean(predict(model, x) == np.asarray(y)))


def attack_success_rate(model: Classifier, poison_x: np.ndarray, source_y: np.ndarray,
                        target: int) -> float:
    """Share of poisoned inputs, originally not of the target class, predicted as the target."""
    eligible = np.asarray(source_y) != target
    if not eligible.any():
        return float("nan")
    return 100.0 * float(np.mean(predict(model, np.asarray(poison_x)[eligible]) == target))


def loss_and_metrics(model: Classifier, clean_x, clean_y, poison_x, poison_y, source_y,
                     target: int) -> EvalReport:
    xs = [a for a in (clean_x, poison_x) if len(a)]
    if not xs:
        raise ValueError("clean and poisoned sets are both empty")
    x_all = np.concatenate(xs)
    y_all = np.concatenate([a for a in (clean_y, poison_y) if len(a)])
    loss = float(np.mean(cross_entropy(model, x_all, y_all)))
    return EvalReport(accuracy(model, clean_x, clean_y),
                      attack_success_rate(model, poison_x, source_y, target), loss)


def evaluate_trigger(base: Classifier, x: np.ndarray, y: np.ndarray, spec: PoisonSpec,
                     trigger: Trigger, cfg: TrainConfig, rng: np.random.Generator,
                     o1_support: str = "union") -> tuple[float, EvalReport]:
    """Fine-tune a copy of ``base`` on data poisoned with ``trigger``; return (O1, report).

    ``o1_support`` is ``"union"`` (clean plus poisoned samples) or ``"poisoned"``.
    ``base`` is never modified.
    """
    if o1_support not in ("union", "poisoned"):
        raise ValueError(f"unknown O1 support {o1_support!r}")
    split = poison_dataset(x, y, spec, trigger, rng)
    tuned = train(base, np.concatenate([split.clean_x, split.poison_x]),
                  np.concatenate([split.clean_y, split.poison_y]), cfg)
    report = loss_and_metrics(tuned, split.clean_x, split.clean_y, split.poison_x,
                              split.poison_y, split.source_y, spec.target_label)
    if o1_support == "poisoned":
        o1 = float(np.mean(cross_entropy(tuned, split.poison_x, split.poison_y)))
        report = replace(report, loss=o1)
    return report.loss, report


# checkpoint: magic, u8 arch, u32 input_dim, u32 hidden, u32 classes, then float64 params
_MAGIC = b"FTCK"
_HEADER = struct.Struct("<4sBIII")


def save_checkpoint(model: Classifier, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, ARCHES.index(model.arch), model.input_dim,
                              model.hidden, model.num_classes))
        for name in model.param_names():
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())


def load_checkpoint(path) -> Classifier:
    raw = Path(path).read_bytes()
    magic, tag, input_dim, hidden, classes = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a classifier checkpoint")
    if tag >= len(ARCHES):
        raise ValueError(f"{path}: unknown architecture tag {tag}")
    model = init_classifier(ARCHES[tag], input_dim, classes, hidden or 1)
    model.hidden = hidden
    offset = _HEADER.size
    for name in model.param_names():
        shape = model.params[name].shape
        count = int(np.prod(shape))
        model.params[name] = np.frombuffer(raw, dtype="<f8", count=count,
                                           offset=offset).reshape(shape).astype(np.float64)
        offset += 8 * count
    if offset != len(raw):
        raise ValueError(f"{path}: trailing or missing bytes in checkpoint")
    return model

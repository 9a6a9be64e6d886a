"""FGSM and l-infinity PGD in pixel space.

Works with any model exposing ``loss_and_input_grad(X, y)`` (per-example
cross-entropy and its pixel gradient), ``probabilities(X)`` and
``predict(X)``. Pixels live in ``[0, 1]``; every iterate is projected onto
the intersection of the ``epsilon`` ball around the original and that box.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import CapabilityError, ConfigurationError, FormatError, QRobustError
from .optim import cross_entropy_batch

PGD_STEP_SCALE = 2.5


@dataclass(frozen=True)
class AttackConfig:
    kind: str = "pgd"
    epsilon: float = 0.1
    steps: int = 20
    step_size: float | None = None  # None -> 2.5 * epsilon / steps
    random_start: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("fgsm", "pgd"):
            raise ConfigurationError(f"unknown attack kind {self.kind!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigurationError(f"epsilon {self.epsilon} outside [0, 1]")
        if self.steps < 1:
            raise ConfigurationError("steps must be >= 1")
        if self.step_size is not None and self.step_size <= 0:
            raise ConfigurationError("step_size must be > 0")
        if self.kind == "pgd" and self.steps * self.alpha < self.epsilon:
            warnings.warn(f"PGD cannot reach the budget: {self.steps} x {self.alpha} < {self.epsilon}", stacklevel=3)

    @property
    def alpha(self) -> float:
        if self.kind == "fgsm":
            return self.epsilon
        return self.step_size if self.step_size is not None else PGD_STEP_SCALE * self.epsilon / self.steps

    def to_dict(self):
        return asdict(self)


def _input_grad(model, X, y):
    if not hasattr(model, "loss_and_input_grad"):
        raise CapabilityError(f"{type(model).__name__} does not expose input gradients")
    return model.loss_and_input_grad(X, y)


def _step(x, x0, direction, alpha, epsilon):
    x = np.clip(x + alpha * direction, x0 - epsilon, x0 + epsilon)
    return np.clip(x, 0.0, 1.0)


def fgsm_batch(model, X, y, epsilon):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _, g = _input_grad(model, X, y)
    return _step(X, X, np.sign(g), epsilon, epsilon)


def pgd_batch(model, X, y, config: AttackConfig):
    """Returns the final iterate and the loss at every iterate, shape ``(steps + 1, batch)``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    eps, alpha = config.epsilon, config.alpha
    x = X
    if config.random_start and eps > 0:
        rng = np.random.default_rng(config.seed)
        x = np.clip(X + rng.uniform(-eps, eps, size=X.shape), 0.0, 1.0)
    losses = []
    for _ in range(config.steps):
        loss, g = _input_grad(model, x, y)
        losses.append(loss)
        x = _step(x, X, np.sign(g), alpha, eps)
    losses.append(cross_entropy_batch(model.probabilities(x), y))
    return x, np.array(losses)


def run_attack(model, X, y, config: AttackConfig):
    if config.kind == "fgsm":
        return fgsm_batch(model, X, y, config.epsilon)
    return pgd_batch(model, X, y, config)[0]


@dataclass
class AdversarialExample:
    original: np.ndarray
    perturbed: np.ndarray
    delta: np.ndarray
    label: int
    source_model: str
    config: AttackConfig
    original_prediction: int
    adversarial_prediction: int
    loss_history: np.ndarray | None = None


def _example(model, x, label, perturbed, config, losses=None):
    preds = model.predict(np.stack([x, perturbed]))
    return AdversarialExample(x, perturbed, perturbed - x, int(label), getattr(model, "name", ""), config,
                              int(preds[0]), int(preds[1]), losses)


def fgsm(model, x, label, epsilon) -> AdversarialExample:
    x = np.asarray(x, dtype=np.float64).ravel()
    adv = fgsm_batch(model, x[None, :], np.array([label]), epsilon)[0]
    return _example(model, x, label, adv, AttackConfig("fgsm", epsilon, 1))


def pgd(model, x, label, config: AttackConfig) -> AdversarialExample:
    x = np.asarray(x, dtype=np.float64).ravel()
    adv, losses = pgd_batch(model, x[None, :], np.array([label]), config)
    return _example(model, x, label, adv[0], config, losses[:, 0])


@dataclass
class AttackSet:
    """A batch of adversarial examples generated against one source model."""

    source_model: str
    config: AttackConfig
    image_shape: tuple
    original: np.ndarray
    perturbed: np.ndarray
    labels: np.ndarray
    clean_predictions: np.ndarray
    adversarial_predictions: np.ndarray
    failures: list = field(default_factory=list)

    def __len__(self):
        return len(self.labels)

    @property
    def delta(self):
        return self.perturbed - self.original

    @property
    def clean_accuracy(self) -> float:
        return float(np.mean(self.clean_predictions == self.labels))

    @property
    def adversarial_accuracy(self) -> float:
        return float(np.mean(self.adversarial_predictions == self.labels))

    def summary(self) -> dict:
        return {
            "source_model": self.source_model,
            "epsilon": self.config.epsilon,
            "kind": self.config.kind,
            "n_examples": len(self),
            "clean_accuracy": self.clean_accuracy,
            "adversarial_accuracy": self.adversarial_accuracy,
            "failures": len(self.failures),
        }

    def examples(self):
        for i in range(len(self)):
            yield AdversarialExample(self.original[i], self.perturbed[i], self.delta[i], int(self.labels[i]),
                                     self.source_model, self.config, int(self.clean_predictions[i]),
                                     int(self.adversarial_predictions[i]))

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        block = np.stack([self.original, self.perturbed], axis=1).astype("<f8")
        (d / "pixels.f64").write_bytes(block.tobytes())
        manifest = {
            "format": "qrobust-attack-set/1",
            "source_model": self.source_model,
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "image_shape": list(self.image_shape),
            "n_examples": len(self),
            "pixels": "pixels.f64",
            "pixel_layout": "float64 little-endian, [example][original|perturbed][row-major pixel]",
            "labels": self.labels.tolist(),
            "clean_predictions": self.clean_predictions.tolist(),
            "adversarial_predictions": self.adversarial_predictions.tolist(),
            "failures": self.failures,
            "summary": self.summary(),
        }
        (d / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> AttackSet:
        d = Path(directory)
        try:
            m = json.loads((d / "manifest.json").read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"{d}: unreadable manifest: {exc}") from None
        if m.get("format") != "qrobust-attack-set/1":
            raise FormatError(f"{d}: unknown attack-set format {m.get('format')!r}")
        n, shape = m["n_examples"], tuple(m["image_shape"])
        p = int(np.prod(shape))
        raw = (d / m["pixels"]).read_bytes()
        if len(raw) != n * 2 * p * 8:
            raise FormatError(f"{d / m['pixels']}: expected {n * 2 * p * 8} bytes, found {len(raw)}")
        block = np.frombuffer(raw, dtype="<f8").reshape(n, 2, p).astype(np.float64)
        return cls(m["source_model"], AttackConfig(**m["config"]), shape, block[:, 0], block[:, 1],
                   np.array(m["labels"], dtype=np.int64), np.array(m["clean_predictions"], dtype=np.int64),
                   np.array(m["adversarial_predictions"], dtype=np.int64), m.get("failures", []))


def attack_batch(model, dataset, config: AttackConfig, chunk: int = 250) -> AttackSet:
    """Attack every example of ``dataset``; failing examples are kept unperturbed and listed."""
    if len(dataset) == 0:
        raise ConfigurationError("empty dataset slice")
    X, y = dataset.X, dataset.labels
    adv = X.copy()
    failures = []
    for start in range(0, len(y), chunk):
        sl = slice(start, start + chunk)
        try:
            adv[sl] = run_attack(model, X[sl], y[sl], config)
        except QRobustError:
            for i in range(start, min(start + chunk, len(y))):
                try:
                    adv[i] = run_attack(model, X[i:i + 1], y[i:i + 1], config)[0]
                except QRobustError as exc:
                    failures.append({"index": i, "error": exc.category, "message": str(exc)})
    return AttackSet(getattr(model, "name", ""), config, tuple(dataset.shape), X.copy(), adv, y.copy(),
                     predict_chunked(model, X), predict_chunked(model, adv), failures)


def predict_chunked(model, X, chunk: int = 250) -> np.ndarray:
    return np.concatenate([model.predict(X[i:i + chunk]) for i in range(0, len(X), chunk)])


def replay(attack_set: AttackSet, model) -> float:
    """Accuracy of ``model`` on the stored perturbed images."""
    return float(np.mean(predict_chunked(model, attack_set.perturbed) == attack_set.labels))

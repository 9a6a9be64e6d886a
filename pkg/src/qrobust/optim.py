"""Adam and the cross-entropy / softmax helpers shared by both model families."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError

LOG_FLOOR = 1e-12


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ConfigurationError(f"param shape {params.shape} != grad shape {grads.shape}")
    m = np.zeros_like(params) if state.m is None else state.m
    v = np.zeros_like(params) if state.v is None else state.v
    if m.shape != params.shape:
        raise ConfigurationError(f"moment shape {m.shape} != param shape {params.shape}")
    t = state.t + 1
    m = state.beta1 * m + (1.0 - state.beta1) * grads
    v = state.beta2 * v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, AdamState(state.lr, state.beta1, state.beta2, state.eps, t, m, v)


@dataclass
class Adam:
    """Adam over a list of arrays, updated in place."""

    params: list
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: list = field(init=False)

    def __post_init__(self):
        self.states = [AdamState(self.lr, self.beta1, self.beta2, self.eps) for _ in self.params]

    def step(self, grads):
        for i, (p, g) in enumerate(zip(self.params, grads)):
            new, self.states[i] = adam_step(p, g, self.states[i])
            p[...] = new


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def check_labels(labels, m: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= m):
        raise DataError(f"label out of range for {m} classes")
    return labels.astype(np.int64)


def cross_entropy(probs, label: int) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= label < probs.shape[-1]:
        raise DataError(f"label {label} out of range for {probs.shape[-1]} classes")
    return float(-np.log(max(probs[label], LOG_FLOOR)))


def cross_entropy_batch(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-example clamped cross-entropy."""
    labels = check_labels(labels, probs.shape[1])
    p = probs[np.arange(labels.size), labels]
    return -np.log(np.maximum(p, LOG_FLOOR))


def softmax_xent_grad(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d(per-example loss)/d(logits) = probs - onehot, zeroed where the floor clamps."""
    g = probs.copy()
    rows = np.arange(labels.size)
    g[rows, labels] -= 1.0
    g[probs[rows, labels] < LOG_FLOOR] = 0.0
    return g

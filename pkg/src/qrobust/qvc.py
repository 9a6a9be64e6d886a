"""Quantum variational classifier.

Amplitude-encode the image, run ``layers`` blocks of (Rot on every qubit,
then an open chain of nearest-neighbour CZs), read ``<Z>`` on the first
``num_classes`` qubits. The class is the argmax of the readouts; training
uses cross-entropy on ``softmax(readouts / temperature)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import grad, kernels
from .checkpoint import write_checkpoint
from .encoding import encode_batch, encode_vjp_batch
from .errors import ConfigurationError
from .optim import check_labels, cross_entropy_batch, softmax, softmax_xent_grad
from .sim import CZ, Gate, Rot


@dataclass
class QvcModel:
    num_qubits: int
    num_layers: int
    num_classes: int
    thetas: np.ndarray
    temperature: float = 1.0
    seed: int | None = None
    name: str = "qvc"
    family: str = field(default="qvc", init=False)

    def __post_init__(self):
        if self.num_classes > self.num_qubits:
            raise ConfigurationError(f"{self.num_classes} classes need at least as many qubits (have {self.num_qubits})")
        self.thetas = np.asarray(self.thetas, dtype=np.float64).reshape(self.num_layers, self.num_qubits, 3)

    @classmethod
    def init(cls, num_qubits: int, num_layers: int, num_classes: int, seed: int = 0,
             temperature: float = 1.0, name: str = "qvc") -> QvcModel:
        rng = np.random.default_rng(seed)
        thetas = rng.uniform(0.0, 2.0 * np.pi, size=(num_layers, num_qubits, 3))
        return cls(num_qubits, num_layers, num_classes, thetas, temperature, seed, name)

    @property
    def num_params(self) -> int:
        return self.thetas.size

    @property
    def gates_per_layer(self) -> int:
        # a Rot counts as its three elementary rotations
        return 3 * self.num_qubits + (self.num_qubits - 1)

    def layer_circuits(self) -> list[list[Gate]]:
        layers = []
        for angles in self.thetas:
            gates = [Rot(phi, theta, omega, q) for q, (phi, theta, omega) in enumerate(angles)]
            gates += [CZ(q, q + 1) for q in range(self.num_qubits - 1)]
            layers.append(gates)
        return layers

    def circuit(self) -> list[Gate]:
        return [g for layer in self.layer_circuits() for g in layer]

    def parameters(self):
        return [self.thetas]

    def _tape(self, X):
        return grad.record(self.circuit(), encode_batch(X, self.num_qubits))

    def scores(self, X) -> np.ndarray:
        """Z readouts of the first ``num_classes`` qubits, shape ``(batch, m)``."""
        tape = self._tape(X)
        return kernels.z_expectations(tape.forward_final_state, self.num_classes)

    def probabilities(self, X) -> np.ndarray:
        return softmax(self.scores(X) / self.temperature)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.scores(X), axis=1)

    def _loss_and_tape(self, X, y):
        y = check_labels(y, self.num_classes)
        tape = self._tape(X)
        r = kernels.z_expectations(tape.forward_final_state, self.num_classes)
        probs = softmax(r / self.temperature)
        losses = cross_entropy_batch(probs, y)
        dscores = softmax_xent_grad(probs, y) / self.temperature
        return losses, dscores, tape

    def loss_and_grads(self, X, y):
        """Mean cross-entropy over the batch and its gradient w.r.t. ``thetas``."""
        losses, dscores, tape = self._loss_and_tape(X, y)
        g, _ = grad.backward(tape, dscores / len(losses))
        return float(losses.mean()), [g.sum(axis=0).reshape(self.thetas.shape)]

    def loss_and_input_grad(self, X, y):
        """Per-example loss and d(loss_i)/d(pixels_i)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        losses, dscores, tape = self._loss_and_tape(X, y)
        _, gin = grad.backward(tape, dscores, want_params=False, want_input=True)
        return losses, encode_vjp_batch(X, gin.real)

    def header(self) -> dict:
        return {
            "family": "qvc",
            "name": self.name,
            "num_qubits": self.num_qubits,
            "layers": self.num_layers,
            "num_classes": self.num_classes,
            "temperature": self.temperature,
            "seed": self.seed,
        }

    def save(self, path) -> None:
        write_checkpoint(path, self.header(), [self.thetas])

    @classmethod
    def from_checkpoint(cls, header, arrays) -> QvcModel:
        return cls(header["num_qubits"], header["layers"], header["num_classes"], arrays[0],
                   header.get("temperature", 1.0), header.get("seed"), header.get("name", "qvc"))


def forward(model: QvcModel, x):
    """Readouts and class probabilities for a single image."""
    r = model.scores(np.asarray(x, dtype=np.float64).ravel()[None, :])[0]
    return r, softmax(r / model.temperature)


def predict(model: QvcModel, x) -> int:
    return int(np.argmax(forward(model, x)[0]))


def loss_and_grads(model: QvcModel, batch):
    X, y = batch
    loss, (g,) = model.loss_and_grads(X, y)
    return loss, g

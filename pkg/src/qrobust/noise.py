"""Noise channels for QVC evaluation.

Noise is inserted after every layer of the circuit. The single-qubit
channels (``depolarizing``, ``amplitude_damping``, ``bit_flip``) act on each
qubit in turn; ``global_depolarizing`` replaces the whole register by the
maximally mixed state with probability ``p``.

Pure-state Monte Carlo trajectories are the working simulator; an exact
density-matrix evolution (small registers only) serves as the oracle.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .encoding import encode_batch
from .errors import CapacityError, ConfigurationError
from .sim import Gate, StateVector, apply_inplace, check_wires, z_signs

KINDS = ("depolarizing", "global_depolarizing", "amplitude_damping", "bit_flip")
DM_MAX_QUBITS = 5
CSV_COLUMNS = ("noise_kind", "strength", "trajectories", "accuracy", "ci_low", "ci_high")

_I = np.eye(2, dtype=np.complex128)
_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
_Z = np.diag([1.0, -1.0]).astype(np.complex128)


def kraus_operators(kind: str, strength: float) -> list[np.ndarray]:
    p = strength
    if kind == "bit_flip":
        return [np.sqrt(1 - p) * _I, np.sqrt(p) * _X]
    if kind == "depolarizing":
        return [np.sqrt(1 - 3 * p / 4) * _I] + [np.sqrt(p / 4) * P for P in (_X, _Y, _Z)]
    if kind == "amplitude_damping":
        return [np.array([[1, 0], [0, np.sqrt(1 - p)]], dtype=np.complex128),
                np.array([[0, np.sqrt(p)], [0, 0]], dtype=np.complex128)]
    raise ConfigurationError(f"{kind!r} has no single-qubit Kraus form")


@dataclass(frozen=True)
class NoiseModel:
    kind: str
    strength: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.strength <= 1.0:
            raise ConfigurationError(f"noise strength {self.strength} outside [0, 1]")
        if self.kind != "global_depolarizing":
            ks = kraus_operators(self.kind, self.strength)
            total = sum(k.conj().T @ k for k in ks)
            if not np.allclose(total, _I, atol=1e-12):
                raise ConfigurationError(f"Kraus set for {self.kind} is not complete")

    @property
    def kraus(self):
        return kraus_operators(self.kind, self.strength)


def _as_layers(circuit) -> list[list[Gate]]:
    circuit = list(circuit)
    if circuit and isinstance(circuit[0], Gate):
        return [circuit]
    return [list(layer) for layer in circuit]


def _channel_rows(psi: np.ndarray, noise: NoiseModel, rng: np.random.Generator) -> None:
    """One trajectory step of ``noise`` on every row of ``psi`` (in place)."""
    batch, dim = psi.shape
    n = dim.bit_length() - 1
    if noise.strength == 0.0:
        return
    if noise.kind == "global_depolarizing":
        hit = rng.random(batch) < noise.strength
        if hit.any():
            psi[hit] = 0.0
            psi[np.flatnonzero(hit), rng.integers(0, dim, hit.sum())] = 1.0
        return
    ks = noise.kraus
    rows = np.arange(batch)
    for q in range(n):
        branches = []
        for k in ks:
            b = psi.copy()
            kernels.apply_1q(b, k, q)
            branches.append(b)
        probs = np.stack([np.einsum("bi,bi->b", b.conj(), b).real for b in branches], axis=1)
        cum = np.cumsum(probs, axis=1)
        u = rng.random(batch) * cum[:, -1]
        choice = np.minimum((u[:, None] >= cum).sum(axis=1), len(ks) - 1)
        stacked = np.stack(branches)
        chosen = stacked[choice, rows]
        psi[...] = chosen / np.sqrt(probs[rows, choice])[:, None]


def run_trajectories(circuit, noise: NoiseModel | None, psi_in: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Evolve a ``(batch, 2**n)`` block, one independent trajectory per row."""
    psi = np.array(psi_in, dtype=np.complex128, order="C", copy=True)
    for layer in _as_layers(circuit):
        for g in layer:
            apply_inplace(psi, g)
        if noise is not None:
            _channel_rows(psi, noise, rng)
    return psi


def apply_channel_trajectory(state: StateVector, model: NoiseModel, rng: np.random.Generator) -> StateVector:
    psi = state.amplitudes.copy().reshape(1, -1)
    _channel_rows(psi, model, rng)
    return StateVector(state.num_qubits, psi[0])


def trajectory_expectations(circuit, noise: NoiseModel | None, input_state: StateVector, trajectories: int,
                            seed: int = 0, m: int | None = None):
    """Mean ``<Z_k>`` over trajectories and its standard error."""
    m = input_state.num_qubits if m is None else m
    rng = np.random.default_rng(seed)
    psi = np.repeat(input_state.amplitudes.reshape(1, -1), trajectories, axis=0)
    out = kernels.z_expectations(run_trajectories(circuit, noise, psi, rng), m)
    return out.mean(axis=0), out.std(axis=0, ddof=1) / np.sqrt(trajectories)


def _left(rho, op):
    # op acts in place on rows; applying it to rho^T transforms the ket index
    t = np.ascontiguousarray(rho.T)
    op(t)
    return t.T


def _conjugate(rho, op):
    """``A rho A^dagger`` for the operator ``A`` realised by ``op``."""
    a = _left(rho, op)
    return _left(a.conj().T, op).conj().T


def evolve_density_matrix(circuit, noise: NoiseModel | None, input_state: StateVector) -> np.ndarray:
    """Exact noisy evolution of ``rho = |psi><psi|``."""
    n = input_state.num_qubits
    if n > DM_MAX_QUBITS:
        raise CapacityError(f"density-matrix oracle limited to {DM_MAX_QUBITS} qubits, got {n}")
    layers = _as_layers(circuit)
    for layer in layers:
        for g in layer:
            check_wires(g, n)
    a = input_state.amplitudes
    rho = np.outer(a, a.conj())
    dim = rho.shape[0]
    for layer in layers:
        for g in layer:
            rho = _conjugate(rho, lambda t, g=g: apply_inplace(t, g))
        if noise is None or noise.strength == 0.0:
            continue
        if noise.kind == "global_depolarizing":
            rho = (1 - noise.strength) * rho + noise.strength * np.eye(dim) / dim
            continue
        for q in range(n):
            rho = sum(_conjugate(rho, lambda t, k=k: kernels.apply_1q(t, k, q)) for k in noise.kraus)
    return rho


def density_matrix_reference(circuit, noise: NoiseModel | None, input_state: StateVector, m: int | None = None):
    """Exact ``<Z_k>`` for the first ``m`` qubits (all by default)."""
    rho = evolve_density_matrix(circuit, noise, input_state)
    n = input_state.num_qubits
    return z_signs(n, n if m is None else m) @ np.real(np.diag(rho))


def wilson_interval(successes: int, total: int, z: float = 1.96):
    if total == 0:
        return float("nan"), float("nan")
    p = successes / total
    denom = 1 + z * z / total
    centre = (p + z * z / (2 * total)) / denom
    half = z * np.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / denom
    return float(centre - half), float(centre + half)


def noisy_predict(model, X, noise: NoiseModel | None, trajectories: int, rng) -> np.ndarray:
    """Argmax of trajectory-averaged readouts for each row of ``X``."""
    if noise is None or noise.strength == 0.0:
        return model.predict(X)
    layers = model.layer_circuits()
    psi = np.repeat(encode_batch(X, model.num_qubits), trajectories, axis=0)
    r = kernels.z_expectations(run_trajectories(layers, noise, psi, rng), model.num_classes)
    return np.argmax(r.reshape(len(X), trajectories, -1).mean(axis=1), axis=1)


def noisy_accuracy_sweep(model, dataset, grid: Sequence[NoiseModel], trajectories: int = 32, seed: int = 0,
                         chunk: int = 50) -> list[dict]:
    rows = []
    X, y = dataset.X, dataset.labels
    for cell, noise in enumerate(grid):
        rng = np.random.default_rng(np.random.SeedSequence([seed, cell]))
        preds = np.concatenate([noisy_predict(model, X[i:i + chunk], noise, trajectories, rng)
                                for i in range(0, len(y), chunk)])
        correct = int(np.sum(preds == y))
        lo, hi = wilson_interval(correct, len(y))
        rows.append({"noise_kind": noise.kind, "strength": noise.strength, "trajectories": trajectories,
                     "accuracy": correct / len(y), "ci_low": lo, "ci_high": hi})
    return rows


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})

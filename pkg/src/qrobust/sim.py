"""Exact state-vector simulation.

Conventions
-----------
Qubit 0 is the least significant bit of the basis-state index, so basis
state ``|i>`` has qubit ``q`` in state ``(i >> q) & 1``. Angles are radians.

``RY(t) = exp(-i t Y / 2)``, ``RZ(t) = exp(-i t Z / 2)`` and
``Rot(phi, theta, omega) = RZ(omega) RY(theta) RZ(phi)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import CapabilityError, ConfigurationError

GATE_KINDS = ("RZ", "RY", "Rot", "CZ", "X")
_PARAM_COUNT = {"RZ": 1, "RY": 1, "Rot": 3, "CZ": 0, "X": 0}
_WIRE_COUNT = {"RZ": 1, "RY": 1, "Rot": 1, "CZ": 2, "X": 1}


@dataclass(frozen=True)
class Gate:
    kind: str
    wires: tuple[int, ...]
    angles: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise CapabilityError(f"unsupported gate kind {self.kind!r}")
        if len(self.wires) != _WIRE_COUNT[self.kind]:
            raise ConfigurationError(f"{self.kind} takes {_WIRE_COUNT[self.kind]} wire(s), got {self.wires}")
        if len(self.angles) != _PARAM_COUNT[self.kind]:
            raise ConfigurationError(f"{self.kind} takes {_PARAM_COUNT[self.kind]} angle(s), got {self.angles}")
        if any(w < 0 for w in self.wires):
            raise ConfigurationError(f"negative wire index in {self.wires}")
        if self.kind == "CZ" and self.wires[0] == self.wires[1]:
            raise ConfigurationError("CZ wires must be distinct")

    @property
    def num_params(self) -> int:
        return _PARAM_COUNT[self.kind]

    def inverse(self) -> Gate:
        if self.kind == "Rot":
            phi, theta, omega = self.angles
            # (RZ(w) RY(t) RZ(p))^-1 = RZ(-p) RY(-t) RZ(-w)
            return Gate("Rot", self.wires, (-omega, -theta, -phi))
        return Gate(self.kind, self.wires, tuple(-a for a in self.angles))


def RZ(angle: float, wire: int) -> Gate:
    return Gate("RZ", (wire,), (float(angle),))


def RY(angle: float, wire: int) -> Gate:
    return Gate("RY", (wire,), (float(angle),))


def Rot(phi: float, theta: float, omega: float, wire: int) -> Gate:
    return Gate("Rot", (wire,), (float(phi), float(theta), float(omega)))


def CZ(control: int, target: int) -> Gate:
    return Gate("CZ", (control, target))


def PauliX(wire: int) -> Gate:
    return Gate("X", (wire,))


def rz_matrix(t: float) -> np.ndarray:
    e = np.exp(-0.5j * t)
    return np.array([[e, 0.0], [0.0, np.conj(e)]], dtype=np.complex128)


def ry_matrix(t: float) -> np.ndarray:
    c, s = np.cos(0.5 * t), np.sin(0.5 * t)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def rz_derivative(t: float) -> np.ndarray:
    e = np.exp(-0.5j * t)
    return np.array([[-0.5j * e, 0.0], [0.0, 0.5j * np.conj(e)]], dtype=np.complex128)


def ry_derivative(t: float) -> np.ndarray:
    c, s = np.cos(0.5 * t), np.sin(0.5 * t)
    return 0.5 * np.array([[-s, -c], [c, -s]], dtype=np.complex128)


def expand(gates: Sequence[Gate]) -> list[Gate]:
    """Decompose every Rot into RZ, RY, RZ (application order)."""
    out = []
    for g in gates:
        if g.kind == "Rot":
            phi, theta, omega = g.angles
            w = g.wires[0]
            out.extend((RZ(phi, w), RY(theta, w), RZ(omega, w)))
        else:
            out.append(g)
    return out


@dataclass
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ConfigurationError("num_qubits must be >= 1")
        self.amplitudes = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.num_qubits,):
            raise ConfigurationError(
                f"expected {1 << self.num_qubits} amplitudes, got shape {self.amplitudes.shape}"
            )

    @classmethod
    def zero(cls, num_qubits: int) -> StateVector:
        amps = np.zeros(1 << num_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(num_qubits, amps)

    @classmethod
    def basis(cls, num_qubits: int, index: int) -> StateVector:
        amps = np.zeros(1 << num_qubits, dtype=np.complex128)
        amps[index] = 1.0
        return cls(num_qubits, amps)

    def copy(self) -> StateVector:
        return StateVector(self.num_qubits, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def check_wires(gate: Gate, num_qubits: int) -> None:
    for w in gate.wires:
        if w >= num_qubits:
            raise ConfigurationError(f"wire {w} out of range for {num_qubits} qubits")


def apply_inplace(psi: np.ndarray, gate: Gate) -> None:
    """Apply ``gate`` to a ``(batch, 2**n)`` amplitude block in place."""
    kind = gate.kind
    if kind == "RZ":
        kernels.apply_1q(psi, rz_matrix(gate.angles[0]), gate.wires[0])
    elif kind == "RY":
        kernels.apply_1q(psi, ry_matrix(gate.angles[0]), gate.wires[0])
    elif kind == "Rot":
        phi, theta, omega = gate.angles
        u = rz_matrix(omega) @ ry_matrix(theta) @ rz_matrix(phi)
        kernels.apply_1q(psi, u, gate.wires[0])
    elif kind == "CZ":
        kernels.apply_cz(psi, gate.wires[0], gate.wires[1])
    elif kind == "X":
        kernels.apply_x(psi, gate.wires[0])
    else:  # pragma: no cover - Gate validates kind
        raise CapabilityError(kind)


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    check_wires(gate, state.num_qubits)
    psi = state.amplitudes.copy().reshape(1, -1)
    apply_inplace(psi, gate)
    return StateVector(state.num_qubits, psi[0])


def apply_circuit(state: StateVector, circuit: Sequence[Gate]) -> StateVector:
    for g in circuit:
        check_wires(g, state.num_qubits)
    psi = state.amplitudes.copy().reshape(1, -1)
    for g in circuit:
        apply_inplace(psi, g)
    return StateVector(state.num_qubits, psi[0])


def inverse_circuit(circuit: Sequence[Gate]) -> list[Gate]:
    return [g.inverse() for g in reversed(circuit)]


def expectation_z(state: StateVector, qubit: int) -> float:
    if not 0 <= qubit < state.num_qubits:
        raise ConfigurationError(f"qubit {qubit} out of range for {state.num_qubits} qubits")
    probs = np.abs(state.amplitudes) ** 2
    sign = 1.0 - 2.0 * ((np.arange(probs.size) >> qubit) & 1)
    return float(probs @ sign)


def z_signs(num_qubits: int, m: int) -> np.ndarray:
    """``(m, 2**n)`` table of Z eigenvalues, row k for qubit k."""
    idx = np.arange(1 << num_qubits)
    return 1.0 - 2.0 * ((idx[None, :] >> np.arange(m)[:, None]) & 1)

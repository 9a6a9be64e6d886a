"""Adjoint-method gradients of Z-readout losses.

The scalar being differentiated is always ``L = sum_k c_k <Z_k>`` for a
cotangent vector ``c`` over the first ``m`` qubits. Any downstream loss is
handled by passing ``dLoss/dreadout`` as the cotangent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ConfigurationError
from .sim import (
    Gate,
    StateVector,
    apply_inplace,
    check_wires,
    expand,
    ry_derivative,
    rz_derivative,
    z_signs,
)

_DERIVATIVE = {"RZ": rz_derivative, "RY": ry_derivative}


@dataclass
class AdjointTape:
    forward_final_state: np.ndarray
    gate_sequence: list[Gate]
    param_slots: list[int]
    param_count: int


def record(gates: Sequence[Gate], psi_in: np.ndarray) -> AdjointTape:
    """Forward pass over a ``(batch, 2**n)`` block, keeping only the final state."""
    seq = expand(gates)
    slots = []
    count = 0
    for g in seq:
        if g.kind in _DERIVATIVE:
            slots.append(count)
            count += 1
        else:
            slots.append(-1)
    psi = np.array(psi_in, dtype=np.complex128, order="C", copy=True)
    for g in seq:
        apply_inplace(psi, g)
    return AdjointTape(psi, seq, slots, count)


def backward(tape: AdjointTape, cotangent: np.ndarray, *, want_params=True, want_input=False):
    """Reverse sweep. Returns ``(per-example param grads, input grads)``.

    Input gradients are complex: the real part is dL/dRe(a_i), the imaginary
    part dL/dIm(a_i).
    """
    psi = tape.forward_final_state.copy()
    batch, dim = psi.shape
    n = dim.bit_length() - 1
    cot = np.atleast_2d(np.asarray(cotangent, dtype=np.float64))
    if cot.shape[0] == 1 and batch > 1:
        cot = np.repeat(cot, batch, axis=0)
    lam = psi * (cot @ z_signs(n, cot.shape[1]))
    lam = np.ascontiguousarray(lam)
    grads = np.zeros((batch, tape.param_count)) if want_params else None
    for g, slot in zip(reversed(tape.gate_sequence), reversed(tape.param_slots)):
        inv = g.inverse()
        apply_inplace(psi, inv)
        if want_params and slot >= 0:
            du = _DERIVATIVE[g.kind](g.angles[0])
            grads[:, slot] = 2.0 * kernels.grad_1q(lam, psi, du, g.wires[0])
        apply_inplace(lam, inv)
    return grads, (2.0 * lam if want_input else None)


def readouts(tape: AdjointTape, m: int) -> np.ndarray:
    return kernels.z_expectations(tape.forward_final_state, m)


def _prepare(circuit, input_state: StateVector, loss_cotangent):
    for g in circuit:
        check_wires(g, input_state.num_qubits)
    cot = np.asarray(loss_cotangent, dtype=np.float64).reshape(1, -1)
    if cot.shape[1] > input_state.num_qubits:
        raise ConfigurationError("more cotangent entries than qubits")
    return record(circuit, input_state.amplitudes.reshape(1, -1)), cot


def grad_params(circuit: Sequence[Gate], input_state: StateVector, loss_cotangent) -> np.ndarray:
    tape, cot = _prepare(circuit, input_state, loss_cotangent)
    grads, _ = backward(tape, cot)
    return grads[0]


def grad_input(circuit: Sequence[Gate], input_state: StateVector, loss_cotangent) -> np.ndarray:
    tape, cot = _prepare(circuit, input_state, loss_cotangent)
    _, gin = backward(tape, cot, want_params=False, want_input=True)
    return gin[0]


def loss_value(circuit: Sequence[Gate], input_state: StateVector, loss_cotangent) -> float:
    tape, cot = _prepare(circuit, input_state, loss_cotangent)
    return float(readouts(tape, cot.shape[1])[0] @ cot[0])


def param_shift_check(circuit: Sequence[Gate], input_state: StateVector, parameter_index: int,
                      loss_cotangent=(1.0,)) -> float:
    """Two-term parameter-shift derivative, independent of the adjoint sweep."""
    seq = expand(circuit)
    positions = [i for i, g in enumerate(seq) if g.kind in _DERIVATIVE]
    if not 0 <= parameter_index < len(positions):
        raise ConfigurationError(f"parameter index {parameter_index} out of range ({len(positions)} parameters)")
    pos = positions[parameter_index]
    g = seq[pos]

    def shifted(delta):
        s = list(seq)
        s[pos] = Gate(g.kind, g.wires, (g.angles[0] + delta,))
        return loss_value(s, input_state, loss_cotangent)

    return 0.5 * (shifted(0.5 * np.pi) - shifted(-0.5 * np.pi))

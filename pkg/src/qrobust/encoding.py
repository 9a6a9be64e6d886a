"""Amplitude encoding of pixel vectors.

Pixels are taken in row-major order and pixel ``j`` becomes the amplitude of
basis state ``|j>`` (qubit 0 = least significant bit). The vector is
zero-padded to ``2**n`` and divided by its l2 norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DataError, DegenerateInputError
from .sim import StateVector


@dataclass
class PixelVector:
    values: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size != self.width * self.height:
            raise DataError(f"{self.values.size} values for a {self.width}x{self.height} image")
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise DataError("pixel values must lie in [0, 1]")

    @classmethod
    def from_image(cls, image) -> PixelVector:
        image = np.asarray(image, dtype=np.float64)
        h, w = image.shape
        return cls(image.ravel(), w, h)


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, PixelVector) else np.asarray(x, dtype=np.float64).ravel()


def qubits_for(num_values: int) -> int:
    return max(1, int(np.ceil(np.log2(num_values))))


def encode_batch(X: np.ndarray, num_qubits: int) -> np.ndarray:
    """Encode rows of ``X`` into a ``(batch, 2**n)`` complex block."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    dim = 1 << num_qubits
    if X.shape[1] > dim:
        raise CapacityError(f"{X.shape[1]} values do not fit in {num_qubits} qubits")
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateInputError(f"all-zero input at row(s) {np.flatnonzero(norms == 0.0).tolist()}")
    psi = np.zeros((X.shape[0], dim), dtype=np.complex128)
    psi[:, : X.shape[1]] = X / norms[:, None]
    return psi


def encode(x, num_qubits: int) -> StateVector:
    return StateVector(num_qubits, encode_batch(_values(x)[None, :], num_qubits)[0])


def encode_vjp_batch(X: np.ndarray, amp_cotangent: np.ndarray) -> np.ndarray:
    """Row-wise ``J^T g`` with ``J = (I - u u^T) / |x|`` and ``u = x / |x|``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    g = np.atleast_2d(np.asarray(amp_cotangent, dtype=np.float64))[:, : X.shape[1]]
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateInputError("all-zero input")
    u = X / norms[:, None]
    radial = np.sum(u * g, axis=1)
    return (g - radial[:, None] * u) / norms[:, None]


def encode_vjp(x, amplitude_cotangent) -> np.ndarray:
    return encode_vjp_batch(_values(x)[None, :], np.real(amplitude_cotangent))[0]

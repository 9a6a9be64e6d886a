"""Pure NumPy gate kernels.

Same contract as the compiled ``_kernels`` extension. All kernels act on a
batch of state vectors stored as a C-contiguous ``complex128`` array of shape
``(batch, 2**n)``; qubit ``q`` is bit ``q`` of the basis index (qubit 0 is
the least significant bit). Mutating kernels work in place.
"""

import numpy as np

BACKEND = "python"


def _split(psi, target):
    # (batch, high, bit, low) view; bit axis selects |0> / |1> of `target`
    batch, dim = psi.shape
    low = 1 << target
    return psi.reshape(batch, dim // (2 * low), 2, low)


def apply_1q(psi, u, target):
    v = _split(psi, target)
    a0 = v[:, :, 0, :].copy()
    a1 = v[:, :, 1, :]
    v[:, :, 0, :] = u[0, 0] * a0 + u[0, 1] * a1
    v[:, :, 1, :] = u[1, 0] * a0 + u[1, 1] * a1


def apply_x(psi, target):
    v = _split(psi, target)
    v[:, :, [0, 1], :] = v[:, :, [1, 0], :]


def apply_cz(psi, q1, q2):
    idx = np.arange(psi.shape[1])
    mask = ((idx >> q1) & 1).astype(bool) & ((idx >> q2) & 1).astype(bool)
    psi[:, mask] *= -1.0


def z_expectations(psi, m):
    probs = psi.real ** 2 + psi.imag ** 2
    idx = np.arange(psi.shape[1])
    out = np.empty((psi.shape[0], m))
    for k in range(m):
        sign = 1.0 - 2.0 * ((idx >> k) & 1)
        out[:, k] = probs @ sign
    return out


def grad_1q(lam, psi, du, target):
    """Per-row ``Re <lam| du_target |psi>`` without materialising ``du psi``."""
    l = _split(lam, target)
    p = _split(psi, target)
    a0 = p[:, :, 0, :]
    a1 = p[:, :, 1, :]
    m0 = du[0, 0] * a0 + du[0, 1] * a1
    m1 = du[1, 0] * a0 + du[1, 1] * a1
    s = np.conj(l[:, :, 0, :]) * m0 + np.conj(l[:, :, 1, :]) * m1
    return s.real.sum(axis=(1, 2))

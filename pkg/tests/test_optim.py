import math

import numpy as np
import pytest

from qrobust.errors import ConfigurationError, DataError
from qrobust.optim import AdamState, adam_step, cross_entropy, softmax, softmax_xent_grad


def test_zero_gradient_leaves_params():
    p = np.array([1.0, -2.0])
    new, st = adam_step(p, np.zeros(2), AdamState())
    np.testing.assert_array_equal(new, p)
    assert st.t == 1


def test_first_step_closed_form():
    g = np.array([0.5, -3.0, 1e-3])
    st = AdamState(lr=0.01)
    new, _ = adam_step(np.zeros(3), g, st)
    # at t=1 the bias-corrected moments are g and g^2
    np.testing.assert_allclose(new, -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)


def test_constant_gradient_limit_is_lr_sign():
    st = AdamState(lr=0.1)
    p = np.zeros(2)
    g = np.array([4.0, -0.02])
    for _ in range(2000):
        prev = p
        p, st = adam_step(p, g, st)
    np.testing.assert_allclose(p - prev, -0.1 * np.sign(g), rtol=1e-6)


def test_scale_invariant_direction():
    a, b = AdamState(), AdamState()
    pa = pb = np.zeros(3)
    g = np.array([1.0, -2.0, 0.5])
    for _ in range(50):
        pa, a = adam_step(pa, g, a)
        pb, b = adam_step(pb, 1000 * g, b)
    np.testing.assert_array_equal(np.sign(pa), np.sign(pb))
    np.testing.assert_allclose(pa, pb, rtol=1e-4)


def test_shape_mismatch():
    with pytest.raises(ConfigurationError):
        adam_step(np.zeros(2), np.zeros(3), AdamState())


def test_cross_entropy_values():
    assert cross_entropy([1.0, 0.0], 0) == 0.0
    assert cross_entropy(np.full(10, 0.1), 3) == pytest.approx(2.302585, abs=1e-6)
    assert cross_entropy([1.0, 1e-20], 1) == pytest.approx(-math.log(1e-12))
    with pytest.raises(DataError):
        cross_entropy([0.5, 0.5], 2)


def test_cross_entropy_strictly_decreasing():
    ps = np.linspace(0.01, 1.0, 50)
    vals = [cross_entropy([p, 1 - p], 0) for p in ps]
    assert np.all(np.diff(vals) < 0)


def test_softmax_xent_gradient_closed_form():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((6, 4))
    y = rng.integers(0, 4, 6)
    p = softmax(z)
    closed = (p - np.eye(4)[y]) / 6

    def mean_loss(zz):
        q = softmax(zz)
        return -np.mean(np.log(q[np.arange(6), y]))

    h = 1e-6
    fd = np.zeros_like(z)
    for i in np.ndindex(z.shape):
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        fd[i] = (mean_loss(zp) - mean_loss(zm)) / (2 * h)
    np.testing.assert_allclose(softmax_xent_grad(p, y) / 6, closed, atol=1e-12)
    np.testing.assert_allclose(closed, fd, atol=1e-8)

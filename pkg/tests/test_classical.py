import numpy as np
import pytest

from qrobust.checkpoint import load_model
from qrobust.classical import ClassicalModel, Dense, MaxPool2, c_backward, c_forward
from qrobust.data import synth_blobs
from qrobust.errors import ConfigurationError, TrainingError
from qrobust.training import TrainConfig, accuracy, train, train_classical


def tiny(family="mlp", seed=0):
    if family == "mlp":
        return ClassicalModel("mlp", (3, 3), 3, hidden=(5,), seed=seed)
    return ClassicalModel("convnet", (4, 4), 3, conv_widths=(2, 3), hidden=(4,), seed=seed)


def fd_check(model, X, y, h=1e-6):
    loss, grads, dx = model.backward(X, y)
    for p, g in zip(model.parameters(), grads):
        fd = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + h
            lp = model.backward(X, y)[0]
            p[i] = old - h
            lm = model.backward(X, y)[0]
            p[i] = old
            fd[i] = (lp - lm) / (2 * h)
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-8)
    losses, gx = model.loss_and_input_grad(X, y)
    for b in range(len(X)):
        for j in range(X.shape[1]):
            xp, xm = X[b:b + 1].copy(), X[b:b + 1].copy()
            xp[0, j] += h
            xm[0, j] -= h
            fd = (model.loss_and_input_grad(xp, y[b:b + 1])[0][0] - model.loss_and_input_grad(xm, y[b:b + 1])[0][0]) / (2 * h)
            assert gx[b, j] == pytest.approx(fd, rel=1e-5, abs=1e-8)
    np.testing.assert_allclose(dx, gx, atol=1e-12)


@pytest.mark.parametrize("family", ["mlp", "convnet"])
def test_gradients_match_finite_differences(family):
    m = tiny(family)
    n = m.input_shape[0] * m.input_shape[1]
    rng = np.random.default_rng(1)
    fd_check(m, rng.uniform(0, 1, (4, n)), rng.integers(0, 3, 4))


def test_zero_weights_give_uniform_probs():
    for family in ("mlp", "convnet"):
        m = ClassicalModel(family, (4, 4), 5, conv_widths=(2, 2), hidden=(3,), init_mode="zeros")
        _, p = c_forward(m, np.random.default_rng(0).uniform(0, 1, 16))
        np.testing.assert_allclose(p, 0.2)


def test_identity_dense_layer():
    m = ClassicalModel("mlp", (1, 2), 2, hidden=(), init_mode="zeros")
    m.layers[-1].W[...] = np.eye(2)
    logits, _ = c_forward(m, [0.3, 0.7])
    np.testing.assert_array_equal(logits, [0.3, 0.7])


def test_dead_relu_unit_contributes_no_gradient():
    m = ClassicalModel("mlp", (1, 2), 2, hidden=(2,), seed=0)
    m.layers[0].W[...] = [[1.0, -1.0], [1.0, -1.0]]
    m.layers[0].b[...] = [0.0, -0.5]
    _, grads, _ = m.backward(np.array([[0.4, 0.6]]), np.array([1]))
    # unit 1 has negative pre-activation: its incoming weights/bias get zero gradient
    assert np.all(grads[0][:, 1] == 0) and grads[1][1] == 0
    assert np.all(grads[2][1] == 0)


def test_maxpool_routes_to_argmax():
    x = np.array([[1, 2, 0, 0], [4, 3, 0, 5], [7, 0, 1, 1], [0, 8, 1, 1]], dtype=float)[None, None]
    pool = MaxPool2()
    np.testing.assert_array_equal(pool.forward(x)[0, 0], [[4, 5], [8, 1]])
    dx = pool.backward(np.array([[[[10.0, 20.0], [30.0, 40.0]]]]))[0, 0]
    expected = np.zeros((4, 4))
    expected[1, 0], expected[1, 3], expected[3, 1], expected[2, 2] = 10, 20, 30, 40
    np.testing.assert_array_equal(dx, expected)


def test_shape_mismatch():
    with pytest.raises(ConfigurationError):
        tiny().logits(np.zeros((1, 4)))


def test_training_memorises_ten_examples():
    ds = synth_blobs(5, 2, size=4, seed=3)
    m = ClassicalModel("mlp", (4, 4), 5, hidden=(32,), seed=0)
    model, hist = train_classical(m, ds, TrainConfig(epochs=200, batch_size=10, lr=0.01))
    assert accuracy(model, ds) == 1.0
    assert hist[1]["loss"] < hist[0]["loss"]


def test_separable_synthetic_reaches_full_accuracy():
    ds = synth_blobs(4, 25, size=6, seed=1)
    m = ClassicalModel("mlp", (6, 6), 4, hidden=(16,), seed=0)
    train(m, ds, TrainConfig(epochs=20, batch_size=10, lr=0.01))
    assert accuracy(m, ds) == 1.0


def test_training_is_deterministic():
    ds = synth_blobs(3, 10, size=4, seed=0)
    runs = []
    for _ in range(2):
        m = tiny("convnet", seed=5)
        h = train(m, ds, TrainConfig(epochs=3, batch_size=7, lr=0.01, seed=2))
        runs.append((h, [p.copy() for p in m.parameters()]))
    assert runs[0][0] == runs[1][0]
    for a, b in zip(runs[0][1], runs[1][1]):
        np.testing.assert_array_equal(a, b)


def test_divergence_raises():
    ds = synth_blobs(2, 4, size=3, seed=0)
    m = tiny()
    m.layers[-1].W[0, 0] = np.nan
    with pytest.raises(TrainingError) as info:
        train(m, ds, TrainConfig(epochs=1))
    assert info.value.diagnostics["epoch"] == 0


@pytest.mark.parametrize("family", ["mlp", "convnet"])
def test_checkpoint_roundtrip(tmp_path, family):
    m = tiny(family, seed=3)
    m.save(tmp_path / "c.ckpt")
    back = load_model(tmp_path / "c.ckpt")
    X = np.random.default_rng(0).uniform(0, 1, (3, m.input_shape[0] * m.input_shape[1]))
    np.testing.assert_array_equal(back.logits(X), m.logits(X))
    assert back.family == family


def test_c_backward_contract():
    m = tiny()
    loss, grads, dx = c_backward(m, (np.full((2, 9), 0.5), np.array([0, 1])))
    assert len(grads) == len(m.parameters()) and dx.shape == (2, 9) and loss > 0


def test_dense_layer_shapes():
    d = Dense(3, 2)
    assert d.W.shape == (3, 2) and d.b.shape == (2,)

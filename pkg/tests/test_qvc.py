import numpy as np
import pytest

from qrobust import qvc
from qrobust.checkpoint import load_model
from qrobust.data import synth_blobs
from qrobust.errors import ConfigurationError, DataError
from qrobust.qvc import QvcModel


@pytest.mark.parametrize("n, layers, expected", [(10, 200, 6000), (12, 200, 7200), (10, 500, 15000), (6, 20, 360)])
def test_parameter_count(n, layers, expected):
    m = QvcModel(n, layers, 2, np.zeros((layers, n, 3)))
    assert m.num_params == expected


def test_gates_per_layer_at_ten_qubits():
    m = QvcModel.init(10, 2, 10)
    assert m.gates_per_layer == 39
    circuit = m.circuit()
    assert sum(g.kind == "Rot" for g in circuit) == 20
    assert sum(g.kind == "CZ" for g in circuit) == 18
    assert [g.wires for g in circuit[10:19]] == [(q, q + 1) for q in range(9)]


def test_zero_layer_model():
    m = QvcModel(2, 0, 2, np.zeros((0, 2, 3)))
    r, p = qvc.forward(m, [1, 0, 0, 0])
    np.testing.assert_array_equal(r, [1, 1])
    np.testing.assert_allclose(p, [0.5, 0.5])


def test_zero_angle_layer_is_identity_on_basis_input():
    zero = QvcModel(2, 0, 2, np.zeros((0, 2, 3)))
    one = QvcModel(2, 1, 2, np.zeros((1, 2, 3)))
    x = [1, 0, 0, 0]
    np.testing.assert_allclose(qvc.forward(one, x)[0], qvc.forward(zero, x)[0], atol=1e-15)


def test_random_model_ranges():
    m = QvcModel.init(4, 3, 4, seed=1)
    r, p = qvc.forward(m, np.random.default_rng(0).uniform(0, 1, 16))
    assert np.all(np.abs(r) <= 1 + 1e-12)
    assert abs(p.sum() - 1) < 1e-9 and np.all(p > 0)


def test_prediction_tie_breaks_low():
    class Fixed(QvcModel):
        def scores(self, X):
            return np.array([[-0.2, -0.2]])

    m = Fixed(2, 0, 2, np.zeros((0, 2, 3)))
    assert qvc.predict(m, [1, 0, 0, 0]) == 0


def test_uniform_probs_loss_is_log_m():
    m = QvcModel(4, 0, 4, np.zeros((0, 4, 3)))
    loss, g = qvc.loss_and_grads(m, (np.eye(16)[:1], np.array([2])))
    assert loss == pytest.approx(np.log(4), abs=1e-12)


def test_loss_gradient_finite_differences():
    rng = np.random.default_rng(4)
    m = QvcModel.init(3, 2, 3, seed=4)
    X = rng.uniform(0, 1, (5, 8))
    y = rng.integers(0, 3, 5)
    loss, g = qvc.loss_and_grads(m, (X, y))
    fd = np.zeros_like(m.thetas)
    h = 1e-5
    for i in np.ndindex(m.thetas.shape):
        mp = QvcModel(3, 2, 3, m.thetas.copy())
        mm = QvcModel(3, 2, 3, m.thetas.copy())
        mp.thetas[i] += h
        mm.thetas[i] -= h
        fd[i] = (mp.loss_and_grads(X, y)[0] - mm.loss_and_grads(X, y)[0]) / (2 * h)
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-9)


def test_input_gradient_finite_differences():
    rng = np.random.default_rng(8)
    m = QvcModel.init(3, 3, 2, seed=2)
    X = rng.uniform(0.1, 1, (3, 7))
    y = np.array([0, 1, 1])
    losses, gx = m.loss_and_input_grad(X, y)
    h = 1e-6
    for b in range(3):
        for j in range(7):
            xp, xm = X[b].copy(), X[b].copy()
            xp[j] += h
            xm[j] -= h
            fd = (m.loss_and_input_grad(xp[None], y[b:b + 1])[0][0] - m.loss_and_input_grad(xm[None], y[b:b + 1])[0][0]) / (2 * h)
            assert gx[b, j] == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_brightness_invariance():
    rng = np.random.default_rng(1)
    m = QvcModel.init(4, 3, 4, seed=3)
    X = rng.uniform(0, 1, (50, 16))
    c = rng.uniform(0.05, 20, (50, 1))
    np.testing.assert_array_equal(m.predict(c * X), m.predict(X))


def test_gradient_descent_decreases_loss():
    ds = synth_blobs(2, 10, size=4, seed=0)
    m = QvcModel.init(4, 3, 2, seed=0)
    losses = []
    for _ in range(11):
        loss, (g,) = m.loss_and_grads(ds.X, ds.labels)
        losses.append(loss)
        m.thetas -= 0.05 * g
    assert np.all(np.diff(losses) < 0)


def test_label_out_of_range():
    m = QvcModel.init(3, 1, 2)
    with pytest.raises(DataError):
        m.loss_and_grads(np.ones((1, 8)), np.array([2]))
    with pytest.raises(ConfigurationError):
        QvcModel.init(2, 1, 3)


def test_checkpoint_roundtrip(tmp_path):
    m = QvcModel.init(5, 4, 3, seed=9, temperature=0.5, name="q")
    m.save(tmp_path / "q.ckpt")
    back = load_model(tmp_path / "q.ckpt")
    assert isinstance(back, QvcModel)
    np.testing.assert_array_equal(back.thetas, m.thetas)
    assert (back.num_qubits, back.num_layers, back.num_classes, back.seed, back.temperature) == (5, 4, 3, 9, 0.5)
    raw = (tmp_path / "q.ckpt").read_bytes()
    # parameter block is raw little-endian float64 after the two header lines
    body = raw.split(b"\n", 2)[2]
    np.testing.assert_array_equal(np.frombuffer(body, "<f8"), m.thetas.ravel())

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qrobust.attacks import AttackConfig, AttackSet, attack_batch, fgsm, pgd, pgd_batch, replay, run_attack
from qrobust.classical import ClassicalModel
from qrobust.data import Dataset, synth_blobs
from qrobust.errors import CapabilityError, ConfigurationError
from qrobust.qvc import QvcModel
from qrobust.training import TrainConfig, train


def logistic_1d(w):
    """Two-class linear model on one pixel: logits (w x, 0)."""
    m = ClassicalModel("mlp", (1, 1), 2, hidden=(), init_mode="zeros")
    m.layers[-1].W[...] = [[w, 0.0]]
    return m


@pytest.fixture(scope="module")
def trained_mlp():
    ds = synth_blobs(3, 20, size=4, seed=0)
    m = ClassicalModel("mlp", (4, 4), 3, hidden=(16,), seed=0, name="mlp")
    train(m, ds, TrainConfig(epochs=20, batch_size=10, lr=0.01))
    return m, ds


def test_fgsm_zero_epsilon(trained_mlp):
    m, ds = trained_mlp
    ex = fgsm(m, ds.X[0], ds.labels[0], 0.0)
    np.testing.assert_array_equal(ex.perturbed, ds.X[0])


def test_fgsm_direction_on_logistic():
    # label 1 has logit 0; raising x raises the class-0 logit w x and so the loss
    m = logistic_1d(2.0)
    ex = fgsm(m, [0.5], 1, 0.1)
    assert ex.perturbed[0] == pytest.approx(0.6)
    # label 0: loss decreases with x, so the attack lowers it
    assert fgsm(m, [0.5], 0, 0.1).perturbed[0] == pytest.approx(0.4)


def test_fgsm_clips_at_one():
    ex = fgsm(logistic_1d(2.0), [1.0], 1, 0.2)
    assert ex.perturbed[0] == 1.0


def test_pgd_one_step_equals_fgsm(trained_mlp):
    m, ds = trained_mlp
    for i in range(5):
        a = fgsm(m, ds.X[i], ds.labels[i], 0.1)
        b = pgd(m, ds.X[i], ds.labels[i], AttackConfig("pgd", 0.1, steps=1, step_size=0.1))
        np.testing.assert_array_equal(a.perturbed, b.perturbed)


def test_pgd_loss_non_decreasing_on_convex_model():
    m = ClassicalModel("mlp", (1, 2), 2, hidden=(), init_mode="zeros")
    m.layers[-1].W[...] = [[1.5, -0.5], [-2.0, 1.0]]
    ex = pgd(m, [0.4, 0.6], 0, AttackConfig("pgd", 0.3, steps=10))
    assert np.all(np.diff(ex.loss_history) >= -1e-15)


def test_attack_batch_invariants(trained_mlp):
    m, ds = trained_mlp
    clean = np.mean(m.predict(ds.X) == ds.labels)
    accs = []
    for eps in (0.0, 0.05, 0.1, 0.2, 0.3):
        s = attack_batch(m, ds, AttackConfig("pgd", eps, steps=10))
        delta = s.perturbed - s.original
        assert np.max(np.abs(delta)) <= eps + 1e-9
        assert s.perturbed.min() >= 0.0 and s.perturbed.max() <= 1.0
        accs.append(s.adversarial_accuracy)
    assert accs[0] == clean
    assert all(a >= b for a, b in zip(accs, accs[1:]))


def test_qvc_attack_respects_budget():
    rng = np.random.default_rng(0)
    q = QvcModel.init(4, 2, 2, seed=1)
    ds = Dataset(rng.uniform(0.05, 1, (6, 4, 4)), rng.integers(0, 2, 6), 2)
    s = attack_batch(q, ds, AttackConfig("fgsm", 0.2))
    assert np.max(np.abs(s.delta)) <= 0.2 + 1e-9
    assert 0 <= s.perturbed.min() and s.perturbed.max() <= 1


def test_degenerate_examples_are_recorded_not_fatal():
    q = QvcModel.init(2, 1, 2, seed=0)
    images = np.array([[[0.0, 0.0], [0.0, 0.0]], [[0.2, 0.9], [0.4, 0.1]]])
    s = attack_batch_safe(q, Dataset(images, np.array([0, 1]), 2))
    assert [f["index"] for f in s.failures] == [0]
    np.testing.assert_array_equal(s.perturbed[0], 0.0)


def attack_batch_safe(model, ds):
    # predictions on an all-zero image are undefined for amplitude encoding; skip them in the summary
    class Guarded:
        name = model.name

        def predict(self, X):
            X = np.atleast_2d(X)
            ok = np.linalg.norm(X, axis=1) > 0
            out = np.zeros(len(X), dtype=int)
            if ok.any():
                out[ok] = model.predict(X[ok])
            return out

        def loss_and_input_grad(self, X, y):
            return model.loss_and_input_grad(X, y)

        def probabilities(self, X):
            return model.probabilities(X)

    return attack_batch(Guarded(), ds, AttackConfig("fgsm", 0.1))


def test_attack_set_roundtrip_and_replay(tmp_path, trained_mlp):
    m, ds = trained_mlp
    s = attack_batch(m, ds, AttackConfig("pgd", 0.1, steps=5))
    s.save(tmp_path / "set")
    back = AttackSet.load(tmp_path / "set")
    np.testing.assert_array_equal(back.perturbed, s.perturbed)
    np.testing.assert_array_equal(back.original, s.original)
    assert back.config == s.config and back.source_model == "mlp"
    assert replay(back, m) == s.adversarial_accuracy


def test_config_validation():
    with pytest.raises(ConfigurationError):
        AttackConfig("pgd", 1.5)
    with pytest.raises(ConfigurationError):
        AttackConfig("cw", 0.1)
    with pytest.warns(UserWarning):
        AttackConfig("pgd", 0.3, steps=2, step_size=0.01)
    assert AttackConfig("pgd", 0.1, steps=20).alpha == pytest.approx(0.0125)


def test_model_without_gradients():
    class Opaque:
        def predict(self, X):
            return np.zeros(len(X), dtype=int)

    with pytest.raises(CapabilityError):
        pgd_batch(Opaque(), np.zeros((1, 4)), np.zeros(1, dtype=int), AttackConfig())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 16), st.sampled_from(["fgsm", "pgd"]), st.floats(0.0, 0.5), st.booleans())
def test_budget_and_range_property(seed, kind, eps, random_start):
    rng = np.random.default_rng(seed)
    m = ClassicalModel("mlp", (3, 3), 3, hidden=(5,), seed=seed)
    X = rng.uniform(0, 1, (6, 9))
    X[:, 0] = rng.choice([0.0, 1.0], 6)  # pixels on the box edges
    y = rng.integers(0, 3, 6)
    adv = run_attack(m, X, y, AttackConfig(kind, eps, steps=4, random_start=random_start, seed=seed))
    assert np.all(np.abs(adv - X) <= eps + 1e-9)
    assert adv.min() >= 0.0 and adv.max() <= 1.0

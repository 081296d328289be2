"""Embedding network: gradients vs finite differences, training behavior."""

import numpy as np
import pytest

from mqle.embed import (
    EmbeddingModel,
    embed,
    load_embedding,
    loss_and_grads,
    save_embedding,
    softmax_probs,
    train_embedding,
)
from mqle.errors import DataError


def separable_data(rng, n_per=40):
    a = rng.normal(loc=(-2.0, 0.0), scale=0.3, size=(n_per, 2))
    b = rng.normal(loc=(2.0, 0.0), scale=0.3, size=(n_per, 2))
    x = np.vstack([a, b])
    y = np.array([0] * n_per + [1] * n_per)
    return x, y


def random_model(rng, d_in, hidden, n_classes):
    return EmbeddingModel(
        w1=rng.normal(scale=0.5, size=(d_in, hidden)),
        b1=rng.normal(scale=0.1, size=hidden),
        w2=rng.normal(scale=0.5, size=(hidden, n_classes)),
        b2=rng.normal(scale=0.1, size=n_classes),
    )


def finite_difference_grads(model, x, y, h=1e-6):
    """Central differences over every parameter entry (the gradient oracle)."""
    grads = {}
    for name in ("w1", "b1", "w2", "b2"):
        param = getattr(model, name)
        grad = np.zeros_like(param)
        it = np.nditer(param, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            original = param[idx]
            param[idx] = original + h
            up = loss_and_grads(model, x, y)[0]
            param[idx] = original - h
            down = loss_and_grads(model, x, y)[0]
            param[idx] = original
            grad[idx] = (up - down) / (2 * h)
            it.iternext()
        grads[name] = grad
    return grads


class TestGradients:
    @pytest.mark.parametrize("seed", range(10))
    def test_analytic_matches_central_differences(self, seed):
        rng = np.random.default_rng(seed)
        model = random_model(rng, d_in=3, hidden=4, n_classes=3)
        x = rng.normal(size=(5, 3))
        y = rng.integers(0, 3, 5)
        _, analytic = loss_and_grads(model, x, y)
        numeric = finite_difference_grads(model, x, y)
        for name in ("w1", "b1", "w2", "b2"):
            np.testing.assert_allclose(
                analytic[name],
                numeric[name],
                rtol=1e-4,
                atol=1e-6,
                err_msg=f"gradient mismatch in {name} (seed {seed})",
            )


class TestForward:
    def test_softmax_rows_are_distributions(self):
        rng = np.random.default_rng(0)
        model = random_model(rng, 6, 5, 4)
        probs = softmax_probs(model, rng.normal(size=(20, 6)))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        assert (probs >= 0).all()

    def test_zero_weights_embed_to_zero(self):
        model = EmbeddingModel(
            w1=np.zeros((3, 4)), b1=np.zeros(4), w2=np.zeros((4, 2)), b2=np.zeros(2)
        )
        np.testing.assert_array_equal(embed(model, np.ones(3)), np.zeros(4))

    def test_identity_weights_pass_nonnegative_input_through(self):
        model = EmbeddingModel(
            w1=np.eye(4), b1=np.zeros(4), w2=np.zeros((4, 2)), b2=np.zeros(2)
        )
        x = np.array([0.5, 0.0, 2.0, 1.0])
        np.testing.assert_array_equal(embed(model, x), x)

    def test_outputs_rectified(self):
        rng = np.random.default_rng(1)
        model = random_model(rng, 5, 8, 3)
        out = embed(model, rng.normal(size=(50, 5)))
        assert (out >= 0).all()

    def test_embed_is_pure(self):
        rng = np.random.default_rng(2)
        model = random_model(rng, 4, 6, 2)
        x = rng.normal(size=4)
        a = embed(model, x)
        b = embed(model, x.copy())
        assert a.tobytes() == b.tobytes()

    def test_dimension_mismatch_rejected(self):
        rng = np.random.default_rng(3)
        model = random_model(rng, 4, 6, 2)
        with pytest.raises(DataError, match="dimension"):
            embed(model, np.ones(5))


class TestTraining:
    def test_separable_data_high_accuracy(self):
        rng = np.random.default_rng(4)
        x, y = separable_data(rng)
        model = train_embedding(x, y, n_hidden=8, epochs=200, lr0=0.05, seed=0)
        pred = softmax_probs(model, x).argmax(axis=1)
        assert (pred == y).mean() >= 0.99

    def test_loss_decreases(self):
        rng = np.random.default_rng(5)
        x, y = separable_data(rng)
        model = train_embedding(x, y, n_hidden=8, epochs=30, lr0=0.01, seed=1)
        assert model.loss_trace[-1] < model.loss_trace[0]

    def test_loss_strictly_decreasing_first_ten_epochs(self):
        rng = np.random.default_rng(6)
        x, y = separable_data(rng)
        model = train_embedding(x, y, n_hidden=8, epochs=12, lr0=0.01, seed=2)
        first = np.array(model.loss_trace[:11])
        assert np.all(np.diff(first) < 0)

    def test_single_class_rejected(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(10, 3))
        with pytest.raises(DataError, match="C >= 2"):
            train_embedding(x, np.zeros(10, dtype=int), 4, 10, 0.01, seed=0)

    def test_label_out_of_range_rejected(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(6, 3))
        y = np.array([0, 1, 2, 3, 1, 0])
        with pytest.raises(DataError, match="label"):
            train_embedding(x, y, 4, 10, 0.01, seed=0, n_classes=3)

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        x, y = separable_data(rng, n_per=15)
        a = train_embedding(x, y, 6, 20, 0.02, seed=5)
        b = train_embedding(x, y, 6, 20, 0.02, seed=5)
        assert a.w1.tobytes() == b.w1.tobytes()
        assert a.loss_trace == b.loss_trace


class TestSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(10)
        x, y = separable_data(rng, n_per=10)
        model = train_embedding(x, y, 5, 10, 0.02, seed=3)
        path = tmp_path / "embedding.bin"
        save_embedding(path, model, config_hash="22" * 8)
        loaded = load_embedding(path)
        assert (loaded.d_in, loaded.hidden, loaded.n_classes) == (2, 5, 2)
        np.testing.assert_allclose(loaded.w1, model.w1, atol=1e-6)
        np.testing.assert_allclose(loaded.b2, model.b2, atol=1e-6)

import numpy as np
import pytest

from survtau.approximator import (
    ApproxConfig,
    Approximator,
    grad_check,
    logit,
    sigmoid,
    train,
)


def tiny_config(**kw):
    base = dict(input_dim=2, hidden_layers=(4, 3), epochs=3, batch_size=8,
                learning_rate=0.1, seed=0)
    base.update(kw)
    return ApproxConfig(**base)


def toy_data(n=32, seed=0, binary=False):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    if binary:
        y = (rng.random(n) < sigmoid(X[:, 0])).astype(float)
    else:
        y = np.sin(X[:, 0]) + 0.1 * rng.normal(size=n)
    return X, y


class TestActivations:
    def test_sigmoid_matches_reference(self):
        z = np.array([-30.0, -1.0, 0.0, 1.0, 30.0])
        np.testing.assert_allclose(sigmoid(z), 1.0 / (1.0 + np.exp(-z)), rtol=1e-12)

    def test_sigmoid_extreme_inputs_stay_finite(self):
        out = sigmoid(np.array([-1e4, 1e4]))
        assert np.isfinite(out).all()
        assert out[0] == pytest.approx(0.0)
        assert out[1] == pytest.approx(1.0)

    def test_logit_inverts_sigmoid(self):
        p = np.array([0.01, 0.3, 0.5, 0.9, 0.99])
        np.testing.assert_allclose(sigmoid(logit(p)), p, rtol=1e-12)


class TestConfigValidation:
    @pytest.mark.parametrize("kw", [
        dict(input_dim=0),
        dict(hidden_layers=(4, 0)),
        dict(output_activation="relu"),
        dict(epochs=0),
        dict(batch_size=0),
        dict(learning_rate=0.0),
        dict(lr_schedule="cosine"),
        dict(momentum=1.0),
        dict(momentum=-0.1),
        dict(dropout_rate=1.0),
        dict(val_fraction=1.0),
        dict(patience=0),
    ])
    def test_bad_settings_rejected(self, kw):
        with pytest.raises(ValueError):
            tiny_config(**kw)


class TestForwardPredict:
    def test_deterministic_given_seed(self):
        X, _ = toy_data()
        a = Approximator(tiny_config(seed=7))
        b = Approximator(tiny_config(seed=7))
        np.testing.assert_array_equal(a.predict(X), b.predict(X))

    def test_logistic_output_clipped_inside_unit_interval(self):
        X, _ = toy_data()
        m = Approximator(tiny_config(output_activation="logistic"))
        out = m.predict(X * 100)
        assert np.all(out > 0.0) and np.all(out < 1.0)

    def test_single_vector_returns_float(self):
        m = Approximator(tiny_config())
        out = m.predict(np.zeros(2))
        assert isinstance(out, float)

    def test_wrong_width_rejected(self):
        m = Approximator(tiny_config())
        with pytest.raises(ValueError):
            m.predict(np.zeros((4, 3)))

    def test_non_finite_inputs_rejected(self):
        m = Approximator(tiny_config())
        with pytest.raises(ValueError):
            m.predict(np.array([[np.nan, 0.0]]))


class TestGradients:
    def test_grad_check_squared_identity(self):
        X, y = toy_data(n=16, seed=1)
        m = Approximator(tiny_config(seed=1))
        assert grad_check(m, X, y, loss="squared") < 1e-6

    def test_grad_check_bernoulli_logistic(self):
        X, y = toy_data(n=16, seed=2, binary=True)
        m = Approximator(tiny_config(seed=2, output_activation="logistic"))
        assert grad_check(m, X, y, loss="bernoulli") < 1e-6

    def test_grad_check_weighted(self):
        X, y = toy_data(n=16, seed=3)
        w = np.random.default_rng(3).uniform(0.1, 2.0, size=16)
        m = Approximator(tiny_config(seed=3))
        assert grad_check(m, X, y, sample_weights=w, loss="squared") < 1e-6

    def test_zero_weight_rows_do_not_contribute(self):
        X, y = toy_data(n=20, seed=4)
        w = np.ones(20)
        w[10:] = 0.0
        cfg = tiny_config(seed=4, epochs=5, batch_size=20)
        m1, _ = train(cfg, X, y, sample_weights=w)
        y2 = y.copy()
        y2[10:] = 999.0  # only zero-weight rows change
        m2, _ = train(cfg, X, y2, sample_weights=w)
        np.testing.assert_array_equal(m1.predict(X), m2.predict(X))


class TestTraining:
    def test_loss_decreases_on_learnable_signal(self):
        X, y = toy_data(n=256, seed=5)
        cfg = tiny_config(hidden_layers=(16, 16), epochs=30, batch_size=32,
                          learning_rate=0.3, seed=5)
        m, trace = train(cfg, X, y)
        assert trace[-1] < trace[0] * 0.7

    def test_weight_scaling_by_powers_of_two_is_exact(self):
        # loss is mean(w * l); scaling w by 2^k scales every gradient by the
        # same power of two, which binary floats carry exactly
        X, y = toy_data(n=64, seed=6)
        w = np.random.default_rng(6).uniform(0.5, 1.5, size=64)
        cfg = tiny_config(epochs=4, batch_size=16, learning_rate=0.025, seed=6)
        ref, _ = train(cfg, X, y, sample_weights=w)
        cfg4 = tiny_config(epochs=4, batch_size=16, learning_rate=0.025 / 4.0, seed=6)
        scaled, _ = train(cfg4, X, y, sample_weights=4.0 * w)
        for wa, wb in zip(ref.weights, scaled.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_training_is_reproducible(self):
        X, y = toy_data(n=64, seed=7)
        cfg = tiny_config(epochs=4, dropout_rate=0.2, seed=7)
        m1, t1 = train(cfg, X, y)
        m2, t2 = train(cfg, X, y)
        assert t1 == t2
        np.testing.assert_array_equal(m1.predict(X), m2.predict(X))

    def test_constant_schedule_differs_from_linear(self):
        X, y = toy_data(n=64, seed=8)
        m_lin, _ = train(tiny_config(epochs=4, seed=8, lr_schedule="linear"), X, y)
        m_con, _ = train(tiny_config(epochs=4, seed=8, lr_schedule="constant"), X, y)
        assert np.any(m_lin.predict(X) != m_con.predict(X))

    def test_early_stopping_restores_best_parameters(self):
        X, y = toy_data(n=128, seed=9)
        cfg = tiny_config(epochs=40, val_fraction=0.25, patience=3,
                          learning_rate=0.5, seed=9)
        m, _ = train(cfg, X, y)
        assert len(m.val_trace) <= 40
        best = min(m.val_trace)
        n_val = int(round(128 * 0.25))
        rng = np.random.default_rng(9)
        # the validation rows are the first block of the seeded permutation
        state = Approximator(cfg)  # consumes the same init draws
        perm = state._rng.permutation(128)
        val_idx = perm[:n_val]
        final_val = m.loss_value(X[val_idx], y[val_idx], np.ones(n_val), "squared")
        assert final_val == pytest.approx(best, rel=1e-12)

    def test_bernoulli_fits_a_constant_rate(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(2000, 1))
        y = (rng.random(2000) < 0.3).astype(float)
        cfg = ApproxConfig(input_dim=1, hidden_layers=(8,), epochs=20,
                           batch_size=64, learning_rate=0.5, seed=10,
                           output_activation="logistic")
        m, _ = train(cfg, X, y, loss="bernoulli")
        preds = m.predict(X)
        assert abs(preds.mean() - y.mean()) < 0.03

    def test_validation_errors(self):
        X, y = toy_data(n=16)
        with pytest.raises(ValueError, match="loss kind"):
            train(tiny_config(), X, y, loss="huber")
        with pytest.raises(ValueError, match="logistic"):
            train(tiny_config(), X, (y > 0).astype(float), loss="bernoulli")
        with pytest.raises(ValueError, match="0 or 1"):
            train(tiny_config(output_activation="logistic"), X, y, loss="bernoulli")
        with pytest.raises(ValueError, match="one value per input row"):
            train(tiny_config(), X, y[:-1])
        with pytest.raises(ValueError, match="non-finite"):
            train(tiny_config(), X, np.full_like(y, np.nan))
        with pytest.raises(ValueError, match="nonnegative"):
            train(tiny_config(output_activation="logistic"), X,
                  (y > 0).astype(float), sample_weights=np.full(16, -1.0),
                  loss="bernoulli")

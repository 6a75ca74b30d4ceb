import numpy as np
import pytest

from survtau.approximator import ApproxConfig, Approximator
from survtau.data import Dataset
from survtau.nuisance import NuisanceSet
from survtau.orthogonal import PseudoRow
from survtau.second_stage import (
    TAU_CLAMP_SLACK,
    TauModel,
    default_second_stage_config,
    fit_rmst,
    fit_tau,
    plugin_tau,
    predict_tau,
)
from survtau.weighting import WeightScheme

from test_orthogonal import LAM_G, LAM_S, mixed_dataset, stub_nuisance_set


def make_rows(x, phi, rho=None, f=None):
    n = len(x)
    rho = np.ones(n) if rho is None else np.asarray(rho, dtype=float)
    f = np.ones(n) if f is None else np.asarray(f, dtype=float)
    return [PseudoRow(x=np.atleast_1d(np.asarray(x[i], dtype=float)),
                      rho=float(rho[i]), phi=float(phi[i]), f_value=float(f[i]),
                      xi_s=0.0, xi_g=0.0, rho_raw=float(rho[i]))
            for i in range(n)]


def small_cfg(**kw):
    base = dict(input_dim=1, hidden_layers=(8, 8), epochs=60, batch_size=32,
                learning_rate=0.1, seed=0)
    base.update(kw)
    return ApproxConfig(**base)


class TestFitTau:
    def test_recovers_smooth_signal(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-2, 2, size=400)
        truth = 0.3 * np.tanh(x)
        rows = make_rows(x, truth)
        model = fit_tau(rows, small_cfg(hidden_layers=(16, 16), epochs=250),
                        scheme="none", horizon=2)
        grid = np.linspace(-1.5, 1.5, 7)[:, None]
        np.testing.assert_allclose(predict_tau(model, grid), 0.3 * np.tanh(grid[:, 0]),
                                   atol=0.05)
        assert model.horizon == 2
        assert model.scheme is WeightScheme.NONE
        assert model.f_sum == pytest.approx(400.0)

    def test_loss_normalizer_cancels_common_weight_scale(self):
        # rho and f scaled by the same power of two leave the effective
        # sample weights rho * n / sum(f) bitwise unchanged
        rng = np.random.default_rng(1)
        x = rng.uniform(-1, 1, size=100)
        phi = np.sin(x)
        rho = rng.uniform(0.5, 1.5, size=100)
        a = fit_tau(make_rows(x, phi, rho=rho, f=rho), small_cfg(epochs=5))
        b = fit_tau(make_rows(x, phi, rho=4.0 * rho, f=4.0 * rho), small_cfg(epochs=5))
        for wa, wb in zip(a.net.weights, b.net.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_weighting_tilts_the_fit(self):
        # two point masses at x = -1 and x = 1 with conflicting targets;
        # upweighting the right mass pulls the prediction there
        x = np.array([-1.0] * 50 + [1.0] * 50)
        phi = np.array([0.0] * 50 + [1.0] * 50)
        rho = np.array([1.0] * 50 + [9.0] * 50)
        rows = make_rows(x, phi, rho=rho, f=rho)
        model = fit_tau(rows, small_cfg(epochs=400))
        assert abs(predict_tau(model, np.array([1.0])) - 1.0) < 0.05

    def test_validation_errors(self):
        with pytest.raises(ValueError, match="no pseudo rows"):
            fit_tau([], small_cfg())
        rows = make_rows(np.array([0.0, 1.0]), np.array([0.1, 0.2]),
                         rho=np.zeros(2))
        with pytest.raises(ValueError, match="weights are zero"):
            fit_tau(rows, small_cfg())
        rows = make_rows(np.array([0.0, 1.0]), np.array([0.1, 0.2]),
                         f=np.zeros(2))
        with pytest.raises(ValueError, match="weight-function total"):
            fit_tau(rows, small_cfg())


class TestPredictTau:
    def test_clamp_applies_both_ways(self):
        net = Approximator(small_cfg())
        model = TauModel(net=net, horizon=0, scheme=WeightScheme.NONE,
                         f_sum=1.0, clamp=0.01, train_trace=[], val_trace=[])
        x = np.linspace(-3, 3, 11)[:, None]
        out = predict_tau(model, x)
        assert np.all(np.abs(out) <= 0.01)

    def test_single_vector_returns_float(self):
        net = Approximator(small_cfg())
        model = TauModel(net=net, horizon=0, scheme=WeightScheme.NONE,
                         f_sum=1.0, clamp=1.5, train_trace=[], val_trace=[])
        assert isinstance(predict_tau(model, np.zeros(1)), float)

    def test_trace_properties_handle_empty(self):
        net = Approximator(small_cfg())
        model = TauModel(net=net, horizon=0, scheme=WeightScheme.NONE,
                         f_sum=1.0, clamp=1.5, train_trace=[], val_trace=[])
        assert np.isnan(model.train_loss_final)
        assert np.isnan(model.val_loss_final)
        model2 = TauModel(net=net, horizon=0, scheme=WeightScheme.NONE,
                          f_sum=1.0, clamp=1.5, train_trace=[1.0, 0.5],
                          val_trace=[2.0, 0.7, 0.9])
        assert model2.train_loss_final == 0.5
        assert model2.val_loss_final == 0.7


class TestPluginTau:
    def test_survival_contrast_from_stub(self):
        nuis = stub_nuisance_set()
        # S_1(x, 1) - S_1(x, 0) = 0.8 * 0.8 - 0.5 * 0.5
        assert plugin_tau(nuis, np.zeros(1), 1) == pytest.approx(0.39, rel=1e-9)
        assert plugin_tau(nuis, np.zeros(1), 0) == pytest.approx(0.30, rel=1e-9)
        batch = plugin_tau(nuis, np.zeros((4, 1)), 1)
        np.testing.assert_allclose(batch, 0.39, rtol=1e-9)

    def test_horizon_bounds(self):
        with pytest.raises(ValueError, match="t must lie"):
            plugin_tau(stub_nuisance_set(), np.zeros(1), 9)


class TestFitRmst:
    def test_smoke_and_clamp_width(self):
        d = mixed_dataset()
        model, report = fit_rmst(d, stub_nuisance_set(), "c", h=1,
                                 cfg=small_cfg(epochs=3))
        assert model.horizon == 1
        assert model.clamp == pytest.approx(2.0 + TAU_CLAMP_SLACK)
        assert report.horizon == 1
        assert report.n_rows == len(d)
        out = predict_tau(model, np.zeros((3, 1)))
        assert np.all(np.abs(out) <= model.clamp)


class TestDefaults:
    def test_default_config_dimensions(self):
        cfg = default_second_stage_config(7, seed=3)
        assert cfg.input_dim == 7
        assert cfg.seed == 3
        assert cfg.output_activation == "identity"

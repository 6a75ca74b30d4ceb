"""Second-stage regression: fit g(x) to the pseudo-outcomes under rho weights.

The empirical objective is sum_i rho_i (phi_i - g(x_i))^2 / sum_i f_i. The
normalizer does not depend on g, so training minimizes the weighted sum and
the normalizer is only recorded on the fitted model. Early stopping on a
held-out slice of the pseudo rows keeps occasional negative weights from
driving the fit off; the best-epoch parameters are restored.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .approximator import Approximator, ApproxConfig, train
from .data import Dataset
from .nuisance import NuisanceSet
from .orthogonal import GuardReport, PseudoRow, build_rmst_rows
from .weighting import WeightScheme, parse_scheme

# Predictions for a probability contrast live in [-1, 1]; allow slack for
# an imperfect fit before clamping.
TAU_CLAMP_SLACK = 0.5


def default_second_stage_config(p: int, seed: int = 0) -> ApproxConfig:
    return ApproxConfig(
        input_dim=p,
        hidden_layers=(64, 64, 64),
        output_activation="identity",
        epochs=30,
        batch_size=64,
        learning_rate=0.01,
        dropout_rate=0.0,
        seed=seed,
        val_fraction=0.4,
        patience=5,
    )


@dataclasses.dataclass
class TauModel:
    """A fitted effect curve at one horizon, with training metadata."""

    net: Approximator
    horizon: int
    scheme: WeightScheme
    f_sum: float                 # the constant loss normalizer, for the record
    clamp: float
    train_trace: list[float]
    val_trace: list[float]

    @property
    def train_loss_final(self) -> float:
        return self.train_trace[-1] if self.train_trace else float("nan")

    @property
    def val_loss_final(self) -> float:
        return min(self.val_trace) if self.val_trace else float("nan")


def fit_tau(rows: list[PseudoRow], cfg: ApproxConfig, scheme=WeightScheme.NONE,
            horizon: int = 0, clamp: float = 1.0 + TAU_CLAMP_SLACK) -> TauModel:
    """Weighted regression of phi on x, minimizing sum rho*(phi-g)^2 / sum f.

    Dividing by sum f puts every scheme's loss on the same scale (rho has
    conditional mean f), so one step-size default works across schemes.
    """
    if not rows:
        raise ValueError("no pseudo rows to fit")
    scheme = parse_scheme(scheme)
    X = np.stack([r.x for r in rows])
    y = np.array([r.phi for r in rows])
    w = np.array([r.rho for r in rows])
    f_sum = float(sum(r.f_value for r in rows))
    if not np.any(w != 0.0):
        raise ValueError("all pseudo-row weights are zero")
    if f_sum <= 0.0:
        raise ValueError("nonpositive weight-function total")
    net, trace = train(cfg, X, y, sample_weights=w * (len(rows) / f_sum),
                       loss="squared")
    return TauModel(net=net, horizon=horizon, scheme=scheme, f_sum=f_sum,
                    clamp=clamp, train_trace=trace, val_trace=list(net.val_trace))


def predict_tau(m: TauModel, x):
    """Clamped effect predictions; a single vector yields a float."""
    out = m.net.predict(x)
    if isinstance(out, float):
        return float(np.clip(out, -m.clamp, m.clamp))
    return np.clip(out, -m.clamp, m.clamp)


def plugin_tau(nuis: NuisanceSet, x, t: int):
    """First-stage plug-in contrast S_t(x, 1) - S_t(x, 0), no orthogonal
    correction. A single vector yields a float."""
    if not 0 <= t <= nuis.t_max:
        raise ValueError(f"t must lie in [0, {nuis.t_max}]")
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    grid = nuis.grid(np.atleast_2d(x))
    vals = grid.s[:, t, 1] - grid.s[:, t, 0]
    return float(vals[0]) if single else vals


def fit_rmst(d: Dataset, fn, scheme, h: int, cfg: ApproxConfig,
             rho_guard: float = 1e-3, rho_cap: float = 100.0,
             clamp_negative_rho: bool = False) -> tuple[TauModel, GuardReport]:
    """Fit the cumulative contrast sum_{t<=h} tau_t from rho-weighted rows.

    The target sums h + 1 probability contrasts, so the prediction clamp
    widens to (h + 1) plus the usual slack.
    """
    rows, report = build_rmst_rows(d, fn, scheme, h, rho_guard=rho_guard,
                                   rho_cap=rho_cap,
                                   clamp_negative_rho=clamp_negative_rho)
    model = fit_tau(rows, cfg, scheme=scheme, horizon=h,
                    clamp=float(h + 1) + TAU_CLAMP_SLACK)
    return model, report

"""Small feed-forward approximators trained with plain minibatch SGD.

Sigmoid hidden units, an identity or logistic output head, weighted squared
error or weighted Bernoulli negative log likelihood, inverted dropout, and
an optional validation split with patience-based early stopping. The loop is
deliberately plain (shuffled minibatches with classical momentum, no
adaptive moments; the step size is either constant or decays linearly to
zero over the planned steps) so a run is reproducible from its seed alone:
parameter draws, the validation split, epoch shuffles and dropout masks all
consume one generator in a fixed order.

Loss convention: a batch loss is the mean over the batch of
w_i * loss_i, so per-sample weights scale gradients linearly.
"""

from __future__ import annotations

import dataclasses

import numpy as np

LOSS_KINDS = ("squared", "bernoulli")
OUTPUT_ACTIVATIONS = ("identity", "logistic")
LR_SCHEDULES = ("constant", "linear")

# Logistic predictions are kept strictly inside (0, 1).
PRED_CLIP = 1e-6


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logit(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


@dataclasses.dataclass(frozen=True)
class ApproxConfig:
    """Architecture and training settings for one approximator."""

    input_dim: int
    hidden_layers: tuple[int, ...] = (20, 20, 20)
    output_activation: str = "identity"
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.1
    lr_schedule: str = "linear"  # "linear" anneals the step size to zero
    momentum: float = 0.0       # classical heavy-ball coefficient
    dropout_rate: float = 0.0
    seed: int = 0
    val_fraction: float = 0.0   # > 0 enables early stopping
    patience: int = 5

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if self.input_dim < 1:
            raise ValueError("input_dim must be at least 1")
        if any(h < 1 for h in self.hidden_layers):
            raise ValueError("hidden layer widths must be at least 1")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {OUTPUT_ACTIVATIONS}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ValueError(f"lr_schedule must be one of {LR_SCHEDULES}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")


class Approximator:
    """Feed-forward net; parameters drawn U(+-1/sqrt(fan_in)) at creation."""

    def __init__(self, config: ApproxConfig):
        self.config = config
        self._rng = np.random.default_rng(config.seed)
        dims = (config.input_dim,) + config.hidden_layers + (1,)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(self._rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(self._rng.uniform(-bound, bound, size=fan_out))
        self.train_trace: list[float] = []
        self.val_trace: list[float] = []

    @property
    def n_parameters(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def _forward(self, X: np.ndarray, rng=None):
        """Return (hidden pre-dropout activations, post-dropout, masks, output z).

        A generator enables inverted dropout on the hidden layers; prediction
        paths pass rng=None and get the deterministic network.
        """
        q = self.config.dropout_rate
        acts, dropped, masks = [], [X], []
        h = X
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = sigmoid(h @ W + b)
            acts.append(h)
            if rng is not None and q > 0.0:
                mask = (rng.random(h.shape) >= q) / (1.0 - q)
                h = h * mask
                masks.append(mask)
            else:
                masks.append(None)
            dropped.append(h)
        z = (h @ self.weights[-1] + self.biases[-1])[:, 0]
        return acts, dropped, masks, z

    def predict(self, X) -> np.ndarray:
        """Deterministic predictions; logistic output is clipped into
        (PRED_CLIP, 1 - PRED_CLIP). A single vector yields a float."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.config.input_dim:
            raise ValueError(
                f"expected inputs of width {self.config.input_dim}, got {X.shape[1]}")
        if not np.isfinite(X).all():
            raise ValueError("non-finite inputs")
        _, _, _, z = self._forward(X)
        if self.config.output_activation == "logistic":
            out = np.clip(sigmoid(z), PRED_CLIP, 1.0 - PRED_CLIP)
        else:
            out = z
        return float(out[0]) if single else out

    def _loss_and_grad_z(self, z, y, w, loss_kind):
        """Batch loss and dL/dz at the output head."""
        B = z.shape[0]
        if self.config.output_activation == "logistic":
            pred = sigmoid(z)
        else:
            pred = z
        if loss_kind == "squared":
            r = pred - y
            loss = float(np.mean(w * r * r))
            dpred = 2.0 * w * r / B
            if self.config.output_activation == "logistic":
                dz = dpred * pred * (1.0 - pred)
            else:
                dz = dpred
        else:  # bernoulli, logistic head enforced upstream
            per = np.logaddexp(0.0, z) - y * z
            loss = float(np.mean(w * per))
            dz = w * (pred - y) / B
        return loss, dz

    def _backward(self, X, acts, dropped, masks, dz):
        """Gradients of the batch loss in every weight and bias."""
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        delta = dz[:, None]
        for layer in range(len(self.weights) - 1, -1, -1):
            below = dropped[layer]
            gw[layer] = below.T @ delta
            gb[layer] = delta.sum(axis=0)
            if layer > 0:
                dh = delta @ self.weights[layer].T
                if masks[layer - 1] is not None:
                    dh = dh * masks[layer - 1]
                h = acts[layer - 1]
                delta = dh * h * (1.0 - h)
        return gw, gb

    def loss_value(self, X, y, w, loss_kind) -> float:
        """Full-batch loss without dropout."""
        _, _, _, z = self._forward(np.atleast_2d(np.asarray(X, dtype=float)))
        loss, _ = self._loss_and_grad_z(z, y, w, loss_kind)
        return loss

    def _flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.weights + self.biases])

    def _set_flat_params(self, theta: np.ndarray) -> None:
        k = 0
        for p in self.weights + self.biases:
            p[...] = theta[k:k + p.size].reshape(p.shape)
            k += p.size

    def _copy_params(self):
        return [w.copy() for w in self.weights], [b.copy() for b in self.biases]

    def _restore_params(self, snapshot) -> None:
        ws, bs = snapshot
        self.weights = [w.copy() for w in ws]
        self.biases = [b.copy() for b in bs]


def _validate_training_inputs(cfg, X, y, w, loss_kind):
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"loss kind must be one of {LOSS_KINDS}, got {loss_kind!r}")
    if X.ndim != 2 or X.shape[1] != cfg.input_dim:
        raise ValueError(f"inputs must have shape (n, {cfg.input_dim})")
    if y.shape != (X.shape[0],) or w.shape != (X.shape[0],):
        raise ValueError("targets and weights must be one value per input row")
    if not (np.isfinite(X).all() and np.isfinite(y).all() and np.isfinite(w).all()):
        raise ValueError("non-finite training data")
    if loss_kind == "bernoulli":
        if cfg.output_activation != "logistic":
            raise ValueError("bernoulli loss requires a logistic output")
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("bernoulli targets must be 0 or 1")
        if (w < 0).any():
            raise ValueError("bernoulli loss requires nonnegative weights")


def train(cfg: ApproxConfig, inputs, targets, sample_weights=None,
          loss: str = "squared") -> tuple[Approximator, list[float]]:
    """Fit a fresh approximator; returns (model, per-epoch train loss trace).

    With cfg.val_fraction > 0 the rows are split once up front, the
    validation loss is tracked per epoch, training stops after
    cfg.patience epochs without improvement, and the best parameters are
    restored. Traces are also kept on the model (train_trace, val_trace).
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float)
    w = np.ones(X.shape[0]) if sample_weights is None else np.asarray(sample_weights, dtype=float)
    _validate_training_inputs(cfg, X, y, w, loss)

    model = Approximator(cfg)
    rng = model._rng
    n = X.shape[0]

    if cfg.val_fraction > 0.0:
        n_val = int(round(n * cfg.val_fraction))
        n_val = min(max(n_val, 1), n - 1)
        perm = rng.permutation(n)
        val_idx, tr_idx = perm[:n_val], perm[n_val:]
    else:
        tr_idx, val_idx = np.arange(n), None

    Xt, yt, wt = X[tr_idx], y[tr_idx], w[tr_idx]
    if val_idx is not None:
        Xv, yv, wv = X[val_idx], y[val_idx], w[val_idx]

    steps_per_epoch = (len(tr_idx) + cfg.batch_size - 1) // cfg.batch_size
    total_steps = cfg.epochs * steps_per_epoch
    step = 0

    vel_w = [np.zeros_like(W) for W in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    best = None
    best_val = np.inf
    stale = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(tr_idx))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            acts, dropped, masks, z = model._forward(Xt[idx], rng=rng)
            _, dz = model._loss_and_grad_z(z, yt[idx], wt[idx], loss)
            gw, gb = model._backward(Xt[idx], acts, dropped, masks, dz)
            if cfg.lr_schedule == "linear":
                lr = cfg.learning_rate * (1.0 - step / total_steps)
            else:
                lr = cfg.learning_rate
            step += 1
            for W, v, g in zip(model.weights, vel_w, gw):
                v *= cfg.momentum
                v -= lr * g
                W += v
            for b, v, g in zip(model.biases, vel_b, gb):
                v *= cfg.momentum
                v -= lr * g
                b += v
        model.train_trace.append(model.loss_value(Xt, yt, wt, loss))
        if val_idx is not None:
            val = model.loss_value(Xv, yv, wv, loss)
            model.val_trace.append(val)
            if val < best_val:
                best_val, best, stale = val, model._copy_params(), 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    if best is not None:
        model._restore_params(best)
    return model, list(model.train_trace)


def grad_check(model: Approximator, inputs, targets, sample_weights=None,
               loss: str = "squared", step: float = 1e-5) -> float:
    """Relative gap between backprop and central finite differences.

    Returns max_i |g_analytic - g_numeric| / max(||g_a||_inf, ||g_n||_inf,
    1e-8), evaluated on the full batch without dropout.
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float)
    w = np.ones(X.shape[0]) if sample_weights is None else np.asarray(sample_weights, dtype=float)
    _validate_training_inputs(model.config, X, y, w, loss)

    acts, dropped, masks, z = model._forward(X)
    _, dz = model._loss_and_grad_z(z, y, w, loss)
    gw, gb = model._backward(X, acts, dropped, masks, dz)
    analytic = np.concatenate([g.ravel() for g in gw + gb])

    theta = model._flat_params()
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        for sign, slot in ((1.0, 0), (-1.0, 1)):
            bumped = theta.copy()
            bumped[i] += sign * step
            model._set_flat_params(bumped)
            if slot == 0:
                up = model.loss_value(X, y, w, loss)
            else:
                down = model.loss_value(X, y, w, loss)
        numeric[i] = (up - down) / (2.0 * step)
    model._set_flat_params(theta)

    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / scale)

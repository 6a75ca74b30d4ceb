"""Nuisance estimation: propensity, event hazard, censoring hazard.

Hazard models are fit on the person-period expansion: a subject observed to
time t_tilde contributes one Bernoulli record per grid index j <= t_tilde,
labeled 1 only at j = t_tilde and only when the relevant indicator is set.
Maximizing the weighted Bernoulli likelihood over these records equals
maximizing the discrete-time hazard likelihood directly.

Evaluation happens through NuisanceSet, which derives survival and censoring
curves as products of one minus the hazards and applies the clipping policy
exactly once: pi into [clip_eps, 1 - clip_eps], the S and G columns floored
at clip_eps. Cross-fitting assigns folds by shuffled row index; each row is
evaluated by the model trained on its complement.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .approximator import Approximator, ApproxConfig, train
from .data import Dataset, NuisanceAtPoint, TildeEta, survival_from_hazards

HAZARD_KINDS = ("s", "g")


def hazard_input_dim(p: int, t_max: int) -> int:
    """Covariates, arm, one-hot time index."""
    return p + 1 + (t_max + 1)


def default_propensity_config(p: int, seed: int = 0) -> ApproxConfig:
    return ApproxConfig(
        input_dim=p,
        hidden_layers=(20, 20, 20),
        output_activation="logistic",
        epochs=10,
        batch_size=64,
        learning_rate=1.5,
        dropout_rate=0.1,
        seed=seed,
    )


def default_hazard_config(p: int, t_max: int, seed: int = 0) -> ApproxConfig:
    return ApproxConfig(
        input_dim=hazard_input_dim(p, t_max),
        hidden_layers=(20, 20, 20),
        output_activation="logistic",
        epochs=40,
        batch_size=256,
        learning_rate=3.0,
        dropout_rate=0.0,
        seed=seed,
    )


def person_period(d: Dataset, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Expand rows into per-grid-index Bernoulli records for one hazard kind.

    Returns (features, labels) where features are [x, a, onehot(j)] for
    j = 0..t_tilde per subject and the label is delta * 1(j == t_tilde).
    """
    kind = _check_kind(kind)
    delta = d.delta_s if kind == "s" else d.delta_g
    n = len(d)
    counts = d.t_tilde + 1
    total = int(counts.sum())
    subject = np.repeat(np.arange(n), counts)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    j = np.arange(total) - starts
    feats = np.zeros((total, hazard_input_dim(d.p, d.t_max)))
    feats[:, :d.p] = d.x[subject]
    feats[:, d.p] = d.a[subject]
    feats[np.arange(total), d.p + 1 + j] = 1.0
    labels = (delta[subject] * (j == d.t_tilde[subject])).astype(float)
    return feats, labels


def _check_kind(kind: str) -> str:
    k = str(kind).strip().lower()
    if k not in HAZARD_KINDS:
        raise ValueError(f"hazard kind must be one of {HAZARD_KINDS}, got {kind!r}")
    return k


@dataclasses.dataclass
class HazardModel:
    """A fitted discrete-time hazard lambda_t(x, a) over the full grid."""

    net: Approximator
    kind: str
    t_max: int
    p: int

    def grid(self, X: np.ndarray) -> np.ndarray:
        """Hazards for every (t, a), shape (n, t_max + 1, 2)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        out = np.empty((n, self.t_max + 1, 2))
        feats = np.zeros((n, hazard_input_dim(self.p, self.t_max)))
        feats[:, :self.p] = X
        for a in (0, 1):
            feats[:, self.p] = a
            for t in range(self.t_max + 1):
                feats[:, self.p + 1:] = 0.0
                feats[:, self.p + 1 + t] = 1.0
                out[:, t, a] = self.net.predict(feats)
        return out

    def hazard(self, x: np.ndarray, a: int, t: int) -> float:
        return float(self.grid(np.atleast_2d(x))[0, t, a])


def fit_propensity(d: Dataset, cfg: ApproxConfig) -> Approximator:
    """Fit pi(x) = P(A = 1 | x) by weighted Bernoulli regression."""
    arms = np.unique(d.a)
    if arms.size < 2:
        raise ValueError("single-arm dataset, propensity is not identified")
    if cfg.output_activation != "logistic":
        raise ValueError("propensity model needs a logistic output")
    if cfg.input_dim != d.p:
        raise ValueError(f"config input_dim {cfg.input_dim} does not match p={d.p}")
    model, _ = train(cfg, d.x, d.a.astype(float), loss="bernoulli")
    return model


def fit_hazard(d: Dataset, kind: str, cfg: ApproxConfig) -> HazardModel:
    """Fit the event (kind 's') or censoring (kind 'g') hazard."""
    kind = _check_kind(kind)
    delta = d.delta_s if kind == "s" else d.delta_g
    if int(delta.sum()) == 0:
        raise ValueError(f"no events of kind {kind!r} in the dataset")
    if cfg.output_activation != "logistic":
        raise ValueError("hazard model needs a logistic output")
    expected = hazard_input_dim(d.p, d.t_max)
    if cfg.input_dim != expected:
        raise ValueError(f"config input_dim {cfg.input_dim} does not match {expected}")
    feats, labels = person_period(d, kind)
    net, _ = train(cfg, feats, labels, loss="bernoulli")
    return HazardModel(net=net, kind=kind, t_max=d.t_max, p=d.p)


def survival_curve(h: HazardModel, x: np.ndarray, a: int, t: int) -> np.ndarray:
    """S_0..S_t at one point: cumulative products of one minus the hazard."""
    if not 0 <= t <= h.t_max:
        raise ValueError(f"t must lie in [0, {h.t_max}]")
    lam = h.grid(np.atleast_2d(x))[0, :t + 1, a]
    return survival_from_hazards(lam)


@dataclasses.dataclass(frozen=True)
class NuisanceGrid:
    """Clipped nuisance values for a batch of points over the full grid.

    pi has shape (n,); hazard and survival arrays have shape
    (n, t_max + 1, 2) indexed [row, t, a]. s and g are already floored.
    """

    pi: np.ndarray
    lambda_s: np.ndarray
    lambda_g: np.ndarray
    s: np.ndarray
    g: np.ndarray
    t_max: int
    clip_eps: float

    def eta_prev(self, t: int):
        """(pi, S_{t-1}(1), S_{t-1}(0), G_{t-1}(1), G_{t-1}(0)) as arrays."""
        if t == 0:
            one = np.ones_like(self.pi)
            return self.pi, one, one, one, one
        return (self.pi, self.s[:, t - 1, 1], self.s[:, t - 1, 0],
                self.g[:, t - 1, 1], self.g[:, t - 1, 0])

    def at(self, i: int) -> NuisanceAtPoint:
        return NuisanceAtPoint(
            pi=float(self.pi[i]),
            lambda_s=self.lambda_s[i],
            lambda_g=self.lambda_g[i],
            s=self.s[i],
            g=self.g[i],
        )


@dataclasses.dataclass
class NuisanceSet:
    """One propensity model plus the two hazard models, with clipping policy.

    The components only need a predict/grid interface, so fitted networks
    and closed-form ground-truth wrappers are interchangeable here.
    """

    propensity: object   # .predict(X) -> (n,)
    hazard_s: object     # .grid(X) -> (n, t_max + 1, 2)
    hazard_g: object
    t_max: int
    clip_eps: float = 0.01

    def grid(self, X: np.ndarray) -> NuisanceGrid:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        eps = self.clip_eps
        pi = np.clip(np.asarray(self.propensity.predict(X), dtype=float), eps, 1.0 - eps)
        lam_s = self.hazard_s.grid(X)
        lam_g = self.hazard_g.grid(X)
        s = np.maximum(survival_from_hazards(lam_s, axis=1), eps)
        g = np.maximum(survival_from_hazards(lam_g, axis=1), eps)
        return NuisanceGrid(pi=pi, lambda_s=lam_s, lambda_g=lam_g, s=s, g=g,
                            t_max=self.t_max, clip_eps=eps)

    def evaluate(self, x: np.ndarray, t: int) -> tuple[NuisanceAtPoint, TildeEta]:
        """All nuisance values at one point plus the horizon-t weight inputs."""
        if not 0 <= t <= self.t_max:
            raise ValueError(f"t must lie in [0, {self.t_max}]")
        grid = self.grid(np.atleast_2d(np.asarray(x, dtype=float)))
        pi, s1p, s0p, g1p, g0p = (float(v[0]) for v in grid.eta_prev(t))
        return grid.at(0), TildeEta(pi=pi, s1_prev=s1p, s0_prev=s0p,
                                    g1_prev=g1p, g0_prev=g0p)


@dataclasses.dataclass
class FoldedNuisances:
    """Per-fold nuisance sets plus the row-to-fold assignment.

    fold_of is aligned with the row order of the dataset the folds were
    built from; evaluate_dataset scatters per-fold grids back to that order.
    """

    fold_of: np.ndarray
    sets: list[NuisanceSet]

    @property
    def t_max(self) -> int:
        return self.sets[0].t_max

    @property
    def clip_eps(self) -> float:
        return self.sets[0].clip_eps

    @classmethod
    def single(cls, nuis: NuisanceSet, n: int) -> "FoldedNuisances":
        return cls(fold_of=np.zeros(n, dtype=int), sets=[nuis])

    def evaluate_dataset(self, d: Dataset) -> NuisanceGrid:
        if len(d) != self.fold_of.shape[0]:
            raise ValueError("dataset does not match the fold assignment")
        n, T = len(d), self.t_max
        pi = np.empty(n)
        lam_s = np.empty((n, T + 1, 2))
        lam_g = np.empty((n, T + 1, 2))
        s = np.empty((n, T + 1, 2))
        g = np.empty((n, T + 1, 2))
        for f, nuis in enumerate(self.sets):
            mask = self.fold_of == f
            if not mask.any():
                continue
            sub = nuis.grid(d.x[mask])
            pi[mask] = sub.pi
            lam_s[mask] = sub.lambda_s
            lam_g[mask] = sub.lambda_g
            s[mask] = sub.s
            g[mask] = sub.g
        return NuisanceGrid(pi=pi, lambda_s=lam_s, lambda_g=lam_g, s=s, g=g,
                            t_max=T, clip_eps=self.clip_eps)


def as_folded(nuis, n: int) -> FoldedNuisances:
    """Wrap a plain NuisanceSet; FoldedNuisances pass through."""
    if isinstance(nuis, FoldedNuisances):
        return nuis
    return FoldedNuisances.single(nuis, n)


def fit_nuisances(d: Dataset, prop_cfg: ApproxConfig, hazard_s_cfg: ApproxConfig,
                  hazard_g_cfg: ApproxConfig, clip_eps: float = 0.01) -> NuisanceSet:
    """Fit all three models on the full dataset (no cross-fitting)."""
    return NuisanceSet(
        propensity=fit_propensity(d, prop_cfg),
        hazard_s=fit_hazard(d, "s", hazard_s_cfg),
        hazard_g=fit_hazard(d, "g", hazard_g_cfg),
        t_max=d.t_max,
        clip_eps=clip_eps,
    )


def cross_fit(d: Dataset, k: int, prop_cfg: ApproxConfig, hazard_s_cfg: ApproxConfig,
              hazard_g_cfg: ApproxConfig, clip_eps: float = 0.01,
              seed: int = 0) -> FoldedNuisances:
    """K-fold cross-fitting: row i is evaluated by the models trained
    without its fold. Folds are a shuffled round-robin, sizes within one."""
    if k < 2:
        raise ValueError("cross-fitting needs k >= 2")
    n = len(d)
    if n < 2 * k:
        raise ValueError(f"too few rows ({n}) for k={k} folds")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=int)
    fold_of[rng.permutation(n)] = np.arange(n) % k
    sets = []
    for f in range(k):
        rest = d.subset(np.where(fold_of != f)[0])
        bump = f + 1
        sets.append(fit_nuisances(
            rest,
            dataclasses.replace(prop_cfg, seed=prop_cfg.seed + bump),
            dataclasses.replace(hazard_s_cfg, seed=hazard_s_cfg.seed + bump),
            dataclasses.replace(hazard_g_cfg, seed=hazard_g_cfg.seed + bump),
            clip_eps=clip_eps,
        ))
    return FoldedNuisances(fold_of=fold_of, sets=sets)

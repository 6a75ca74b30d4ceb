"""Synthetic censored-outcome benchmarks with known effect functions.

Two scenarios, each with a full-overlap base version and three low-overlap
variants obtained by replacing exactly one mechanism (propensity, censoring
hazard, survival hazard). Variants can be composed, e.g.
"low_treatment+low_censoring" replaces both.

Scenario 1: one standard-normal covariate, six grid steps, sigmoid hazards
drifting over time. Scenario 2: ten standard-normal covariates, thirty-one
grid steps, hazards driven by the covariate sum; the base version has no
random censoring at all.

Sampling draws event and censoring times independently from their discrete
hazard sequences, observes the earlier one (ties set both indicators), and
administratively censors survivors past the grid end: such rows are recorded
as t_tilde = t_max with delta_g = 1, delta_s = 0.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .approximator import sigmoid
from .data import Dataset, survival_from_hazards
from .nuisance import NuisanceSet

SETTINGS = ("full", "low_treatment", "low_censoring", "low_survival")


@dataclasses.dataclass(frozen=True)
class ScenarioSpec:
    """Which benchmark to draw: scenario, overlap setting, size, seed."""

    scenario: int
    setting: str = "full"
    n: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in (1, 2):
            raise ValueError(f"scenario must be 1 or 2, got {self.scenario}")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        self.violations()

    def violations(self) -> frozenset:
        """Set of mechanism replacements encoded by the setting string."""
        parts = [p.strip() for p in str(self.setting).split("+") if p.strip()]
        if not parts:
            raise ValueError("empty setting")
        for part in parts:
            if part not in SETTINGS:
                raise ValueError(f"unknown setting {part!r}, expected one of {SETTINGS}")
        if "full" in parts and len(parts) > 1:
            raise ValueError("'full' cannot be combined with low-overlap settings")
        return frozenset(p for p in parts if p != "full")


@dataclasses.dataclass(frozen=True)
class GroundTruth:
    """Closed-form mechanisms of one scenario variant.

    Grid-valued methods return arrays shaped (n, t_max + 1, 2) indexed
    [row, t, a]; tau_grid is the exact difference of survival products.
    """

    scenario: int
    setting: str
    p: int
    t_max: int
    violations: frozenset

    def pi(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.scenario == 1:
            x0 = X[:, 0]
            if "low_treatment" in self.violations:
                return sigmoid(2.0 * x0)
            return 0.5 * sigmoid(x0) + 0.2 * sigmoid(-x0)
        if "low_treatment" in self.violations:
            return sigmoid(3.0 * X[:, 0])
        return sigmoid(X.sum(axis=1))

    def hazard_g(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        t = np.arange(self.t_max + 1, dtype=float)
        out = np.empty((n, self.t_max + 1, 2))
        if self.scenario == 1:
            x0 = X[:, 0]
            if "low_censoring" in self.violations:
                lam = sigmoid(1.5 * (x0[:, None] + t[None, :]))
            else:
                lam = 0.5 * sigmoid(x0[:, None] + t[None, :])
            out[:, :, 0] = lam
            out[:, :, 1] = lam
            return out
        sx = X.sum(axis=1)
        if "low_censoring" in self.violations:
            for a in (0, 1):
                out[:, :, a] = 0.1 * sigmoid(10.0 * sx[:, None] + a * t[None, :])
            return out
        out.fill(0.0)
        return out

    def hazard_s(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        t = np.arange(self.t_max + 1, dtype=float)
        out = np.empty((n, self.t_max + 1, 2))
        if self.scenario == 1:
            x0 = X[:, 0]
            if "low_survival" in self.violations:
                for a in (0, 1):
                    out[:, :, a] = sigmoid(-a * x0[:, None] / (t[None, :] + 1.0))
            else:
                lam = 0.5 * sigmoid(x0[:, None] - t[None, :])
                out[:, :, 0] = lam
                out[:, :, 1] = lam
            return out
        sx = X.sum(axis=1)
        base = np.where(t[None, :] <= 10.0,
                        -0.5 * sx[:, None] ** 2,
                        10.0 * sx[:, None] ** 2)
        if "low_survival" in self.violations:
            drop = 0.5 + (sx >= 0.0)
            for a in (0, 1):
                out[:, :, a] = 0.1 * sigmoid(base - a * drop[:, None])
        else:
            lam = 0.1 * sigmoid(base)
            out[:, :, 0] = lam
            out[:, :, 1] = lam
        return out

    def survival_s(self, X: np.ndarray) -> np.ndarray:
        return survival_from_hazards(self.hazard_s(X), axis=1)

    def survival_g(self, X: np.ndarray) -> np.ndarray:
        return survival_from_hazards(self.hazard_g(X), axis=1)

    def tau_grid(self, X: np.ndarray) -> np.ndarray:
        """tau_t(x) = S_t(x, 1) - S_t(x, 0) for every t, shape (n, t_max + 1)."""
        s = self.survival_s(X)
        return s[:, :, 1] - s[:, :, 0]

    def tau(self, X: np.ndarray, t: int) -> np.ndarray:
        if not 0 <= t <= self.t_max:
            raise ValueError(f"t must lie in [0, {self.t_max}]")
        return self.tau_grid(X)[:, t]

    def rmst_tau(self, X: np.ndarray, h: int) -> np.ndarray:
        """Restricted mean survival-time contrast: sum of tau_t for t <= h."""
        if not 0 <= h <= self.t_max:
            raise ValueError(f"h must lie in [0, {self.t_max}]")
        return self.tau_grid(X)[:, :h + 1].sum(axis=1)


def _ground_truth(spec: ScenarioSpec) -> GroundTruth:
    p, t_max = (1, 5) if spec.scenario == 1 else (10, 30)
    return GroundTruth(scenario=spec.scenario, setting=spec.setting, p=p,
                       t_max=t_max, violations=spec.violations())


def _first_hit(uniforms: np.ndarray, hazards: np.ndarray, t_max: int) -> np.ndarray:
    """First grid index whose uniform falls below the hazard; t_max + 1 if none."""
    hit = uniforms < hazards
    return np.where(hit.any(axis=1), hit.argmax(axis=1), t_max + 1)


def generate(spec: ScenarioSpec) -> tuple[Dataset, GroundTruth]:
    """Draw one dataset. Generator order is fixed (covariates, treatment,
    event uniforms, censoring uniforms), so a spec pins the sample exactly."""
    gt = _ground_truth(spec)
    rng = np.random.default_rng(spec.seed)
    n, t_max = spec.n, gt.t_max
    X = rng.standard_normal((n, gt.p))
    a = (rng.random(n) < gt.pi(X)).astype(int)
    rows = np.arange(n)
    lam_s = gt.hazard_s(X)[rows, :, a]
    lam_g = gt.hazard_g(X)[rows, :, a]
    t_event = _first_hit(rng.random((n, t_max + 1)), lam_s, t_max)
    t_cens = _first_hit(rng.random((n, t_max + 1)), lam_g, t_max)

    t_both = np.minimum(t_event, t_cens)
    observed = t_both <= t_max
    t_tilde = np.where(observed, t_both, t_max)
    delta_s = (observed & (t_event <= t_cens)).astype(int)
    # Survivors past the grid end are administratively censored at t_max.
    delta_g = np.where(observed, (t_cens <= t_event).astype(int), 1)
    return Dataset(x=X, a=a, t_tilde=t_tilde, delta_s=delta_s,
                   delta_g=delta_g, t_max=t_max), gt


def true_cate(gt: GroundTruth, x, t: int):
    """tau_t at one point (float) or a batch (array)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    vals = gt.tau(np.atleast_2d(x), t)
    return float(vals[0]) if single else vals


class _TruePropensity:
    def __init__(self, gt: GroundTruth):
        self._gt = gt

    def predict(self, X):
        return self._gt.pi(X)


class _TrueHazard:
    def __init__(self, gt: GroundTruth, kind: str, shift: float):
        self._gt = gt
        self._kind = kind
        self._shift = shift

    def grid(self, X):
        lam = self._gt.hazard_s(X) if self._kind == "s" else self._gt.hazard_g(X)
        if self._shift != 0.0:
            lam = np.clip(lam + self._shift, 0.0, 1.0 - 1e-9)
        return lam


def as_nuisance_set(gt: GroundTruth, clip_eps: float = 1e-6,
                    hazard_shift: float = 0.0) -> NuisanceSet:
    """Expose the closed-form mechanisms through the fitted-model interface.

    The clip floor exists to guard estimated curves against degenerate
    values; exact mechanisms need no such guard, so the default here is
    essentially off (a floor that binds distorts the martingale terms built
    from these curves). hazard_shift adds a constant to both hazards before
    clipping; useful for probing how diagnostics react to deliberately
    wrong nuisances.
    """
    return NuisanceSet(
        propensity=_TruePropensity(gt),
        hazard_s=_TrueHazard(gt, "s", hazard_shift),
        hazard_g=_TrueHazard(gt, "g", hazard_shift),
        t_max=gt.t_max,
        clip_eps=clip_eps,
    )

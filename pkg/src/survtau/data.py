"""Core containers for censored discrete-time outcome data.

An observation is (x, a, t_tilde, delta_s, delta_g): covariates, a binary
treatment, the observed time min(T, C) on the grid {0, ..., t_max}, and the
event / censoring indicators (both are set when T == C). Datasets are stored
as column arrays sharing one grid so estimation code stays vectorized;
``row()`` materializes single observations on demand.

Survival conventions used throughout the package: S_t = prod_{i=0..t}(1 -
lambda_i), same for the censoring process G, with S_{-1} = G_{-1} = 1.
"""

from __future__ import annotations

import dataclasses
from typing import Iterator

import numpy as np


@dataclasses.dataclass(frozen=True)
class Observation:
    """One subject: covariates, arm, observed time and indicators."""

    x: np.ndarray
    a: int
    t_tilde: int
    delta_s: int
    delta_g: int

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)


@dataclasses.dataclass(frozen=True)
class Dataset:
    """Column-array view of n observations on the grid {0, ..., t_max}."""

    x: np.ndarray        # (n, p) float covariates
    a: np.ndarray        # (n,) int in {0, 1}
    t_tilde: np.ndarray  # (n,) int observed time
    delta_s: np.ndarray  # (n,) int event indicator
    delta_g: np.ndarray  # (n,) int censoring indicator
    t_max: int

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        cols = {"x": x}
        for name in ("a", "t_tilde", "delta_s", "delta_g"):
            col = np.asarray(getattr(self, name), dtype=int)
            if col.shape != (x.shape[0],):
                raise ValueError(f"{name} must have one value per row of x")
            cols[name] = col
        for name, arr in cols.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "t_max", int(self.t_max))

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.x.shape[0]

    def row(self, i: int) -> Observation:
        return Observation(
            x=self.x[i],
            a=int(self.a[i]),
            t_tilde=int(self.t_tilde[i]),
            delta_s=int(self.delta_s[i]),
            delta_g=int(self.delta_g[i]),
        )

    def rows(self) -> Iterator[Observation]:
        for i in range(len(self)):
            yield self.row(i)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            x=self.x[idx],
            a=self.a[idx],
            t_tilde=self.t_tilde[idx],
            delta_s=self.delta_s[idx],
            delta_g=self.delta_g[idx],
            t_max=self.t_max,
        )

    @classmethod
    def from_rows(cls, rows, t_max: int) -> "Dataset":
        rows = list(rows)
        if not rows:
            raise ValueError("empty dataset")
        return cls(
            x=np.stack([r.x for r in rows]),
            a=np.array([r.a for r in rows]),
            t_tilde=np.array([r.t_tilde for r in rows]),
            delta_s=np.array([r.delta_s for r in rows]),
            delta_g=np.array([r.delta_g for r in rows]),
            t_max=t_max,
        )


def validate_dataset(d: Dataset) -> list[str]:
    """Return every invariant violation, one message per offending row.

    Checks: indicators in {0, 1} with at least one set (a tie sets both),
    arm in {0, 1}, observed time inside {0, ..., t_max}, finite covariates.
    An empty list means the dataset is well formed.
    """
    problems: list[str] = []
    n = len(d)
    if n == 0:
        return ["empty dataset"]
    bad = np.where(~np.isfinite(d.x).all(axis=1))[0]
    problems += [f"row {i}: non-finite covariates" for i in bad]
    bad = np.where((d.a != 0) & (d.a != 1))[0]
    problems += [f"row {i}: arm not in {{0, 1}}" for i in bad]
    bad = np.where((d.t_tilde < 0) | (d.t_tilde > d.t_max))[0]
    problems += [f"row {i}: observed time outside grid" for i in bad]
    for name, col in (("delta_s", d.delta_s), ("delta_g", d.delta_g)):
        bad = np.where((col != 0) & (col != 1))[0]
        problems += [f"row {i}: {name} not in {{0, 1}}" for i in bad]
    bad = np.where((d.delta_s == 0) & (d.delta_g == 0))[0]
    problems += [f"row {i}: neither event nor censoring recorded" for i in bad]
    return sorted(problems, key=lambda msg: int(msg.split()[1].rstrip(":")))


def survival_from_hazards(lam: np.ndarray, axis: int = -1) -> np.ndarray:
    """Cumulative products S_t = prod_{i=0..t}(1 - lambda_i) along an axis."""
    lam = np.asarray(lam, dtype=float)
    return np.cumprod(1.0 - lam, axis=axis)


@dataclasses.dataclass(frozen=True)
class NuisanceAtPoint:
    """All nuisance values at one covariate point, both arms, full grid.

    Hazard and survival arrays have shape (t_max + 1, 2), indexed [t, a].
    Survival columns are products of one minus the hazards, floored at the
    evaluation's clip threshold; pi is clipped away from {0, 1}. The t = -1
    convention (S = G = 1) lives in the accessors.
    """

    pi: float
    lambda_s: np.ndarray
    lambda_g: np.ndarray
    s: np.ndarray
    g: np.ndarray

    def s_at(self, t: int, a: int) -> float:
        return 1.0 if t < 0 else float(self.s[t, a])

    def g_at(self, t: int, a: int) -> float:
        return 1.0 if t < 0 else float(self.g[t, a])


@dataclasses.dataclass(frozen=True)
class TildeEta:
    """The five scalars the retargeting weight f may depend on at horizon t:
    pi(x), S_{t-1}(x, 1), S_{t-1}(x, 0), G_{t-1}(x, 1), G_{t-1}(x, 0)."""

    pi: float
    s1_prev: float
    s0_prev: float
    g1_prev: float
    g0_prev: float

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.pi, self.s1_prev, self.s0_prev, self.g1_prev, self.g0_prev)

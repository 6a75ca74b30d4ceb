"""Orthogonal pseudo-outcomes and loss weights for censored outcomes.

Given nuisances at a point, each observation is turned into a pseudo row
(x, rho, phi): phi is an unbiased, nuisance-orthogonal signal for the
survival-probability contrast tau_t(x), and rho is the loss weight whose
conditional expectation equals the chosen retargeting weight f. The weighted
second-stage objective is then sum_i rho_i (phi_i - g(x_i))^2.

Index conventions. xi_s and xi_g take a level argument m and sum grid
indices i = 0..m (m = -1 gives the empty sum). At horizon t, rho consumes
xi_s and xi_g at level t - 1 while phi consumes xi_s at level t. All
formulas read the already-clipped nuisance values, so denominators are
bounded away from zero by construction.

Weight guarding. The raw rho is sign-indefinite (its correction terms can
dominate f), and a flexible second stage can exploit negative-weight rows
without bound, so the training weight is rho clipped into
[rho_guard * mean(f), rho_cap * mean(f)]. Because phi divides by the same
clipped value, rho_used * phi = rho_used * plugin - correction holds
exactly and the correction keeps conditional mean zero, so the weighted
population minimizer is unchanged by any positive clipping; the clip only
bounds finite-sample influence. Clipped-row counts are reported per scheme
and horizon.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .data import Dataset, NuisanceAtPoint, Observation, TildeEta
from .nuisance import NuisanceGrid, as_folded
from .weighting import WeightPartials, WeightScheme, parse_scheme, partials_arrays


@dataclasses.dataclass(frozen=True)
class PseudoRow:
    """One second-stage training row plus per-row diagnostics.

    xi_s is evaluated at level t (the phi ingredient), xi_g at level t - 1
    (the rho ingredient); rho_raw is the weight before any guard.
    """

    x: np.ndarray
    rho: float
    phi: float
    f_value: float
    xi_s: float
    xi_g: float
    rho_raw: float


@dataclasses.dataclass(frozen=True)
class GuardReport:
    scheme: WeightScheme
    horizon: int
    n_rows: int
    n_guarded: int        # raw rho below the floor (includes every negative row)
    n_capped: int         # raw rho above the cap
    n_negative_rho: int


def xi_s(obs: Observation, nap: NuisanceAtPoint, level: int) -> float:
    """Martingale sum for the event process, grid indices 0..level."""
    if level < 0:
        return 0.0
    a = obs.a
    total = 0.0
    for i in range(level + 1):
        event = 1.0 if (obs.t_tilde == i and obs.delta_s == 1) else 0.0
        at_risk = 1.0 if obs.t_tilde >= i else 0.0
        num = event - at_risk * float(nap.lambda_s[i, a])
        total += num / (nap.s_at(i, a) * nap.g_at(i - 1, a))
    return total


def xi_g(obs: Observation, nap: NuisanceAtPoint, level: int) -> float:
    """Martingale sum for the censoring process, grid indices 0..level."""
    if level < 0:
        return 0.0
    a = obs.a
    total = 0.0
    for i in range(level + 1):
        event = 1.0 if (obs.t_tilde == i and obs.delta_g == 1) else 0.0
        at_risk = 1.0 if obs.t_tilde >= i else 0.0
        num = event - at_risk * float(nap.lambda_g[i, a])
        total += num / (nap.s_at(i - 1, a) * nap.g_at(i, a))
    return total


def rho(obs: Observation, nap: NuisanceAtPoint, e: TildeEta,
        wp: WeightPartials, t: int) -> float:
    """Loss weight at horizon t: f plus its first-order nuisance correction.

    E[rho | X] = f(tilde_eta(X)) when the nuisances are correct, which is
    what makes the weighted squared loss behave like an f-weighted oracle
    loss. At t = 0 the correction sums are empty.
    """
    a, pi = obs.a, e.pi
    inv = a / pi + (1 - a) / (1.0 - pi)
    d_s_a = wp.d_s1 if a == 1 else wp.d_s0
    d_g_a = wp.d_g1 if a == 1 else wp.d_g0
    s_prev_a = nap.s_at(t - 1, a)
    g_prev_a = nap.g_at(t - 1, a)
    return (wp.f_value + wp.d_pi * (a - pi)
            - inv * (d_s_a * s_prev_a * xi_s(obs, nap, t - 1)
                     + d_g_a * g_prev_a * xi_g(obs, nap, t - 1)))


def phi(obs: Observation, nap: NuisanceAtPoint, e: TildeEta,
        wp: WeightPartials, rho_value: float, t: int) -> float:
    """Orthogonal pseudo-outcome for tau_t at one observation.

    rho_value must already be guarded; build_pseudo_rows floors it and
    accounts for the affected rows.
    """
    if rho_value == 0.0:
        raise ValueError("rho_value is zero; apply the guard before calling phi")
    a, pi = obs.a, e.pi
    s1 = nap.s_at(t, 1)
    s0 = nap.s_at(t, 0)
    s_a = nap.s_at(t, a)
    correction = ((a - pi) * xi_s(obs, nap, t) * s_a * wp.f_value
                  / (pi * (1.0 - pi) * rho_value))
    return s1 - s0 - correction


def xi_curves(d: Dataset, grid: NuisanceGrid) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized running sums: xi_s and xi_g at every level, shape (n, t_max+1).

    Column m holds the level-m sum, so level t-1 values are column t-1 and
    the empty (level -1) sum is simply not read.
    """
    n, T = len(d), d.t_max
    rows = np.arange(n)
    lam_s = grid.lambda_s[rows, :, d.a]
    lam_g = grid.lambda_g[rows, :, d.a]
    s = grid.s[rows, :, d.a]
    g = grid.g[rows, :, d.a]
    s_prev = np.concatenate([np.ones((n, 1)), s[:, :-1]], axis=1)
    g_prev = np.concatenate([np.ones((n, 1)), g[:, :-1]], axis=1)
    idx = np.arange(T + 1)
    hit = d.t_tilde[:, None] == idx[None, :]
    at_risk = d.t_tilde[:, None] >= idx[None, :]
    num_s = hit * d.delta_s[:, None] - at_risk * lam_s
    num_g = hit * d.delta_g[:, None] - at_risk * lam_g
    return (np.cumsum(num_s / (s * g_prev), axis=1),
            np.cumsum(num_g / (s_prev * g), axis=1))


def _guard_rho(rho_raw: np.ndarray, f: np.ndarray, rho_guard: float,
               rho_cap: float) -> tuple[np.ndarray, int, int, int]:
    """Clip raw rho into [rho_guard, rho_cap] x mean(f); return counts."""
    mean_f = float(f.mean())
    lo, hi = rho_guard * mean_f, rho_cap * mean_f
    rho_used = np.clip(rho_raw, lo, hi)
    return (rho_used, int((rho_raw < lo).sum()), int((rho_raw > hi).sum()),
            int((rho_raw < 0.0).sum()))


def _pseudo_arrays(d: Dataset, grid: NuisanceGrid, scheme: WeightScheme, t: int,
                   rho_guard: float, rho_cap: float, clamp_negative_rho: bool):
    """Array core shared by build_pseudo_rows and the probes."""
    n = len(d)
    rows = np.arange(n)
    a = d.a
    xs_cum, xg_cum = xi_curves(d, grid)
    xi_s_t = xs_cum[:, t]
    if t > 0:
        xi_s_prev, xi_g_prev = xs_cum[:, t - 1], xg_cum[:, t - 1]
    else:
        xi_s_prev = np.zeros(n)
        xi_g_prev = np.zeros(n)

    pi, s1p, s0p, g1p, g0p = grid.eta_prev(t)
    f, d_pi, d_s1, d_s0, d_g1, d_g0 = partials_arrays(scheme, pi, s1p, s0p, g1p, g0p)
    inv = a / pi + (1 - a) / (1.0 - pi)
    d_s_a = np.where(a == 1, d_s1, d_s0)
    d_g_a = np.where(a == 1, d_g1, d_g0)
    s_prev_a = np.where(a == 1, s1p, s0p)
    g_prev_a = np.where(a == 1, g1p, g0p)
    rho_raw = (f + d_pi * (a - pi)
               - inv * (d_s_a * s_prev_a * xi_s_prev + d_g_a * g_prev_a * xi_g_prev))

    rho_used, n_guarded, n_capped, n_negative = _guard_rho(rho_raw, f, rho_guard, rho_cap)

    s_t = grid.s[:, t, :]
    s_t_a = s_t[rows, a]
    phi_vals = (s_t[:, 1] - s_t[:, 0]
                - (a - pi) * xi_s_t * s_t_a * f / (pi * (1.0 - pi) * rho_used))

    rho_final = np.where(rho_raw < 0.0, 0.0, rho_used) if clamp_negative_rho else rho_used
    report = GuardReport(scheme=scheme, horizon=t, n_rows=n, n_guarded=n_guarded,
                         n_capped=n_capped, n_negative_rho=n_negative)
    return rho_final, phi_vals, f, xi_s_t, xi_g_prev, rho_raw, report


def build_pseudo_rows(d: Dataset, fn, scheme, t: int, rho_guard: float = 1e-3,
                      rho_cap: float = 100.0,
                      clamp_negative_rho: bool = False) -> tuple[list[PseudoRow], GuardReport]:
    """Turn every observation into a weighted second-stage training row.

    fn may be a FoldedNuisances (each row evaluated by its out-of-fold
    models) or a plain NuisanceSet. The training weight is raw rho clipped
    into [rho_guard, rho_cap] x mean(f) (see the module docstring); with
    clamp_negative_rho, rows whose raw rho is negative get weight zero
    instead of the floor.
    """
    scheme = parse_scheme(scheme)
    if not 0 <= t <= d.t_max:
        raise ValueError(f"t must lie in [0, {d.t_max}]")
    if rho_guard <= 0:
        raise ValueError("rho_guard must be positive")
    if rho_cap <= rho_guard:
        raise ValueError("rho_cap must exceed rho_guard")
    fn = as_folded(fn, len(d))
    grid = fn.evaluate_dataset(d)
    rho_v, phi_v, f_v, xs_v, xg_v, raw_v, report = _pseudo_arrays(
        d, grid, scheme, t, rho_guard, rho_cap, clamp_negative_rho)
    rows = [PseudoRow(x=d.x[i], rho=float(rho_v[i]), phi=float(phi_v[i]),
                      f_value=float(f_v[i]), xi_s=float(xs_v[i]),
                      xi_g=float(xg_v[i]), rho_raw=float(raw_v[i]))
            for i in range(len(d))]
    return rows, report


def build_rmst_rows(d: Dataset, fn, scheme, h: int, rho_guard: float = 1e-3,
                    rho_cap: float = 100.0,
                    clamp_negative_rho: bool = False) -> tuple[list[PseudoRow], GuardReport]:
    """Pseudo rows for the cumulative (restricted mean survival time) contrast.

    The target is the sum over t = 0..h of the per-horizon pseudo-outcomes,
    with the weight, the retargeting factor f and its partials all fixed at
    level h; only the xi_s term and the survival factors vary inside the sum.
    """
    scheme = parse_scheme(scheme)
    if not 0 <= h <= d.t_max:
        raise ValueError(f"h must lie in [0, {d.t_max}]")
    if rho_guard <= 0:
        raise ValueError("rho_guard must be positive")
    if rho_cap <= rho_guard:
        raise ValueError("rho_cap must exceed rho_guard")
    fn = as_folded(fn, len(d))
    grid = fn.evaluate_dataset(d)
    n = len(d)
    rows_idx = np.arange(n)
    a = d.a
    xs_cum, xg_cum = xi_curves(d, grid)
    if h > 0:
        xi_s_prev, xi_g_prev = xs_cum[:, h - 1], xg_cum[:, h - 1]
    else:
        xi_s_prev = np.zeros(n)
        xi_g_prev = np.zeros(n)

    pi, s1p, s0p, g1p, g0p = grid.eta_prev(h)
    f, d_pi, d_s1, d_s0, d_g1, d_g0 = partials_arrays(scheme, pi, s1p, s0p, g1p, g0p)
    inv = a / pi + (1 - a) / (1.0 - pi)
    d_s_a = np.where(a == 1, d_s1, d_s0)
    d_g_a = np.where(a == 1, d_g1, d_g0)
    s_prev_a = np.where(a == 1, s1p, s0p)
    g_prev_a = np.where(a == 1, g1p, g0p)
    rho_raw = (f + d_pi * (a - pi)
               - inv * (d_s_a * s_prev_a * xi_s_prev + d_g_a * g_prev_a * xi_g_prev))
    rho_used, n_guarded, n_capped, n_negative = _guard_rho(rho_raw, f, rho_guard, rho_cap)

    s_a = grid.s[rows_idx, :, a]
    plugin_sum = (grid.s[:, :h + 1, 1] - grid.s[:, :h + 1, 0]).sum(axis=1)
    correction_sum = (xs_cum[:, :h + 1] * s_a[:, :h + 1]).sum(axis=1)
    phi_bar = plugin_sum - (a - pi) * f * correction_sum / (pi * (1.0 - pi) * rho_used)

    rho_final = np.where(rho_raw < 0.0, 0.0, rho_used) if clamp_negative_rho else rho_used
    report = GuardReport(scheme=scheme, horizon=h, n_rows=n, n_guarded=n_guarded,
                         n_capped=n_capped, n_negative_rho=n_negative)
    rows = [PseudoRow(x=d.x[i], rho=float(rho_final[i]), phi=float(phi_bar[i]),
                      f_value=float(f[i]), xi_s=float(xs_cum[i, h]),
                      xi_g=float(xi_g_prev[i]), rho_raw=float(rho_raw[i]))
            for i in range(n)]
    return rows, report

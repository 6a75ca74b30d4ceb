"""Overlap-targeted retargeting weights f(tilde_eta) and their partials.

Eight schemes: the trivial weight, and products of up to three overlap
factors, treatment pi(1 - pi), censoring G_{t-1}(x,1) G_{t-1}(x,0), and
survival S_{t-1}(x,1) S_{t-1}(x,0).
"""

from __future__ import annotations

import dataclasses
import enum

import numpy as np

from .data import TildeEta


class WeightScheme(enum.Enum):
    NONE = "none"
    T = "t"
    C = "c"
    S = "s"
    TC = "tc"
    TS = "ts"
    CS = "cs"
    TCS = "tcs"

    @property
    def uses_t(self) -> bool:
        return _FLAGS[self][0]

    @property
    def uses_c(self) -> bool:
        return _FLAGS[self][1]

    @property
    def uses_s(self) -> bool:
        return _FLAGS[self][2]


_FLAGS = {
    WeightScheme.NONE: (False, False, False),
    WeightScheme.T: (True, False, False),
    WeightScheme.C: (False, True, False),
    WeightScheme.S: (False, False, True),
    WeightScheme.TC: (True, True, False),
    WeightScheme.TS: (True, False, True),
    WeightScheme.CS: (False, True, True),
    WeightScheme.TCS: (True, True, True),
}

ALL_SCHEMES = tuple(WeightScheme)


def parse_scheme(token) -> WeightScheme:
    if isinstance(token, WeightScheme):
        return token
    try:
        return WeightScheme(str(token).strip().lower())
    except ValueError:
        valid = ", ".join(s.value for s in ALL_SCHEMES)
        raise ValueError(f"unknown scheme {token!r}, expected one of: {valid}") from None


@dataclasses.dataclass(frozen=True)
class WeightPartials:
    """f and its partial derivatives in the five tilde_eta coordinates."""

    f_value: float
    d_pi: float
    d_s1: float
    d_s0: float
    d_g1: float
    d_g0: float


def weight_arrays(scheme: WeightScheme, pi, s1, s0, g1, g0) -> np.ndarray:
    """Vectorized f over arrays of tilde_eta coordinates."""
    f = np.ones_like(np.asarray(pi, dtype=float))
    if scheme.uses_t:
        f = f * pi * (1.0 - pi)
    if scheme.uses_c:
        f = f * g1 * g0
    if scheme.uses_s:
        f = f * s1 * s0
    return f


def partials_arrays(scheme: WeightScheme, pi, s1, s0, g1, g0):
    """Vectorized (f, d_pi, d_s1, d_s0, d_g1, d_g0).

    f is a product of monomial factors, so each partial is the product of
    the other factors times the factor's own derivative.
    """
    pi = np.asarray(pi, dtype=float)
    one = np.ones_like(pi)
    zero = np.zeros_like(pi)
    ft = pi * (1.0 - pi) if scheme.uses_t else one
    fc = g1 * g0 if scheme.uses_c else one
    fs = s1 * s0 if scheme.uses_s else one
    f = ft * fc * fs
    d_pi = (1.0 - 2.0 * pi) * fc * fs if scheme.uses_t else zero
    d_s1 = ft * fc * s0 if scheme.uses_s else zero
    d_s0 = ft * fc * s1 if scheme.uses_s else zero
    d_g1 = ft * fs * g0 if scheme.uses_c else zero
    d_g0 = ft * fs * g1 if scheme.uses_c else zero
    return f, d_pi, d_s1, d_s0, d_g1, d_g0


def _check_domain(e: TildeEta) -> None:
    if not 0.0 < e.pi < 1.0:
        raise ValueError(f"pi must lie in (0, 1), got {e.pi}")
    for name in ("s1_prev", "s0_prev", "g1_prev", "g0_prev"):
        v = getattr(e, name)
        if not 0.0 < v <= 1.0:
            raise ValueError(f"{name} must lie in (0, 1], got {v}")


def weight(scheme: WeightScheme, e: TildeEta) -> float:
    """f(tilde_eta) for one point."""
    scheme = parse_scheme(scheme)
    _check_domain(e)
    return float(weight_arrays(scheme, e.pi, e.s1_prev, e.s0_prev, e.g1_prev, e.g0_prev))


def weight_partials(scheme: WeightScheme, e: TildeEta) -> WeightPartials:
    """f and all five partials for one point."""
    scheme = parse_scheme(scheme)
    _check_domain(e)
    vals = partials_arrays(scheme, e.pi, e.s1_prev, e.s0_prev, e.g1_prev, e.g0_prev)
    return WeightPartials(*(float(v) for v in vals))

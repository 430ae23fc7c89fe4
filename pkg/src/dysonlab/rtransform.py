"""Rectangular R-transform via series reversion of the w(1/z^2) expansion.

For a symmetric law with Stieltjes transform G, the transform C with ratio
lam satisfies  z G(z) - 1 = C(w),  w = G(z)(lam G(z) + (1-lam)/z).  Writing
v = 1/z^2, both sides expand in v with coefficients polynomial in the even
moments; reverting w(v) in exact rational arithmetic gives the Taylor
coefficients of C at w = 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .freeconv import SqrtMPLaw
from .measures import AtomicMeasure, GriddedDensity, MeasureError, SymmetricMeasure, _plain

__all__ = ["RTransformSeries", "MomentLaw", "rect_r_transform", "RTransformOrderError"]


@dataclass(frozen=True)
class MomentLaw:
    """Symmetric law specified by its raw moments [m_0, m_1, ...]."""

    raw: np.ndarray

    def moment(self, k: int) -> float:
        if k >= len(self.raw):
            raise MeasureError(f"moment {k} not available")
        return float(self.raw[k])


class RTransformOrderError(MeasureError):
    def __init__(self, requested: int, achieved: int):
        super().__init__(
            f"requested order {requested} beyond numerically stable reversion; achieved order {achieved}"
        )
        self.requested = requested
        self.achieved = achieved


@dataclass(frozen=True)
class RTransformSeries:
    """Taylor coefficients [c0, c1, ..., cK] of C(w) at 0; c0 = 0 always."""

    coefficients: np.ndarray
    radius_estimate: float

    def __post_init__(self):
        if self.coefficients[0] != 0.0:
            raise MeasureError("C(0) must vanish")

    @property
    def order(self) -> int:
        return self.coefficients.size - 1

    def __call__(self, w):
        w = np.asarray(w, dtype=complex)
        out = np.zeros_like(w)
        for c in self.coefficients[::-1]:
            out = out * w + c
        return out

    def derivative(self, w):
        w = np.asarray(w, dtype=complex)
        out = np.zeros_like(w)
        k = self.coefficients.size - 1
        for c in self.coefficients[:0:-1]:
            out = out * w + k * c
            k -= 1
        return out


# --- truncated series arithmetic over Fractions ----------------------------


def _mul(a: list[Fraction], b: list[Fraction], K: int) -> list[Fraction]:
    out = [Fraction(0)] * (K + 1)
    for i, ai in enumerate(a):
        if ai == 0 or i > K:
            continue
        for j, bj in enumerate(b):
            if i + j > K:
                break
            out[i + j] += ai * bj
    return out


def _revert(a: list[Fraction], K: int) -> list[Fraction]:
    """Invert w(v) = sum_{j>=1} a[j] v^j with a[1] = 1: returns v(w)."""
    b = [Fraction(0)] * (K + 1)
    b[1] = Fraction(1) / a[1]
    for k in range(2, K + 1):
        # coefficient of w^k in sum_j a[j] * (v(w))^j must vanish
        comp = [Fraction(0)] * (K + 1)
        power = [Fraction(0)] * (K + 1)
        power[0] = Fraction(1)
        for j in range(1, k + 1):
            power = _mul(power, b, k)
            if a[j] != 0:
                for idx in range(k + 1):
                    comp[idx] += a[j] * power[idx]
        b[k] -= comp[k] / a[1]
    return b


def _moments(m, order: int) -> tuple[list[float], int]:
    """Even moments m_2, m_4, ..., m_{2*order} and the trustworthy order."""
    if isinstance(m, (SqrtMPLaw, MomentLaw)):
        return [m.moment(2 * j) for j in range(1, order + 1)], order
    pm = _plain(m)
    if isinstance(pm, AtomicMeasure):
        return [pm.moment(2 * j) for j in range(1, order + 1)], order
    if isinstance(pm, GriddedDensity):
        full = [pm.moment(2 * j) for j in range(1, order + 1)]
        half = GriddedDensity.from_values(pm.grid[::2], pm.values[::2], normalize=True)
        coarse = [half.moment(2 * j) for j in range(1, order + 1)]
        achieved = 0
        for j, (f, c) in enumerate(zip(full, coarse), start=1):
            scale = max(abs(f), 1e-300)
            if abs(f - c) / scale > 1e-7:
                break
            achieved = j
        return full, achieved
    raise MeasureError(f"unsupported measure type {type(m)!r}")


def rect_r_transform(m, lam: float, order: int = 8) -> RTransformSeries:
    """Taylor coefficients of C_nu at w = 0 for a compactly supported
    symmetric law; reversion is carried out in exact rational arithmetic."""
    if not 0 <= lam <= 1:
        raise MeasureError("lambda must lie in [0, 1]")
    if order < 1:
        raise MeasureError("order must be >= 1")
    moments, achieved = _moments(m, order)
    if achieved < order:
        raise RTransformOrderError(order, achieved)
    K = order
    lamf = Fraction(lam).limit_denominator(10**12) if not float(lam).is_integer() else Fraction(int(lam))
    phi = [Fraction(0)] * (K + 1)  # z G - 1 as series in v
    for j in range(1, K + 1):
        phi[j] = Fraction(moments[j - 1])
    one_plus = phi.copy()
    one_plus[0] += 1
    # w = v * (lam (1+phi)^2 + (1-lam)(1+phi))
    sq = _mul(one_plus, one_plus, K)
    psi = [lamf * s + (1 - lamf) * o for s, o in zip(sq, one_plus)]
    w_series = [Fraction(0)] * (K + 1)
    for j in range(1, K + 1):
        w_series[j] = psi[j - 1]
    v_of_w = _revert(w_series, K)
    # C(w) = phi(v(w))
    comp = [Fraction(0)] * (K + 1)
    power = [Fraction(0)] * (K + 1)
    power[0] = Fraction(1)
    for j in range(1, K + 1):
        power = _mul(power, v_of_w, K)
        if phi[j] != 0:
            for idx in range(K + 1):
                comp[idx] += phi[j] * power[idx]
    coeffs = np.array([float(c) for c in comp])
    coeffs[0] = 0.0
    nz = np.nonzero(np.abs(coeffs[1:]) > 1e-300)[0]
    if nz.size >= 2:
        j = nz[-1] + 1
        radius = float(abs(coeffs[j]) ** (-1.0 / j))
    else:
        radius = float("inf")
    return RTransformSeries(coefficients=coeffs, radius_estimate=radius)

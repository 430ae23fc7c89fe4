"""Stieltjes transforms and the (square-root) Marchenko-Pastur family.

Sign convention throughout: G(z) = integral d nu(x) / (z - x), so
Im G(z) < 0 for Im z > 0 and the density is recovered as -Im G / pi on
the axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import (
    AtomicMeasure,
    GriddedDensity,
    MeasureError,
    SymmetricMeasure,
    _plain,
)

__all__ = [
    "StieltjesGrid",
    "RectLaw",
    "SqrtMPLaw",
    "stieltjes",
    "stieltjes_derivative",
    "mp_and_sqrt_mp",
    "mp_edges",
    "mp_eigen_density",
    "sqrt_mp_stieltjes",
    "mp_stieltjes",
]


@dataclass(frozen=True)
class StieltjesGrid:
    """G(x + i eta) sampled on a real grid at fixed imaginary offset."""

    eta: float
    xs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.eta <= 0:
            raise MeasureError("eta must be positive")
        if np.any(np.imag(self.values) >= 1e-14):
            raise MeasureError("Im G must be negative on the upper half plane")
        if np.any(np.abs(self.values) > 1.0 / self.eta + 1e-9):
            raise MeasureError("|G| exceeds 1/eta")


@dataclass(frozen=True)
class SqrtMPLaw:
    """Square-root Marchenko-Pastur law: symmetrized singular-value law of a
    Gaussian rectangular matrix with noise scale sigma and aspect ratio lam.

    Carries exact moments (Narayana polynomials) so series work downstream
    is not limited by grid quadrature.
    """

    sigma: float
    lam: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise MeasureError("sigma must be positive")
        if not 0 < self.lam <= 1:
            raise MeasureError("lambda must lie in (0, 1]")

    def eigen_moment(self, k: int) -> float:
        """k-th moment of the eigenvalue law (squared singulars)."""
        # moments of the 1/lam-rescaled MP law via Narayana numbers
        lam, sig = self.lam, self.sigma
        total = 0.0
        for j in range(k):
            from math import comb

            total += comb(k, j) * comb(k - 1, j) / (j + 1) * lam**j
        return sig ** (2 * k) / lam**k * total if k > 0 else 1.0

    def moment(self, k: int) -> float:
        """k-th moment of the symmetric singular-value law."""
        if k % 2 == 1:
            return 0.0
        return self.eigen_moment(k // 2)

    def second_moment(self) -> float:
        return self.moment(2)

    def total_mass(self) -> float:
        return 1.0

    def gridded(self, num: int = 4001, pad: float = 1.02) -> SymmetricMeasure:
        return mp_and_sqrt_mp(self.sigma, self.lam, num=num, pad=pad)[1]


@dataclass(frozen=True)
class RectLaw:
    """A symmetric law together with the rectangular aspect ratio lam."""

    lam: float
    measure: SymmetricMeasure | SqrtMPLaw

    def __post_init__(self):
        if not 0 <= self.lam <= 1:
            raise MeasureError("lambda must lie in [0, 1]")

    @property
    def alpha(self) -> float:
        return 1.0 / self.lam - 1.0 if self.lam > 0 else float("inf")


# ---------------------------------------------------------------------------
# Stieltjes transforms


def stieltjes(m, z):
    """G(z) = integral d nu(x)/(z - x) for Im z > 0 (atomic sum or quadrature)."""
    z = np.asarray(z, dtype=complex)
    if np.any(np.imag(z) <= 0):
        raise MeasureError("stieltjes requires Im z > 0")
    if isinstance(m, SqrtMPLaw):
        return sqrt_mp_stieltjes(z, m.sigma, m.lam)
    pm = _plain(m)
    if isinstance(pm, AtomicMeasure):
        return np.sum(pm.weights / (z[..., None] - pm.atoms), axis=-1)
    return np.trapezoid(pm.values / (z[..., None] - pm.grid), pm.grid, axis=-1)


def stieltjes_derivative(m, z):
    """G'(z) = -integral d nu(x)/(z - x)^2."""
    z = np.asarray(z, dtype=complex)
    if isinstance(m, SqrtMPLaw):
        h = 1e-6 * max(1.0, float(np.max(np.abs(z))))
        return (sqrt_mp_stieltjes(z + h, m.sigma, m.lam) - sqrt_mp_stieltjes(z - h, m.sigma, m.lam)) / (2 * h)
    pm = _plain(m)
    if isinstance(pm, AtomicMeasure):
        return -np.sum(pm.weights / (z[..., None] - pm.atoms) ** 2, axis=-1)
    return -np.trapezoid(pm.values / (z[..., None] - pm.grid) ** 2, pm.grid, axis=-1)


def stieltjes_grid(m, xs, eta: float) -> StieltjesGrid:
    xs = np.asarray(xs, dtype=float)
    vals = stieltjes(m, xs + 1j * eta)
    return StieltjesGrid(eta=eta, xs=xs, values=np.asarray(vals))


# ---------------------------------------------------------------------------
# Marchenko-Pastur family


def mp_edges(sigma: float, lam: float) -> tuple[float, float]:
    """Support of the eigenvalue law: sigma^2 (1/sqrt(lam) -+ 1)^2."""
    r = 1.0 / np.sqrt(lam)
    return sigma**2 * (r - 1) ** 2, sigma**2 * (r + 1) ** 2


def mp_eigen_density(x, sigma: float, lam: float):
    """Closed-form eigenvalue density with edges sigma^2(1/sqrt(lam) +- 1)^2.

    Normalization 1/(2 pi sigma^2 x); mass checks in the tests pin it.
    """
    a, b = mp_edges(sigma, lam)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > a) & (x < b)
    xi = x[inside]
    out[inside] = np.sqrt((b - xi) * (xi - a)) / (2 * np.pi * sigma**2 * xi)
    return out


def sqrt_mp_singular_density(s, sigma: float, lam: float):
    """Symmetrized singular-value density |s| f_eigen(s^2).

    At lam = 1 the 0/0 at the origin cancels to sqrt(b - s^2)/(2 pi sigma^2).
    """
    a, b = mp_edges(sigma, lam)
    s = np.asarray(s, dtype=float)
    if lam == 1.0:
        return np.sqrt(np.clip(b - s**2, 0.0, None)) / (2 * np.pi * sigma**2)
    return np.abs(s) * mp_eigen_density(s**2, sigma, lam)


def mp_stieltjes(w, sigma: float, lam: float):
    """Stieltjes transform m(w) of the eigenvalue law, from the quadratic
    relation  w m - 1 = (sigma^2/lam) m (lam w m + 1 - lam)."""
    w = np.asarray(w, dtype=complex)
    A = sigma**2 * w
    B = (1 - lam) * sigma**2 / lam - w
    disc = np.sqrt(B * B - 4 * A + 0j)
    m1 = (-B + disc) / (2 * A)
    m2 = (-B - disc) / (2 * A)
    return np.where(np.imag(w) * np.imag(m1) < 0, m1, m2)


def sqrt_mp_stieltjes(z, sigma: float, lam: float):
    """G of the symmetrized singular law via G(z) = z m(z^2).

    Valid off the real axis; for Re z = 0 the argument z^2 sits below the
    support and the eigenvalue branch is real there, which is the correct
    limit.
    """
    z = np.asarray(z, dtype=complex)
    w = z * z
    m = mp_stieltjes(w, sigma, lam)
    # on the imaginary axis w is real negative: take the real branch
    onaxis = np.abs(np.imag(w)) < 1e-300
    if np.any(onaxis):
        A = sigma**2 * w
        B = (1 - lam) * sigma**2 / lam - w
        disc = np.sqrt((B * B - 4 * A).astype(complex))
        cand1 = (-B + disc) / (2 * A)
        cand2 = (-B - disc) / (2 * A)
        # pick the branch decaying like 1/w at -infinity
        m_real = np.where(np.abs(cand1 * w - 1) < np.abs(cand2 * w - 1), cand1, cand2)
        m = np.where(onaxis, m_real, m)
    return z * m


def mp_and_sqrt_mp(
    sigma: float, lam: float, num: int = 4001, pad: float = 1.02
) -> tuple[GriddedDensity, SymmetricMeasure]:
    """Closed-form MP eigenvalue density and its square-root symmetrization.

    The gridded representations are renormalized to unit trapezoid mass;
    the analytic densities integrate to 1 exactly (checked in tests).
    """
    if lam == 0:
        raise MeasureError("lambda = 0 is degenerate (point mass); not represented on a grid")
    a, b = mp_edges(sigma, lam)
    lo = a / pad if a > 0 else 0.0
    geig = np.linspace(lo, b * pad, num)
    eig = GriddedDensity.from_values(geig, mp_eigen_density(geig, sigma, lam), normalize=True)
    smax = np.sqrt(b) * pad
    gs = np.linspace(-smax, smax, num if num % 2 == 1 else num + 1)
    dens = sqrt_mp_singular_density(gs, sigma, lam)
    sing = SymmetricMeasure(GriddedDensity.from_values(gs, dens, normalize=True))
    return eig, sing

"""Dynamical-entropy rate functionals on discretized density paths.

A path stores densities rho_t on a fixed uniform space grid over times in
[0, 1].  The velocity field is recovered from the conservation of mass
equation; the functionals evaluate by trapezoid quadrature in both
variables.  Endpoint entropies require gridded slices, which is why atomic
endpoints are not accepted here.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .measures import (
    GriddedDensity,
    MeasureError,
    SymmetricMeasure,
    hilbert_grid,
    log_energy,
    log_moment,
    quantiles,
)

__all__ = [
    "DensityPath",
    "FlowFields",
    "TestFunction",
    "velocity_from_continuity",
    "dbm_entropy",
    "bessel_entropy",
    "variational_lower_bound",
    "PathError",
]

DENSITY_FLOOR_FRAC = 1e-10


class PathError(MeasureError):
    pass


@dataclass(frozen=True)
class DensityPath:
    """Densities on a time x space grid, with ensemble parameters."""

    times: np.ndarray
    space: np.ndarray
    rho: np.ndarray
    alpha: float
    beta: float

    def __post_init__(self):
        t, x, r = self.times, self.space, self.rho
        if np.any(np.diff(t) <= 0):
            raise PathError("times must be strictly increasing")
        if t[0] < -1e-12 or t[-1] > 1 + 1e-12:
            raise PathError("times must lie in [0, 1]")
        steps = np.diff(x)
        if not np.allclose(steps, steps[0], rtol=1e-8):
            raise PathError("space grid must be uniform")
        if r.shape != (t.size, x.size):
            raise PathError("rho must have shape (nt, nx)")
        if not np.all(np.isfinite(r)) or np.any(r < -1e-12):
            raise PathError("densities must be finite and nonnegative")
        mass = np.trapezoid(r, x, axis=1)
        if np.max(np.abs(mass - 1.0)) > 1e-6:
            raise PathError(f"slice mass deviates from 1 by {np.max(np.abs(mass - 1.0)):.2e}")
        if self.alpha < 0:
            raise PathError("alpha must be nonnegative")
        if self.beta < 1:
            raise PathError("beta must be >= 1")
        if self.alpha > 0:
            sym_err = np.max(np.abs(r - r[:, ::-1]))
            if abs(x[0] + x[-1]) > 1e-9 * max(abs(x[0]), 1.0) or sym_err > 1e-6 * max(r.max(), 1.0):
                raise PathError("alpha > 0 requires a symmetric path on a symmetric grid")

    @property
    def h(self) -> float:
        return float(self.space[1] - self.space[0])

    def slice_density(self, i: int) -> GriddedDensity:
        return GriddedDensity.from_values(self.space, self.rho[i], normalize=True)

    def slice_symmetric(self, i: int) -> SymmetricMeasure:
        v = self.rho[i]
        v = 0.5 * (v + v[::-1])
        return SymmetricMeasure(GriddedDensity.from_values(self.space, v, normalize=True))

    def slice_quantiles(self, i: int, n: int) -> np.ndarray:
        return quantiles(self.slice_density(i), n)


@dataclass(frozen=True)
class FlowFields:
    u: np.ndarray
    k_x: np.ndarray
    continuity_residual: float


def _time_derivative(arr: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Centered differences interior, one-sided at the endpoints."""
    out = np.empty_like(arr)
    dt0 = times[1] - times[0]
    dtl = times[-1] - times[-2]
    out[0] = (arr[1] - arr[0]) / dt0
    out[-1] = (arr[-1] - arr[-2]) / dtl
    if arr.shape[0] > 2:
        dts = (times[2:] - times[:-2])[:, None]
        out[1:-1] = (arr[2:] - arr[:-2]) / dts
    return out


def velocity_from_continuity(
    path: DensityPath,
    floor_frac: float = DENSITY_FLOOR_FRAC,
    residual_tol: float | None = None,
) -> FlowFields:
    """u = -(d/dt CDF)/rho where rho exceeds the floor, 0 elsewhere.

    The drift is k_x = u - H(nu_t) - alpha/(2x), with the alpha term paired
    into the odd combination so nothing is evaluated at x = 0.  The
    continuity residual max |d_t rho + d_x(rho u)| over interior cells is
    recorded; if ``residual_tol`` is given and exceeded, the path is
    rejected as not a weak solution.
    """
    t, x, rho = path.times, path.space, path.rho
    h = path.h
    floor = floor_frac * rho.max()
    inc = 0.5 * (rho[:, 1:] + rho[:, :-1]) * h
    cdf = np.concatenate([np.zeros((t.size, 1)), np.cumsum(inc, axis=1)], axis=1)
    dcdf = _time_derivative(cdf, t)
    u = np.zeros_like(rho)
    live = rho > floor
    u[live] = -dcdf[live] / rho[live]
    # mean-field drift: subtract the Hilbert transform and the origin term
    k_x = np.zeros_like(u)
    for i in range(t.size):
        H = hilbert_grid(path.slice_density(i))
        k_x[i, live[i]] = u[i, live[i]] - H[live[i]]
    if path.alpha > 0:
        nz = live & (np.abs(x)[None, :] > h / 2)
        k_x[nz] -= path.alpha / (2 * np.broadcast_to(x, rho.shape)[nz])
    k_x[~live] = 0.0
    # independent finite-difference residual of the conservation law
    drho = _time_derivative(rho, t)
    flux = rho * u
    dflux = np.gradient(flux, h, axis=1)
    interior = np.zeros_like(rho, dtype=bool)
    interior[1:-1, 2:-2] = live[1:-1, 2:-2]
    residual = float(np.max(np.abs(drho + dflux)[interior])) if interior.any() else 0.0
    if residual_tol is not None and residual > residual_tol:
        raise PathError(f"path not a weak solution: continuity residual {residual:.3e}")
    return FlowFields(u=u, k_x=k_x, continuity_residual=residual)


def _tx_integral(path: DensityPath, integrand: np.ndarray) -> float:
    inner = np.trapezoid(integrand, path.space, axis=1)
    return float(np.trapezoid(inner, path.times))


def _inv_x2_integral(path: DensityPath) -> float:
    """Integral of rho/x^2 in x and t, excluding the origin node; returns
    +inf when grid refinement indicates divergence."""
    x, rho, h = path.space, path.rho, path.h

    def level(xg, rg, hh):
        mask = np.abs(xg) > hh / 2
        vals = np.zeros_like(rg)
        vals[:, mask] = rg[:, mask] / xg[mask] ** 2
        inner = np.trapezoid(vals, xg, axis=1)
        return float(np.trapezoid(inner, path.times))

    fine = level(x, rho, h)
    coarse = level(x[::2], rho[:, ::2], 2 * h)
    if fine > 10.0 and coarse > 0 and fine / coarse > 1.5:
        return float("inf")
    return fine


def _boundary_entropy(path: DensityPath, i: int, with_log_moment: bool) -> float:
    m = path.slice_symmetric(i) if path.alpha > 0 else path.slice_density(i)
    sig = log_energy(m)
    if sig == float("-inf"):
        raise PathError("boundary slice has infinite entropy")
    if with_log_moment and path.alpha > 0:
        lm = log_moment(m)
        if lm == float("-inf"):
            raise PathError("boundary slice has divergent log moment")
        return sig + path.alpha * lm
    return sig


def dbm_entropy(path: DensityPath, fields: FlowFields) -> float:
    """(beta/2)[ integral (u^2 + pi^2 rho^2 / 12) rho - (Sigma(nu_1) - Sigma(nu_0))/2 ]."""
    rho, u = path.rho, fields.u
    kinetic = _tx_integral(path, (u**2 + np.pi**2 * rho**2 / 12.0) * rho)
    s0 = _boundary_entropy(path, 0, with_log_moment=False)
    s1 = _boundary_entropy(path, path.times.size - 1, with_log_moment=False)
    return float(path.beta / 2.0 * (kinetic - 0.5 * (s1 - s0)))


def bessel_entropy(path: DensityPath, fields: FlowFields) -> float:
    """(beta/2)[ integral u^2 rho + (pi^2/3) integral rho^3
    + (alpha^2/4) integral rho/x^2 - (Sigma + alpha log-moment) between endpoints ]."""
    rho, u = path.rho, fields.u
    if path.alpha > 0:
        sym_err = np.max(np.abs(rho - rho[:, ::-1]))
        if sym_err > 1e-6 * max(rho.max(), 1.0):
            raise PathError("bessel entropy requires a symmetric path")
    kinetic = _tx_integral(path, u**2 * rho) + np.pi**2 / 3.0 * _tx_integral(path, rho**3)
    if path.alpha > 0:
        inv = _inv_x2_integral(path)
        if inv == float("inf"):
            return float("inf")
        kinetic += path.alpha**2 / 4.0 * inv
    s0 = _boundary_entropy(path, 0, with_log_moment=True)
    s1 = _boundary_entropy(path, path.times.size - 1, with_log_moment=True)
    return float(path.beta / 2.0 * (kinetic - (s1 - s0)))


# ---------------------------------------------------------------------------
# variational form


@dataclass(frozen=True)
class TestFunction:
    """A C^{2,1} test function given by value and first derivatives."""

    __test__ = False  # calculus-of-variations object, not a pytest case

    value: Callable[[np.ndarray, float], np.ndarray]
    dx: Callable[[np.ndarray, float], np.ndarray]
    dt: Callable[[np.ndarray, float], np.ndarray]


def _pair_kernel(x: np.ndarray, fx: np.ndarray, h: float) -> np.ndarray:
    """(f'(x_i) - f'(x_j))/(x_i - x_j) with the diagonal set to f''."""
    diff_x = x[:, None] - x[None, :]
    diff_f = fx[:, None] - fx[None, :]
    K = np.empty_like(diff_x)
    off = np.abs(diff_x) > 1e-300
    K[off] = diff_f[off] / diff_x[off]
    fpp = np.gradient(fx, h)
    di = np.diag_indices_from(K)
    K[di] = fpp
    return K


def variational_lower_bound(path: DensityPath, test_family: Sequence[TestFunction]) -> float:
    """max over the family of the dynamical-entropy pairing; by duality this
    is a lower bound for bessel_entropy up to discretization slack."""
    x, t, rho, h = path.space, path.times, path.rho, path.h
    beta, alpha = path.beta, path.alpha
    wts = np.full(x.size, h)
    wts[0] = wts[-1] = h / 2
    best = -np.inf
    for f in test_family:
        terms = np.zeros(t.size)
        for i, ti in enumerate(t):
            fx = f.dx(x, float(ti))
            ft = f.dt(x, float(ti))
            w = wts * rho[i]
            pair = 0.5 * float(w @ _pair_kernel(x, fx, h) @ w)
            dts = float(np.sum(w * ft))
            odd = fx - fx[::-1]
            if alpha > 0:
                nz = np.abs(x) > h / 2
                aterm = alpha / 4.0 * float(np.sum(w[nz] * odd[nz] / x[nz]))
            else:
                aterm = 0.0
            quad = 1.0 / (8.0 * beta) * float(np.sum(w * odd**2))
            terms[i] = -dts - pair - aterm - quad
        bulk = float(np.trapezoid(terms, t))
        w1 = wts * rho[-1]
        w0 = wts * rho[0]
        boundary = float(np.sum(w1 * f.value(x, float(t[-1]))) - np.sum(w0 * f.value(x, float(t[0]))))
        best = max(best, boundary + bulk)
    return best

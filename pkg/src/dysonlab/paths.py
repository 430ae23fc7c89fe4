"""Constructors for density paths: free-convolution bridges and drifted
dilation families."""
from __future__ import annotations

import numpy as np

from .convolve import conv_with_mp
from .freeconv import RectLaw, SqrtMPLaw, mp_edges, sqrt_mp_singular_density
from .measures import GriddedDensity, SymmetricMeasure
from .ratefn import DensityPath

__all__ = ["sqrt_mp_bridge", "bridge_from_law", "dilated_path"]


def sqrt_mp_bridge(
    sigma0: float,
    lam: float,
    nt: int = 200,
    nx: int = 400,
    t_end: float = 1.0,
    beta: float = 2.0,
    pad: float = 1.05,
) -> DensityPath:
    """Zero-drift bridge from sqrtMP(sigma0): slice t is sqrtMP(sqrt(sigma0^2 + t)).

    Every slice is closed form, so the path refines cleanly under grid
    halving.
    """
    alpha = 1.0 / lam - 1.0
    sig_end = np.sqrt(sigma0**2 + t_end)
    smax = np.sqrt(mp_edges(sig_end, lam)[1]) * pad
    nx = nx if nx % 2 == 1 else nx + 1
    x = np.linspace(-smax, smax, nx)
    times = np.linspace(0.0, t_end, nt)
    rho = np.empty((nt, nx))
    for i, t in enumerate(times):
        sig = np.sqrt(sigma0**2 + t)
        v = sqrt_mp_singular_density(x, sig, lam)
        rho[i] = v / np.trapezoid(v, x)
    return DensityPath(times=times, space=x, rho=rho, alpha=alpha, beta=beta)


def bridge_from_law(
    a: RectLaw,
    nt: int = 40,
    nx: int = 401,
    t_start: float = 0.05,
    t_end: float = 1.0,
    beta: float = 2.0,
    eta_min: float = 1e-3,
) -> DensityPath:
    """General zero-drift bridge nu_A boxplus sqrtMP(sqrt(t)) built slice by
    slice through the information-plus-noise fixed point.

    Starts at t_start > 0 by default so the first slice has a density even
    for atomic A.
    """
    alpha = 1.0 / a.lam - 1.0
    times = np.linspace(t_start, t_end, nt)
    slices = []
    span = 0.0
    for t in times:
        out = conv_with_mp(a, float(np.sqrt(t)), eta_min=eta_min)
        g = out.underlying
        span = max(span, float(g.grid[-1]))
        slices.append(g)
    nx = nx if nx % 2 == 1 else nx + 1
    x = np.linspace(-span, span, nx)
    rho = np.stack([np.interp(x, s.grid, s.values, left=0.0, right=0.0) for s in slices])
    rho /= np.trapezoid(rho, x, axis=1)[:, None]
    return DensityPath(times=times, space=x, rho=rho, alpha=alpha, beta=beta)


def dilated_path(
    base: SymmetricMeasure | SqrtMPLaw,
    rate: float,
    nt: int = 40,
    nx: int = 401,
    alpha: float = 0.5,
    beta: float = 2.0,
) -> DensityPath:
    """Dilation family rho_t(x) = rho_0(x / a(t)) / a(t) with a(t) = 1 + rate*t.

    The velocity field is u = x a'(t)/a(t), odd in x, so the path is a
    genuinely drifted symmetric path with positive dynamical entropy.
    """
    g = base.gridded().underlying if isinstance(base, SqrtMPLaw) else base.underlying
    if not isinstance(g, GriddedDensity):
        raise TypeError("dilated_path requires a gridded symmetric base")
    a_end = 1.0 + max(rate, 0.0)
    span = float(g.grid[-1]) * a_end * 1.02 + 1e-6
    nx = nx if nx % 2 == 1 else nx + 1
    x = np.linspace(-span, span, nx)
    times = np.linspace(0.0, 1.0, nt)
    rho = np.empty((nt, nx))
    for i, t in enumerate(times):
        a_t = 1.0 + rate * t
        v = np.interp(x / a_t, g.grid, g.values, left=0.0, right=0.0) / a_t
        v = 0.5 * (v + v[::-1])
        rho[i] = v / np.trapezoid(v, x)
    return DensityPath(times=times, space=x, rho=rho, alpha=alpha, beta=beta)

"""Closed-form characteristics for the complex Burgers equation with the
origin source, and the shooting construction of candidate minimizing paths.

The velocity/density pair f = u + i pi rho solves
    d_t f + f d_x f = -alpha^2 / (4 x^3),
equivalently the Euler form d_t u + (1/2) d_x(u^2 - pi^2 rho^2
- alpha^2/4x^2) = 0 together with mass conservation.  Along characteristics
dz/dt = f, df/dt = -alpha^2/(4 z^3), two quantities are conserved:

    C1 = f^2 - alpha^2/(4 z^2),      C2 = z f - t C1,

so with S(t) = z f0 + t C1 the flow is z_t = sqrt((S^2 - alpha^2/4)/C1),
f_t = S / z_t, with the square-root branch tracked by continuity from z.

Initial data lives on the lower half plane: f0(z) = conj(G(conj z))
+ alpha/(2z) (+ an odd polynomial perturbation), the Schwarz reflection of
the Stieltjes transform, whose boundary values on the axis are
u0 + i pi rho0.  A slice at time t is extracted by choosing, for every seed
abscissa, the depth at which the characteristic lands on the real axis at
time t (the Im -> 0+ limit), then interpolating along the landed curve.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import chebyshev as _cheb

from .freeconv import SqrtMPLaw, mp_edges, stieltjes
from .measures import (
    AtomicMeasure,
    GriddedDensity,
    MeasureError,
    SymmetricMeasure,
    log_energy,
    log_moment,
    quantiles,
    wasserstein2,
    _plain,
)
from .ratefn import DensityPath

__all__ = [
    "BurgersError",
    "BranchAmbiguityError",
    "CharacteristicCrossingError",
    "CharField",
    "MinimizerPath",
    "BurgersFlow",
    "evolve_characteristics",
    "extract_slice",
    "burgers_residual",
    "spherical_rate",
    "SphericalRateResult",
]


class BurgersError(RuntimeError):
    pass


class BranchAmbiguityError(BurgersError):
    def __init__(self, index: int):
        super().__init__(f"square-root branch ambiguous along characteristic {index}")
        self.index = index


class CharacteristicCrossingError(BurgersError):
    pass


# ---------------------------------------------------------------------------
# initial data


def _g_function(measure):
    """Upper-half-plane Stieltjes transform of a symmetric law."""
    if isinstance(measure, SqrtMPLaw):
        from .freeconv import sqrt_mp_stieltjes

        return lambda z: sqrt_mp_stieltjes(z, measure.sigma, measure.lam)
    return lambda z: stieltjes(measure, z)


def support_interval(measure) -> tuple[float, float]:
    """Positive-axis support hull [lo, hi] of a symmetric law."""
    if isinstance(measure, SqrtMPLaw):
        a, b = mp_edges(measure.sigma, measure.lam)
        return float(np.sqrt(a)), float(np.sqrt(b))
    pm = _plain(measure)
    if isinstance(pm, AtomicMeasure):
        pos = pm.atoms[pm.atoms > 0]
        if pos.size == 0:
            raise MeasureError("measure concentrated at 0 has no positive support")
        return float(pos.min()), float(pos.max())
    g, v = pm.grid, pm.values
    live = np.nonzero(v > 1e-9 * v.max())[0]
    pos = g[live]
    pos = pos[pos > 0]
    if pos.size == 0:
        raise MeasureError("no positive support found")
    return float(pos.min()), float(pos.max())


class BurgersFlow:
    """Characteristic flow for given symmetric initial law and alpha.

    Optional odd-Chebyshev perturbation coefficients parameterize the
    initial velocity for shooting.
    """

    def __init__(
        self,
        measure,
        alpha: float,
        pert: Optional[np.ndarray] = None,
        pert_scale: Optional[float] = None,
        eta0: float = 1e-3,
    ):
        if alpha < 0:
            raise BurgersError("alpha must be nonnegative")
        self.measure = measure
        self.alpha = alpha
        self.eta0 = eta0
        self._g = _g_function(measure)
        lo, hi = support_interval(measure)
        self.sup_lo, self.sup_hi = lo, hi
        self.pert = np.zeros(0) if pert is None else np.asarray(pert, float)
        self.pert_scale = pert_scale if pert_scale is not None else 1.5 * hi

    def _pert_poly(self, z, deriv: bool = False):
        if self.pert.size == 0:
            return np.zeros_like(z)
        coeffs = np.zeros(2 * self.pert.size)
        coeffs[1::2] = self.pert  # odd Chebyshev modes only
        if deriv:
            return _cheb.chebval(z / self.pert_scale, _cheb.chebder(coeffs)) / self.pert_scale
        return _cheb.chebval(z / self.pert_scale, coeffs)

    def f0(self, z):
        """Initial data on the lower half plane (Schwarz reflection)."""
        z = np.asarray(z, dtype=complex)
        base = np.conj(self._g(np.conj(z)))
        out = base + self._pert_poly(z)
        if self.alpha != 0:
            out = out + self.alpha / (2 * z)
        return out

    def f0_prime(self, z):
        z = np.asarray(z, dtype=complex)
        from .freeconv import stieltjes_derivative, sqrt_mp_stieltjes

        if isinstance(self.measure, SqrtMPLaw):
            h = 1e-6
            gp = (np.conj(self._g(np.conj(z + h))) - np.conj(self._g(np.conj(z - h)))) / (2 * h)
        else:
            gp = np.conj(stieltjes_derivative(self.measure, np.conj(z)))
        out = gp + self._pert_poly(z, deriv=True)
        if self.alpha != 0:
            out = out - self.alpha / (2 * z * z)
        return out

    # -- closed-form flow ---------------------------------------------------

    def flow(self, z, t: float, nsub: int = 32, f0v=None):
        """(z_t, f_t) from initial points z; branch tracked by continuity."""
        z = np.asarray(z, dtype=complex)
        F = self.f0(z) if f0v is None else f0v
        if self.alpha == 0:
            zt = z + t * F
            return zt, F.copy() if hasattr(F, "copy") else F
        a2 = self.alpha**2 / 4.0
        C1 = F * F - a2 / (z * z)
        zt_prev = z.copy()
        for k in range(1, nsub + 1):
            S = z * F + (t * k / nsub) * C1
            W = (S * S - a2) / C1
            r = np.sqrt(W)
            d_plus = np.abs(r - zt_prev)
            d_minus = np.abs(-r - zt_prev)
            ambiguous = (np.abs(d_plus - d_minus) < 1e-9 * (d_plus + d_minus)) & (np.abs(r) > 1e-12)
            if np.any(ambiguous):
                raise BranchAmbiguityError(int(np.argmax(ambiguous)))
            zt_prev = np.where(d_plus <= d_minus, r, -r)
        ft = (z * F + t * C1) / zt_prev
        return zt_prev, ft

    # -- landing extraction ---------------------------------------------------

    def seeds(self, n_chars: int = 240) -> np.ndarray:
        """Chebyshev-clustered abscissas on the positive support hull."""
        theta = (np.arange(n_chars) + 0.5) * np.pi / n_chars
        mid = 0.5 * (self.sup_lo + self.sup_hi)
        half = 0.5 * (self.sup_hi - self.sup_lo)
        return mid + half * np.cos(theta)[::-1]

    def land(self, xs: np.ndarray, t: float, bisects: int = 48):
        """Depth eta with Im z_t = 0 for interior seed abscissas (anchors).

        Inside the support the image height is monotone from +pi rho t down
        to negative at depth, so bisection is safe there.
        """
        xs = np.asarray(xs, float)
        lo = np.full(xs.shape, 1e-12)
        hi = np.full(xs.shape, max(0.02, 0.1 * t))
        for _ in range(120):
            zt, _ = self.flow(xs - 1j * hi, t)
            need = np.imag(zt) > 0
            if not need.any():
                break
            hi[need] *= 1.5
        else:
            raise CharacteristicCrossingError("no landing depth found (characteristic crossing?)")
        for _ in range(bisects):
            mid = 0.5 * (lo + hi)
            zt, _ = self.flow(xs - 1j * mid, t)
            pos = np.imag(zt) > 0
            lo = np.where(pos, mid, lo)
            hi = np.where(pos, hi, mid)
        eta = 0.5 * (lo + hi)
        zt, ft = self.flow(xs - 1j * eta, t)
        order = np.argsort(np.real(zt))
        if np.any(np.diff(np.real(zt)[order]) <= 0):
            raise CharacteristicCrossingError("landed abscissas fold over")
        return np.real(zt)[order], ft[order], (xs - 1j * eta)[order]

    # -- preimage Newton ------------------------------------------------------

    def _g2(self, z, t, x2):
        """Algebraic landing equation z_t(z)^2 - x^2 = 0 and its derivative
        (no square-root branches involved)."""
        a2 = self.alpha**2 / 4.0
        F = self.f0(z)
        Fp = self.f0_prime(z)
        if self.alpha == 0:
            zt = z + t * F
            g = zt * zt - x2
            gp = 2 * zt * (1 + t * Fp)
            return g, gp, F, zt * zt
        C1 = F * F - a2 / (z * z)
        C1p = 2 * F * Fp + 2 * a2 / (z * z * z)
        S = z * F + t * C1
        Sp = F + z * Fp + t * C1p
        g = (S * S - a2) / C1 - x2
        gp = (2 * S * Sp * C1 - (S * S - a2) * C1p) / (C1 * C1)
        return g, gp, F, S

    def _ft_at(self, z, t, x):
        """f_t at the landed real abscissa x given the preimage z."""
        F = self.f0(z)
        if self.alpha == 0:
            return F
        C1 = F * F - self.alpha**2 / 4.0 / (z * z)
        return (z * F + t * C1) / x

    def _newton_preimage(self, x, t, z, iters: int = 60, tol: float = 1e-12):
        x2 = x * x
        scale = 1.0 + abs(x2)
        for _ in range(iters):
            g, gp, _, _ = self._g2(z, t, x2)
            if abs(gp) < 1e-300:
                return z, False
            step = g / gp
            cap = 0.3 * (1 + abs(z))
            if abs(step) > cap:
                step *= cap / abs(step)
            z = z - step
            if abs(g) < tol * scale:
                return z, True
        g, _, _, _ = self._g2(z, t, x2)
        return z, bool(abs(g) < 1e-9 * scale)

    def _solve_targets(self, targets: np.ndarray, t: float, anchors_x, anchors_z):
        """Preimages for sorted positive targets by outward marching from the
        anchor hull, then a vectorized Newton polish on all targets."""
        targets = np.asarray(targets, float)
        z_guess = np.empty(targets.size, complex)
        ok = np.zeros(targets.size, bool)
        ax = np.asarray(anchors_x, float)
        az = np.asarray(anchors_z, complex)
        inside = (targets >= ax[0]) & (targets <= ax[-1])
        # warm start inside the anchor hull by interpolating the curve
        z_guess[inside] = np.interp(targets[inside], ax, az.real) + 1j * np.interp(
            targets[inside], ax, az.imag
        )
        ok[inside] = True
        # march right
        zs, xs = az[-1], ax[-1]
        for i in np.nonzero(targets > ax[-1])[0]:
            z_new, good = self._newton_preimage(targets[i], t, zs + (targets[i] - xs))
            if not good:
                break
            z_guess[i], ok[i] = z_new, True
            zs, xs = z_new, targets[i]
        # march left
        zs, xs = az[0], ax[0]
        for i in np.nonzero(targets < ax[0])[0][::-1]:
            z_new, good = self._newton_preimage(targets[i], t, zs + (targets[i] - xs))
            if not good:
                break
            z_guess[i], ok[i] = z_new, True
            zs, xs = z_new, targets[i]
        if not ok.any():
            raise CharacteristicCrossingError("no preimages found for the requested window")
        # vectorized Newton polish on all warm-started targets
        idx = np.nonzero(ok)[0]
        z = z_guess[idx]
        x2 = targets[idx] ** 2
        for _ in range(60):
            g, gp, _, _ = self._g2(z, t, x2)
            step = np.where(np.abs(gp) > 1e-300, g / gp, 0.0)
            cap = 0.3 * (1 + np.abs(z))
            big = np.abs(step) > cap
            step = np.where(big, step * (cap / np.where(big, np.abs(step), 1.0)), step)
            z = z - step
            if float(np.max(np.abs(g))) < 1e-12 * float(np.max(1 + x2)):
                break
        g, _, _, _ = self._g2(z, t, x2)
        good = np.abs(g) < 1e-9 * (1 + x2)
        sel = idx[good]
        return sel, z[good]

    def slice_positive(self, t: float, n_chars: int = 240, x_targets=None):
        """(x, rho, u) on the positive axis at time t, solved pointwise.

        Targets are either supplied or laid out uniformly over an adaptively
        discovered window; outside the reach of the characteristics the
        density vanishes and points are dropped.
        """
        if t == 0.0:
            xs = self.seeds(n_chars) if x_targets is None else np.asarray(x_targets, float)
            f = self.f0(xs - 1j * self.eta0)
            return xs, np.clip(np.imag(f) / np.pi, 0.0, None), np.real(f)
        n_anchor = max(24, n_chars // 6)
        mid_seeds = self.seeds(n_anchor)
        span = self.sup_hi - self.sup_lo
        interior = (mid_seeds > self.sup_lo + 0.15 * span) & (mid_seeds < self.sup_hi - 0.15 * span)
        ax, af, azee = self.land(mid_seeds[interior], t)
        if x_targets is None:
            lo_t = max(ax[0] - 2.0 * span, 1e-6 * self.sup_hi)
            hi_t = ax[-1] + 2.0 * span + 2.0 * t
            x_targets = np.linspace(lo_t, hi_t, n_chars)
        else:
            x_targets = np.asarray(x_targets, float)
        sel, z_pre = self._solve_targets(x_targets, t, ax, azee)
        xs = x_targets[sel]
        ft = self._ft_at(z_pre, t, xs)
        rho = np.imag(ft) / np.pi
        u = np.real(ft)
        # beyond the support edge, preimages drift into the upper half plane
        # or produce negative density: trim from the outside in
        keep = (rho > -1e-9) & (np.imag(z_pre) < 1e-9)
        if not keep.any():
            raise CharacteristicCrossingError("extracted slice carries no density")
        xs, rho, u, z_pre = xs[keep], np.clip(rho[keep], 0.0, None), u[keep], z_pre[keep]
        # forward-flow consistency: the branch-tracked image of each preimage
        # must land at the requested abscissa, else the solve left the sheet
        bulk = np.nonzero(rho > 1e-3 * rho.max())[0]
        if bulk.size:
            sub = bulk[np.linspace(0, bulk.size - 1, min(12, bulk.size)).astype(int)]
            try:
                zt_chk, _ = self.flow(z_pre[sub], t)
            except BranchAmbiguityError as exc:
                raise CharacteristicCrossingError(str(exc)) from exc
            if np.max(np.abs(zt_chk - xs[sub])) > 1e-6 * (1.0 + np.max(np.abs(xs[sub]))):
                raise CharacteristicCrossingError(
                    "preimage solve inconsistent with the forward flow (characteristic crossing)"
                )
        return xs, rho, u


# ---------------------------------------------------------------------------
# spec-level field containers


@dataclass(frozen=True)
class CharField:
    """Characteristics at one time: initial points/data and their images."""

    z0: np.ndarray
    f0: np.ndarray
    t: float
    zt: np.ndarray
    ft: np.ndarray
    alpha: float
    flow: Optional[BurgersFlow] = field(default=None, repr=False, compare=False)

    def conserved_drift(self) -> float:
        """Max relative drift of the two conserved quantities."""
        a2 = self.alpha**2 / 4.0
        c1_0 = self.f0**2 - a2 / self.z0**2
        c1_t = self.ft**2 - a2 / self.zt**2
        c2_0 = self.z0 * self.f0
        c2_t = self.zt * self.ft - self.t * c1_t
        d1 = np.abs(c1_t - c1_0) / np.maximum(np.abs(c1_0), 1e-300)
        d2 = np.abs(c2_t - c2_0) / np.maximum(np.abs(c2_0), 1e-300)
        return float(max(d1.max(), d2.max()))


def char_field(flow: BurgersFlow, t: float, n_chars: int = 240) -> CharField:
    xs = flow.seeds(n_chars)
    z0 = np.concatenate([-xs[::-1], xs]) - 1j * flow.eta0
    f0v = flow.f0(z0)
    zt, ft = flow.flow(z0, t, f0v=f0v)
    return CharField(z0=z0, f0=f0v, t=t, zt=zt, ft=ft, alpha=flow.alpha, flow=flow)


def evolve_characteristics(fieldv: CharField, t: float) -> CharField:
    """Closed-form evaluation at a new time from the stored initial data."""
    if fieldv.flow is not None:
        zt, ft = fieldv.flow.flow(fieldv.z0, t, f0v=fieldv.f0)
        return CharField(fieldv.z0, fieldv.f0, t, zt, ft, fieldv.alpha, fieldv.flow)
    # standalone: rebuild a bare flow around the stored values
    tmp = BurgersFlow.__new__(BurgersFlow)
    tmp.alpha = fieldv.alpha
    zt, ft = BurgersFlow.flow(tmp, fieldv.z0, t, f0v=fieldv.f0)
    return CharField(fieldv.z0, fieldv.f0, t, zt, ft, fieldv.alpha, None)


def _positive_slice_on_grid(flow: BurgersFlow, t: float, xgrid: np.ndarray, n_chars: int):
    """rho, u on a symmetric grid: solve the positive targets, mirror."""
    xgrid = np.asarray(xgrid, float)
    pos_mask = xgrid > 1e-12
    pos = xgrid[pos_mask]
    xs, rho_p, u_p = flow.slice_positive(t, n_chars=n_chars, x_targets=pos)
    rho_full = np.zeros(xgrid.size)
    u_full = np.zeros(xgrid.size)
    ji = np.searchsorted(pos, xs)
    base = np.nonzero(pos_mask)[0]
    rho_full[base[ji]] = rho_p
    u_full[base[ji]] = u_p
    # mirror onto the negative half (rho even, u odd)
    rho_full = np.where(xgrid < 0, rho_full[::-1], rho_full)
    u_full = np.where(xgrid < 0, -u_full[::-1], u_full)
    return rho_full, u_full


def extract_slice(fieldv: CharField, t: float, xgrid: np.ndarray, n_chars: int = 240):
    """(rho, u) on xgrid at time t, solved pointwise along the image curve.

    rho is clipped at 0, renormalized to unit mass, and the renormalization
    factor is returned alongside.
    """
    if fieldv.flow is None:
        raise BurgersError("extract_slice needs a CharField built from a BurgersFlow")
    xgrid = np.asarray(xgrid, float)
    rho, u = _positive_slice_on_grid(fieldv.flow, t, xgrid, n_chars)
    mass = np.trapezoid(rho, xgrid)
    if mass <= 0:
        raise CharacteristicCrossingError("no mass on the requested window")
    return GriddedDensity.from_values(xgrid, rho / mass), u, float(mass)


@dataclass(frozen=True)
class MinimizerPath:
    """A density path together with its velocity field on the same grids."""

    path: DensityPath
    u: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.path.rho.shape:
            raise BurgersError("velocity matrix must match the density grid")


def build_minimizer_path(
    flow: BurgersFlow,
    times: np.ndarray,
    xgrid: np.ndarray,
    beta: float = 2.0,
    n_chars: int = 240,
) -> MinimizerPath:
    times = np.asarray(times, float)
    xgrid = np.asarray(xgrid, float)
    rho = np.empty((times.size, xgrid.size))
    u = np.empty_like(rho)
    for i, t in enumerate(times):
        r, ui = _positive_slice_on_grid(flow, float(t), xgrid, n_chars)
        rho[i] = r / np.trapezoid(r, xgrid)
        u[i] = ui
    path = DensityPath(times=times, space=xgrid, rho=rho, alpha=flow.alpha, beta=beta)
    return MinimizerPath(path=path, u=u)


def burgers_residual(mp: MinimizerPath, floor_frac: float = 1e-6) -> float:
    """Max interior finite-difference residual of the Euler equation
    d_t u + (1/2) d_x (u^2 - pi^2 rho^2 - alpha^2/4x^2) = 0."""
    path, u = mp.path, mp.u
    t, x, rho = path.times, path.space, path.rho
    h = path.h
    P = u**2 - np.pi**2 * rho**2
    if path.alpha != 0:
        with np.errstate(divide="ignore"):
            P = P - path.alpha**2 / (4.0 * x**2)
    dudt = np.empty_like(u)
    dudt[1:-1] = (u[2:] - u[:-2]) / (t[2:] - t[:-2])[:, None]
    dudt[0] = dudt[-1] = 0.0
    dPdx = np.gradient(P, h, axis=1)
    live = rho > floor_frac * rho.max()
    # the full space-time stencil must stay inside the support: the moving
    # edge is only C^0 and would dominate the max otherwise
    interior = np.zeros_like(live)
    interior[1:-1, 2:-2] = (
        live[1:-1, 2:-2]
        & live[1:-1, 1:-3]
        & live[1:-1, 3:-1]
        & live[:-2, 2:-2]
        & live[2:, 2:-2]
    )
    if not interior.any():
        return 0.0
    return float(np.max(np.abs(dudt + 0.5 * dPdx)[interior]))


# ---------------------------------------------------------------------------
# shooting for the variational value


def _measure_stats(meas, alpha: float) -> tuple[float, float, float]:
    """(second moment, log-moment, log-energy) of an endpoint law."""
    if isinstance(meas, SqrtMPLaw):
        g = meas.gridded(num=4001)
        return meas.moment(2), log_moment(g), log_energy(g)
    pm = _plain(meas)
    if isinstance(pm, AtomicMeasure):
        raise BurgersError(
            "endpoint laws must have a density (atomic endpoints make the kinetic integral diverge); smooth them first"
        )
    return pm.moment(2), log_moment(pm), log_energy(pm)


@dataclass(frozen=True)
class SphericalRateResult:
    """Variational value up to the universal additive constant."""

    value: float
    kinetic: float
    boundary: float
    endpoint_mismatch: float
    coefficients: np.ndarray
    n_iterations: int


def _quantile_levels(k: int) -> np.ndarray:
    return (np.arange(k) + 0.5) / k


def _slice_quantiles(x, rho, levels):
    """Quantiles of the positive-half law carried by the landed curve."""
    inc = 0.5 * (rho[1:] + rho[:-1]) * np.diff(x)
    cdf = np.concatenate([[0.0], np.cumsum(inc)])
    total = cdf[-1]
    if total <= 0:
        return np.full(levels.size, x[0])
    eps = 1e-15 * np.arange(cdf.size)
    return np.interp(levels * total, cdf + eps, x)


def _target_quantiles(meas, levels) -> np.ndarray:
    """Quantiles of the positive half of a symmetric target law."""
    if isinstance(meas, SqrtMPLaw):
        meas = meas.gridded(num=4001)
    pm = _plain(meas)
    pos = pm.grid >= 0
    half = GriddedDensity.from_values(pm.grid[pos], pm.values[pos], normalize=True)
    return quantiles(half, levels.size)


def spherical_rate(
    nuA,
    nuB,
    alpha: float,
    n_modes: int = 12,
    n_levels: int = 24,
    nt_quad: int = 33,
    n_chars: int = 200,
    max_iter: int = 40,
    tol: float = 2e-3,
) -> SphericalRateResult:
    """Assemble the candidate minimizer from nuA to nuB by shooting on the
    initial velocity, and evaluate the variational value up to the additive
    constant:

        -inf integral (u^2 rho + (pi^2/3) rho^3 + (alpha^2/4) rho/x^2)
        + (m2 - alpha LM)(A) + (m2 - alpha LM)(B) - Sigma(A) - Sigma(B).
    """
    levels = _quantile_levels(n_levels)
    target = _target_quantiles(nuB, levels)
    scale_b = float(np.max(np.abs(target)))

    def residual_vec(coeffs):
        flow = BurgersFlow(nuA, alpha, pert=coeffs)
        try:
            x1, rho1, _ = flow.slice_positive(1.0, n_chars)
            got = _slice_quantiles(x1, rho1, levels)
        except BurgersError:
            return np.full(levels.size, 10.0 * scale_b)
        return got - target

    coeffs = np.zeros(n_modes)
    r = residual_vec(coeffs)
    lm_mu = 1e-3
    iters = 0
    for iters in range(1, max_iter + 1):
        rms = float(np.sqrt(np.mean(r**2)))
        if rms < tol:
            break
        J = np.empty((levels.size, n_modes))
        for j in range(n_modes):
            dc = 1e-5 * max(1.0, abs(coeffs[j]))
            cp = coeffs.copy()
            cp[j] += dc
            J[:, j] = (residual_vec(cp) - r) / dc
        A = J.T @ J + lm_mu * np.eye(n_modes)
        step = np.linalg.solve(A, J.T @ r)
        cand = coeffs - step
        r_cand = residual_vec(cand)
        if np.sqrt(np.mean(r_cand**2)) < rms:
            coeffs, r = cand, r_cand
            lm_mu = max(lm_mu / 3.0, 1e-8)
        else:
            lm_mu *= 10.0
            if lm_mu > 1e6:
                break
    mismatch = float(np.sqrt(np.mean(r**2)))
    if mismatch > 50 * tol:
        raise BurgersError(
            f"shooting failed: best endpoint quantile mismatch {mismatch:.3e}"
        )

    flow = BurgersFlow(nuA, alpha, pert=coeffs)
    tq = np.linspace(0.0, 1.0, nt_quad)
    vals = np.empty(nt_quad)
    for i, t in enumerate(tq):
        x, rho, u = flow.slice_positive(float(t), n_chars)
        dens = u**2 * rho + np.pi**2 / 3.0 * rho**3
        if alpha > 0:
            good = x > 1e-9
            dens = dens + np.where(good, alpha**2 / 4.0 * rho / np.maximum(x, 1e-9) ** 2, 0.0)
        # symmetric law: double the positive half
        vals[i] = 2.0 * np.trapezoid(dens, x)
    kinetic = float(np.trapezoid(vals, tq))
    m2a, lma, siga = _measure_stats(nuA, alpha)
    m2b, lmb, sigb = _measure_stats(nuB, alpha)
    boundary = (m2a - alpha * lma) + (m2b - alpha * lmb) - siga - sigb
    return SphericalRateResult(
        value=-kinetic + boundary,
        kinetic=kinetic,
        boundary=boundary,
        endpoint_mismatch=mismatch,
        coefficients=coeffs,
        n_iterations=iters,
    )

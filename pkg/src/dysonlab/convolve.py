"""Rectangular free convolution: information-plus-noise fixed point and the
general A boxplus_lam B solve through the coupled subordination equations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .freeconv import (
    RectLaw,
    SqrtMPLaw,
    mp_edges,
    mp_stieltjes,
    stieltjes,
    stieltjes_derivative,
)
from .measures import (
    AtomicMeasure,
    GriddedDensity,
    MeasureError,
    SymmetricMeasure,
    _plain,
)
from .rtransform import RTransformSeries, rect_r_transform

__all__ = [
    "ConvergenceError",
    "conv_with_mp",
    "conv_general",
    "ConvGeneralResult",
    "recst_fixed_point",
    "singular_support_bound",
    "moments_via_contour",
    "entropy_decrease_check",
]


class ConvergenceError(MeasureError):
    def __init__(self, msg: str, residual: float):
        super().__init__(f"{msg} (last residual {residual:.3e})")
        self.residual = residual


def _eigen_stieltjes_fn(m):
    """z -> integral d nu_hat(s) / (z - s^2), the eigenvalue-axis Stieltjes
    transform of the squared-singular pushforward of a symmetric law."""
    if isinstance(m, SqrtMPLaw):
        return lambda z: mp_stieltjes(np.asarray(z, complex), m.sigma, m.lam)
    pm = _plain(m)
    if isinstance(pm, AtomicMeasure):
        s2 = pm.atoms**2
        w = pm.weights

        def fn(z):
            z = np.asarray(z, complex)
            return np.sum(w / (z[..., None] - s2), axis=-1)

        return fn
    g2 = pm.grid**2
    v = pm.values
    grid = pm.grid

    def fn(z):
        z = np.asarray(z, complex)
        return np.trapezoid(v / (z[..., None] - g2), grid, axis=-1)

    return fn


def singular_support_bound(m) -> float:
    if isinstance(m, SqrtMPLaw):
        return float(np.sqrt(mp_edges(m.sigma, m.lam)[1]))
    pm = _plain(m)
    if isinstance(pm, AtomicMeasure):
        return float(np.max(np.abs(pm.atoms)))
    return float(np.max(np.abs(pm.grid)))


def recst_fixed_point(
    a_measure,
    sigma: float,
    lam: float,
    w_points: np.ndarray,
    tol: float = 1e-12,
) -> np.ndarray:
    """Solve the information-plus-noise equation for m(w) at the given
    complex eigenvalue-axis points by damped iteration plus Newton polish,
    with continuation from large imaginary offsets.

    The fixed point reads  T_A(D(m, w)) = m / (1 - sigma^2 m)  with
    D = (1 - sigma^2 m)((1 - sigma^2 m) w - (1 - lam) sigma^2 / lam),
    which reduces to the square-root Marchenko-Pastur self-consistency at
    A = 0 and is equivalent to additivity of the rectangular R-transform
    with C_W(w) = sigma^2 w / lam.
    """
    T = _eigen_stieltjes_fn(a_measure)
    w_points = np.asarray(w_points, dtype=complex)
    xs = np.real(w_points)
    target_eta = np.imag(w_points)
    if np.any(target_eta <= 0):
        raise MeasureError("fixed point requires Im w > 0")
    s2 = sigma * sigma

    def residual(w, m):
        with np.errstate(all="ignore"):
            D = (1 - s2 * m) * ((1 - s2 * m) * w - (1 - lam) * s2 / lam)
            g = T(D)
            return g / (1 + s2 * g) - m

    def newton(w, m0, iters=80):
        # the residual is analytic in m; damped Newton from the warm start
        m = m0.copy()
        res = np.inf
        for _ in range(iters):
            F = residual(w, m)
            res = float(np.max(np.abs(F)))
            if res < tol:
                break
            with np.errstate(all="ignore"):
                h = 1e-7 * (1.0 + np.abs(m))
                Fp = (residual(w, m + h) - residual(w, m - h)) / (2 * h)
                step = np.where(np.abs(Fp) > 1e-300, F / Fp, F)
                cap = 0.5 * (1 + np.abs(m))
                big = np.abs(step) > cap
                step = np.where(big, step * (cap / np.where(big, np.abs(step), 1.0)), step)
                m = m - step
        return m, float(np.max(np.abs(residual(w, m))))

    scale = max(float(np.max(np.abs(w_points))), 1.0)
    ladder = [4.0 * scale]
    floor_eta = float(np.min(target_eta))
    while ladder[-1] > floor_eta:
        ladder.append(max(ladder[-1] / 2.0, floor_eta))
    m = 1.0 / (xs + 1j * ladder[0])
    for eta in ladder:
        m, res = newton(xs + 1j * np.maximum(target_eta, eta), m)
        if not np.all(np.isfinite(m)):
            raise ConvergenceError("fixed point diverged during continuation", res)
    m, res = newton(w_points, m)
    if res > 1e-10 or not np.all(np.isfinite(m)):
        raise ConvergenceError("fixed point did not converge at requested eta", res)
    if np.any(np.imag(m) > 1e-9):
        raise ConvergenceError("fixed point left the physical branch", res)
    return m


def conv_with_mp(
    a: RectLaw,
    sigma: float,
    eta_min: float = 1e-3,
    num: int = 2001,
    clip_frac: float | None = None,
) -> SymmetricMeasure:
    """Law of A boxplus_lam (sigma * Gaussian), i.e. the limiting symmetrized
    singular values of A + sigma W, as an eta-smoothed gridded density.

    The reported density is the boundary value at Im = eta_min and is
    documented as eta-smoothed; values below ``clip_frac`` of the peak
    (default 5 * eta_min) are clipped to suppress the smoothing tails.
    """
    if sigma == 0:
        meas = a.measure
        return meas.gridded() if isinstance(meas, SqrtMPLaw) else meas
    if sigma < 0:
        raise MeasureError("sigma must be nonnegative")
    lam = a.lam
    if lam == 0:
        raise MeasureError("lambda = 0 degenerate: the noise collapses to a point mass")
    smax = singular_support_bound(a.measure) + np.sqrt(mp_edges(sigma, lam)[1]) * 1.05 + 0.1
    grid = np.linspace(-smax, smax, num if num % 2 == 1 else num + 1)
    pos = np.abs(grid)
    w_points = pos**2 + 1j * eta_min
    m = recst_fixed_point(a.measure, sigma, lam, w_points)
    dens_eigen = np.clip(-np.imag(m) / np.pi, 0.0, None)
    dens = pos * dens_eigen
    clip = 5 * eta_min if clip_frac is None else clip_frac
    dens[dens < clip * dens.max()] = 0.0
    return SymmetricMeasure(GriddedDensity.from_values(grid, dens, normalize=True))


def conv_stieltjes_with_mp(a: RectLaw, sigma: float, z) -> np.ndarray:
    """G_{A boxplus sigma W} on the singular axis via G(z) = z m(z^2)."""
    z = np.asarray(z, dtype=complex)
    w = z * z
    flip = np.imag(w) <= 0
    w_eval = np.where(flip, np.conj(w), w)
    w_eval = w_eval + 1j * np.where(np.imag(w_eval) < 1e-12, 1e-12, 0.0)
    m = recst_fixed_point(a.measure, sigma, a.lam, w_eval)
    m = np.where(flip, np.conj(m), m)
    return z * m


# ---------------------------------------------------------------------------
# general rectangular free convolution


@dataclass(frozen=True)
class ConvGeneralResult:
    measure: SymmetricMeasure
    eta_reached: float
    max_residual: float
    c_b: RTransformSeries


class _GeneralSolver:
    """Newton continuation for G_{A boxplus_lam B}.

    Unknowns per z: (G, z') solving
        w(G, z)  = G_A(z')(lam G_A(z') + (1 - lam)/z')
        z G      = z' G_A(z') + C_B(w(G, z))
    with w(G, z) = G (lam G + (1 - lam)/z).
    """

    def __init__(self, a: RectLaw, c_b: RTransformSeries):
        self.lam = a.lam
        self.a = a.measure
        self.c_b = c_b
        self._cache_z: list[complex] = []
        self._cache_sol: list[tuple[complex, complex]] = []

    def _ga(self, z):
        flip = np.imag(z) <= 0
        ze = np.where(flip, np.conj(z), z)
        g = stieltjes(self.a, ze)
        return np.where(flip, np.conj(g), g)

    def _gap(self, z):
        flip = np.imag(z) <= 0
        ze = np.where(flip, np.conj(z), z)
        g = stieltjes_derivative(self.a, ze)
        return np.where(flip, np.conj(g), g)

    def _residual(self, z, G, zp):
        lam = self.lam
        w = G * (lam * G + (1 - lam) / z)
        ga = complex(self._ga(np.array([zp]))[0])
        return abs(ga * (lam * ga + (1 - lam) / zp) - w) + abs(
            zp * ga + complex(self.c_b(np.array([w]))[0]) - z * G
        )

    def _newton(self, z, G, zp, max_iter=60, tol=1e-12):
        lam = self.lam
        for _ in range(max_iter):
            w = G * (lam * G + (1 - lam) / z)
            ga = complex(self._ga(np.array([zp]))[0])
            gap = complex(self._gap(np.array([zp]))[0])
            cb = complex(self.c_b(np.array([w]))[0])
            cbp = complex(self.c_b.derivative(np.array([w]))[0])
            F1 = ga * (lam * ga + (1 - lam) / zp) - w
            F2 = zp * ga + cb - z * G
            dw_dG = 2 * lam * G + (1 - lam) / z
            J11 = -dw_dG
            J12 = gap * (2 * lam * ga + (1 - lam) / zp) - ga * (1 - lam) / zp**2
            J21 = cbp * dw_dG - z
            J22 = ga + zp * gap
            det = J11 * J22 - J12 * J21
            if det == 0:
                break
            dG = (F1 * J22 - F2 * J12) / det
            dzp = (J11 * F2 - J21 * F1) / det
            # damped steps keep z' from escaping through the flat far field
            capG = 0.5 * (1 + abs(G))
            capz = 0.5 * (1 + abs(zp))
            if abs(dG) > capG:
                dG *= capG / abs(dG)
            if abs(dzp) > capz:
                dzp *= capz / abs(dzp)
            G, zp = G - dG, zp - dzp
            if abs(dG) + abs(dzp) < tol * (1 + abs(G) + abs(zp)):
                break
        return G, zp

    def solve_at(self, zs: np.ndarray, max_iter: int = 60, tol: float = 1e-12):
        """Solve at each z, ordered by decreasing |Im z|, warm-starting from
        the nearest already-solved point; a point that fails to converge is
        retried through a private continuation ladder from the far field.
        Returns (G, w, residual)."""
        lam = self.lam
        zs = np.asarray(zs, dtype=complex).ravel()
        order = np.argsort(-np.abs(np.imag(zs)), kind="stable")
        G_out = np.zeros_like(zs)
        w_out = np.zeros_like(zs)
        res_out = np.zeros(zs.size)
        for idx in order:
            z = zs[idx]
            if self._cache_z:
                czs = np.array(self._cache_z)
                j = int(np.argmin(np.abs(czs - z)))
                G, zp = self._cache_sol[j]
            else:
                G, zp = 1.0 / z, z
            G, zp = self._newton(z, G, zp, max_iter, tol)
            res = self._residual(z, G, zp)
            if not (np.isfinite(res) and res < 1e-9):
                # private ladder from the far field down to this z
                eta_hi = 8.0 * max(abs(z), 1.0)
                zt = complex(np.real(z), eta_hi * np.sign(np.imag(z) or 1.0))
                G, zp = 1.0 / zt, zt
                eta = eta_hi
                target = abs(np.imag(z))
                while eta > target:
                    eta = max(eta * 0.6, target)
                    zt = complex(np.real(z), eta * np.sign(np.imag(z) or 1.0))
                    G, zp = self._newton(zt, G, zp, max_iter, tol)
                res = self._residual(z, G, zp)
            w = G * (lam * G + (1 - lam) / z)
            if np.isfinite(res) and res < 1e-9:
                self._cache_z.append(z)
                self._cache_sol.append((G, zp))
            G_out[idx] = G
            w_out[idx] = w
            res_out[idx] = res
        return G_out, w_out, res_out


def conv_general(
    a: RectLaw,
    b: RectLaw,
    eta_min: float = 1e-3,
    num: int = 1201,
    order: int = 8,
    res_tol: float = 1e-8,
) -> ConvGeneralResult:
    """General A boxplus_lam B via Newton continuation from infinity.

    The reach in eta is determined adaptively: continuation stops lowering
    the offset once |w| leaves the estimated convergence disc of C_B or the
    residual degrades, and the reached offset is reported.
    """
    if abs(a.lam - b.lam) > 1e-12:
        raise MeasureError("both laws must share the aspect ratio lambda")
    c_b = rect_r_transform(b.measure, b.lam, order=order)
    if np.all(c_b.coefficients == 0.0):
        meas = a.measure
        if isinstance(meas, SqrtMPLaw):
            meas = meas.gridded()
        return ConvGeneralResult(meas, eta_min, 0.0, c_b)
    solver = _GeneralSolver(a, c_b)
    smax = singular_support_bound(a.measure) + singular_support_bound(b.measure) + 0.5
    grid = np.linspace(-smax, smax, num if num % 2 == 1 else num + 1)
    eta_top = 4.0 * smax
    ladder = [eta_top]
    while ladder[-1] > eta_min:
        ladder.append(max(ladder[-1] / 2.0, eta_min))
    wrad = 0.8 * c_b.radius_estimate
    G_last = None
    eta_reached = ladder[0]
    res_last = 0.0
    for eta in ladder:
        G, w, res = solver.solve_at(grid + 1j * eta)
        bad = (np.abs(w) > wrad) | (res > res_tol) | ~np.isfinite(G)
        if np.any(bad):
            break
        G_last, eta_reached, res_last = G, eta, float(res.max())
    if G_last is None:
        raise ConvergenceError("continuation stalled before any usable level", float(res.max()))
    dens = np.clip(-np.imag(G_last) / np.pi, 0.0, None)
    dens = 0.5 * (dens + dens[::-1])
    clip = 5 * eta_reached
    dens[dens < clip * dens.max()] = 0.0
    if dens.max() == 0.0:
        raise ConvergenceError("no density mass recovered at reached eta", res_last)
    meas = SymmetricMeasure(GriddedDensity.from_values(grid, dens, normalize=True))
    return ConvGeneralResult(meas, eta_reached, res_last, c_b)


def conv_general_g_fn(a: RectLaw, b: RectLaw, order: int = 8):
    """Callable z -> G_{A boxplus B}(z) (upper half plane), with Schwarz
    reflection below the axis.  Shares one Newton cache across calls."""
    c_b = rect_r_transform(b.measure, b.lam, order=order)
    solver = _GeneralSolver(a, c_b)

    def g(z):
        z = np.asarray(z, dtype=complex)
        flip = np.imag(z) < 0
        ze = np.where(flip, np.conj(z), z)
        G, _, _ = solver.solve_at(ze.ravel())
        G = G.reshape(ze.shape)
        return np.where(flip, np.conj(G), G)

    return g


def moments_via_contour(g_fn, radius: float, kmax: int, npoints: int = 512) -> np.ndarray:
    """Moments m_0..m_kmax of a compactly supported law from its Stieltjes
    transform by the contour integral (1/2 pi i) oint z^k G(z) dz."""
    theta = (np.arange(npoints) + 0.5) * (2 * np.pi / npoints)
    z = radius * np.exp(1j * theta)
    G = g_fn(z)
    dz = 1j * z * (2 * np.pi / npoints)
    return np.array([np.real(np.sum(z**k * G * dz) / (2j * np.pi)) for k in range(kmax + 1)])


# ---------------------------------------------------------------------------
# entropy monotonicity under free convolution


def entropy_decrease_check(path, p, nt_sub: int = 0) -> tuple[float, float]:
    """Dynamical entropy of a path and of its slice-wise free convolution
    with the symmetric law p.  The caller asserts the second does not exceed
    the first beyond discretization slack.
    """
    from .ratefn import DensityPath, bessel_entropy, velocity_from_continuity

    lam = 1.0 / (1.0 + path.alpha)
    before = bessel_entropy(path, velocity_from_continuity(path))
    idx = np.arange(path.times.size)
    if nt_sub and nt_sub < idx.size:
        idx = np.unique(np.linspace(0, idx.size - 1, nt_sub).astype(int))
    times = path.times[idx]
    slices = []
    span = 0.0
    for i in idx:
        meas = SymmetricMeasure(GriddedDensity.from_values(path.space, path.rho[i], normalize=True))
        if isinstance(p, SqrtMPLaw):
            if abs(p.lam - lam) > 1e-9:
                raise MeasureError("noise law aspect ratio must match the path alpha")
            out = conv_with_mp(RectLaw(lam, meas), p.sigma)
        else:
            out = conv_general(RectLaw(lam, meas), RectLaw(lam, p)).measure
        g = out.underlying
        span = max(span, float(g.grid[-1]))
        slices.append(g)
    nx = path.space.size
    grid = np.linspace(-span, span, nx if nx % 2 == 1 else nx + 1)
    rho = np.stack([np.interp(grid, s.grid, s.values, left=0.0, right=0.0) for s in slices])
    rho /= np.trapezoid(rho, grid, axis=1)[:, None]
    conv_path = DensityPath(times=times, space=grid, rho=rho, alpha=path.alpha, beta=path.beta)
    after = bessel_entropy(conv_path, velocity_from_continuity(conv_path))
    return before, after

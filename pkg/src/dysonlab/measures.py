"""Measure containers and measure-level primitives.

Two concrete representations are used throughout the package: atomic
measures (sorted atoms with weights) and gridded densities on a uniform
grid.  A ``SymmetricMeasure`` wraps either and certifies invariance under
x -> -x.  All containers are immutable after construction; every operation
here is a pure function.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "AtomicMeasure",
    "GriddedDensity",
    "SymmetricMeasure",
    "Measure",
    "MeasureError",
    "symmetrize",
    "wasserstein2",
    "quantiles",
    "hilbert_density",
    "hilbert_discrete",
    "log_energy",
    "log_moment",
    "atomic_from_gridded",
    "gridded_from_atomic",
    "semicircle_density",
]

NEG_INF = float("-inf")


class MeasureError(ValueError):
    """Raised when a measure violates a contract (normalization, symmetry, ...)."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AtomicMeasure:
    """Finitely many atoms, sorted strictly increasing, weights summing to 1.

    Atoms closer than ``merge_tol * span`` are merged on construction
    (weights added); SVD-based samplers routinely emit near-duplicates.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.atoms.size == 0:
            raise MeasureError("empty configuration")
        if not np.all(np.diff(self.atoms) > 0):
            raise MeasureError("atoms must be strictly increasing")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise MeasureError(f"weights sum to {self.weights.sum()!r}, expected 1 within 1e-12")
        if np.any(self.weights < 0):
            raise MeasureError("negative weight")

    @classmethod
    def from_points(cls, points, weights=None, merge_tol: float = 1e-12) -> "AtomicMeasure":
        pts = np.asarray(points, dtype=float).ravel()
        if pts.size == 0:
            raise MeasureError("empty configuration")
        if not np.all(np.isfinite(pts)):
            raise MeasureError("non-finite atom position")
        if weights is None:
            w = np.full(pts.size, 1.0 / pts.size)
        else:
            w = np.asarray(weights, dtype=float).ravel()
            if w.size != pts.size:
                raise MeasureError("weights/atoms length mismatch")
        order = np.argsort(pts, kind="stable")
        pts, w = pts[order], w[order]
        span = max(pts[-1] - pts[0], 1.0)
        tol = merge_tol * span
        out_a, out_w = [pts[0]], [w[0]]
        for a, wi in zip(pts[1:], w[1:]):
            if a - out_a[-1] <= tol:
                # merge to the weight-averaged position
                tot = out_w[-1] + wi
                if tot > 0:
                    out_a[-1] = (out_a[-1] * out_w[-1] + a * wi) / tot
                out_w[-1] = tot
            else:
                out_a.append(a)
                out_w.append(wi)
        w = np.array(out_w)
        s = w.sum()
        if s <= 0:
            raise MeasureError("total weight must be positive")
        return cls(_frozen(np.array(out_a)), _frozen(w / s))

    @property
    def n(self) -> int:
        return self.atoms.size

    def moment(self, k: int) -> float:
        return float(np.sum(self.weights * self.atoms**k))

    def total_mass(self) -> float:
        return float(self.weights.sum())

    def second_moment(self) -> float:
        return self.moment(2)


@dataclass(frozen=True)
class GriddedDensity:
    """Density values on a uniform grid, trapezoid mass 1 within 1e-8."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g, v = self.grid, self.values
        if g.size < 2:
            raise MeasureError("grid needs at least two points")
        steps = np.diff(g)
        if not np.allclose(steps, steps[0], rtol=1e-8, atol=1e-12 * max(abs(g[0]), abs(g[-1]), 1.0)):
            raise MeasureError("grid must be uniform")
        if steps[0] <= 0:
            raise MeasureError("grid spacing must be positive")
        if not np.all(np.isfinite(v)):
            raise MeasureError("density values must be finite")
        if np.any(v < -1e-14):
            raise MeasureError("density values must be nonnegative")
        mass = np.trapezoid(v, g)
        if abs(mass - 1.0) > 1e-8:
            raise MeasureError(f"trapezoid mass {mass!r} differs from 1 beyond 1e-8")

    @classmethod
    def from_values(cls, grid, values, normalize: bool = False) -> "GriddedDensity":
        g = np.asarray(grid, dtype=float)
        v = np.clip(np.asarray(values, dtype=float), 0.0, None)
        if normalize:
            mass = np.trapezoid(v, g)
            if mass <= 0:
                raise MeasureError("cannot normalize zero-mass density")
            v = v / mass
        return cls(_frozen(g), _frozen(v))

    @property
    def h(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def cdf_values(self) -> np.ndarray:
        """Trapezoid cumulative distribution at the grid nodes, F[0] = 0."""
        inc = 0.5 * (self.values[1:] + self.values[:-1]) * np.diff(self.grid)
        return np.concatenate([[0.0], np.cumsum(inc)])

    def moment(self, k: int) -> float:
        return float(np.trapezoid(self.values * self.grid**k, self.grid))

    def total_mass(self) -> float:
        return float(np.trapezoid(self.values, self.grid))

    def second_moment(self) -> float:
        return self.moment(2)


Measure = Union[AtomicMeasure, GriddedDensity, "SymmetricMeasure"]


def _check_reflection(m: Union[AtomicMeasure, GriddedDensity], tol: float = 1e-10) -> None:
    if isinstance(m, AtomicMeasure):
        a, w = m.atoms, m.weights
        span = max(a[-1] - a[0], 1.0)
        # every atom must have a mirror partner of equal weight
        for ai, wi in zip(a, w):
            j = np.searchsorted(a, -ai)
            cand = []
            for jj in (j - 1, j, j + 1):
                if 0 <= jj < a.size:
                    cand.append(jj)
            ok = any(abs(a[jj] + ai) <= tol * span and abs(w[jj] - wi) <= tol for jj in cand)
            if not ok:
                raise MeasureError(f"atom {ai} has no mirror partner within {tol}")
    else:
        g, v = m.grid, m.values
        if abs(g[0] + g[-1]) > tol * max(abs(g[0]), 1.0):
            raise MeasureError("grid not centered at 0")
        if np.max(np.abs(v - v[::-1])) > tol * max(v.max(), 1.0):
            raise MeasureError("density not reflection symmetric")


@dataclass(frozen=True)
class SymmetricMeasure:
    """A measure certified invariant under x -> -x."""

    underlying: Union[AtomicMeasure, GriddedDensity]

    def __post_init__(self):
        _check_reflection(self.underlying)

    @property
    def is_atomic(self) -> bool:
        return isinstance(self.underlying, AtomicMeasure)

    def moment(self, k: int) -> float:
        return self.underlying.moment(k)

    def second_moment(self) -> float:
        return self.underlying.moment(2)

    def total_mass(self) -> float:
        return self.underlying.total_mass()


def _plain(m: Measure) -> Union[AtomicMeasure, GriddedDensity]:
    return m.underlying if isinstance(m, SymmetricMeasure) else m


# ---------------------------------------------------------------------------
# construction helpers


def symmetrize(positives) -> SymmetricMeasure:
    """(1/2n) sum over (delta_s + delta_{-s}); a point at 0 folds onto itself."""
    s = np.asarray(positives, dtype=float).ravel()
    if s.size == 0:
        raise MeasureError("empty configuration")
    if not np.all(np.isfinite(s)):
        raise MeasureError("non-finite input")
    pts = np.concatenate([s, -s])
    w = np.full(pts.size, 1.0 / pts.size)
    return SymmetricMeasure(AtomicMeasure.from_points(pts, w))


def atomic_from_gridded(rho: GriddedDensity, n: int) -> AtomicMeasure:
    """n equal-weight atoms at the (i-1/2)/n quantiles of rho."""
    return AtomicMeasure.from_points(quantiles(rho, n))


def gridded_from_atomic(m: AtomicMeasure, num: int = 2001, pad: float = 4.0) -> GriddedDensity:
    """Gaussian kernel smoothing, bandwidth 1.06 sigma n^(-1/5)."""
    mu = m.moment(1)
    sd = max(np.sqrt(max(m.moment(2) - mu * mu, 0.0)), 1e-12)
    bw = 1.06 * sd * m.n ** (-0.2)
    lo = m.atoms[0] - pad * bw
    hi = m.atoms[-1] + pad * bw
    g = np.linspace(lo, hi, num)
    v = np.zeros(num)
    for a, w in zip(m.atoms, m.weights):
        v += w * np.exp(-0.5 * ((g - a) / bw) ** 2) / (bw * np.sqrt(2 * np.pi))
    return GriddedDensity.from_values(g, v, normalize=True)


def semicircle_density(radius: float, num: int = 2001, span: float | None = None) -> GriddedDensity:
    """Semicircle law of the given radius on a symmetric grid."""
    span = radius if span is None else span
    g = np.linspace(-span, span, num)
    v = np.where(np.abs(g) < radius, 2.0 / (np.pi * radius**2) * np.sqrt(np.clip(radius**2 - g**2, 0, None)), 0.0)
    return GriddedDensity.from_values(g, v, normalize=True)


# ---------------------------------------------------------------------------
# quantiles and Wasserstein


def quantiles(rho: GriddedDensity, n: int) -> np.ndarray:
    """gamma_i with integral_{-inf}^{gamma_i} rho = (i - 1/2)/n, i = 1..n."""
    if isinstance(rho, SymmetricMeasure):
        rho = _plain(rho)
    if not isinstance(rho, GriddedDensity):
        raise MeasureError("quantiles expects a gridded density")
    if n < 1:
        raise MeasureError("n must be >= 1")
    cdf = rho.cdf_values()
    total = cdf[-1]
    if (n - 0.5) / n > total + 1e-12:
        raise MeasureError("mass deficit: CDF does not reach the requested level on the grid")
    levels = (np.arange(1, n + 1) - 0.5) / n
    # strictly increasing envelope for interpolation
    eps = 1e-15 * np.arange(cdf.size)
    return np.interp(levels, cdf + eps, rho.grid)


def _quantile_fn_atomic(m: AtomicMeasure):
    cw = np.concatenate([[0.0], np.cumsum(m.weights)])

    def q(u):
        idx = np.searchsorted(cw, u, side="left")
        idx = np.clip(idx - 1, 0, m.n - 1)
        # u in (cw[i], cw[i+1]] maps to atom i
        idx = np.where(u > cw[idx + 1], idx + 1, idx)
        return m.atoms[np.clip(idx, 0, m.n - 1)]

    return q


def _quantile_fn_gridded(m: GriddedDensity):
    cdf = m.cdf_values()
    total = cdf[-1]
    eps = 1e-15 * np.arange(cdf.size)
    cdfm = cdf + eps

    def q(u):
        return np.interp(np.clip(u * total, 0.0, total), cdfm, m.grid)

    return q


def wasserstein2(a: Measure, b: Measure, resolution: int = 4096) -> float:
    """L2 distance of quantile functions on the unit interval.

    Atomic/atomic pairs are evaluated exactly by merging the cumulative
    weight breakpoints; anything involving a gridded density uses a
    midpoint u-grid of the given resolution.
    """
    pa, pb = _plain(a), _plain(b)
    for m in (pa, pb):
        if abs(m.total_mass() - 1.0) > 1e-8:
            raise MeasureError("measure not normalized")
    if isinstance(pa, AtomicMeasure) and isinstance(pb, AtomicMeasure):
        ca = np.concatenate([[0.0], np.cumsum(pa.weights)])
        cb = np.concatenate([[0.0], np.cumsum(pb.weights)])
        cuts = np.unique(np.concatenate([ca, cb]))
        cuts[0], cuts[-1] = 0.0, min(cuts[-1], 1.0)
        mids = 0.5 * (cuts[1:] + cuts[:-1])
        widths = np.diff(cuts)
        qa = _quantile_fn_atomic(pa)(mids)
        qb = _quantile_fn_atomic(pb)(mids)
        return float(np.sqrt(np.sum(widths * (qa - qb) ** 2)))
    u = (np.arange(resolution) + 0.5) / resolution
    qa = (_quantile_fn_atomic(pa) if isinstance(pa, AtomicMeasure) else _quantile_fn_gridded(pa))(u)
    qb = (_quantile_fn_atomic(pb) if isinstance(pb, AtomicMeasure) else _quantile_fn_gridded(pb))(u)
    return float(np.sqrt(np.mean((qa - qb) ** 2)))


# ---------------------------------------------------------------------------
# Hilbert transforms


def hilbert_density(rho: GriddedDensity, x: float, window_cells: int = 8) -> float:
    """Principal value of integral rho(y)/(x - y) dy.

    A symmetric window around x is evaluated in the regularized form
    (rho(y) - rho(x))/(x - y); outside the window the integrand is smooth
    and handled by plain trapezoid.  If the window is clipped by the grid
    edge, the explicit PV of the constant term over the clipped window is
    added back.
    """
    rho = _plain(rho) if isinstance(rho, SymmetricMeasure) else rho
    g, v, h = rho.grid, rho.values, rho.h
    lo, hi = g[0], g[-1]
    span = hi - lo
    if not (lo - span <= x <= hi + span):
        raise MeasureError("evaluation point too far outside the grid")
    if x <= lo or x >= hi:
        # no singularity inside the support
        return float(np.trapezoid(v / (x - g), g))
    w = window_cells * h
    a = max(x - w, lo)
    b = min(x + w, hi)
    rx = float(np.interp(x, g, v))
    # window integral of (rho(y) - rho(x)) / (x - y) dy on a fine local grid
    nloc = 8 * window_cells + 1
    yl = np.linspace(a, b, nloc)
    vl = np.interp(yl, g, v)
    num = vl - rx
    den = x - yl
    frac = np.empty_like(num)
    small = np.abs(den) < 1e-12 * max(span, 1.0)
    # limit of the regularized integrand at y = x is -rho'(x)
    drx = float(np.interp(x, 0.5 * (g[1:] + g[:-1]), np.diff(v) / h))
    frac[~small] = num[~small] / den[~small]
    frac[small] = -drx
    win = float(np.trapezoid(frac, yl))
    # PV of the constant rho(x)/(x - y) over [a, b]: log((x - a)/(b - x))
    win += rx * float(np.log((x - a) / (b - x))) if (b > x > a) else 0.0
    # tails
    tail = 0.0
    if a > lo:
        mask = g <= a
        yl_t = g[mask]
        tail += float(np.trapezoid(v[mask] / (x - yl_t), yl_t))
    if b < hi:
        mask = g >= b
        yr = g[mask]
        tail += float(np.trapezoid(v[mask] / (x - yr), yr))
    return win + tail


def hilbert_grid(rho: GriddedDensity) -> np.ndarray:
    """H(rho) at every grid node at once.

    Uses the full-range regularized form: PV over the support equals the
    integral of (rho(y) - rho(x))/(x - y) plus rho(x) log((x - lo)/(hi - x)),
    evaluated by trapezoid with the diagonal limit -rho'(x).  Edge nodes
    clamp the log argument to half a cell.
    """
    rho = _plain(rho) if isinstance(rho, SymmetricMeasure) else rho
    g, v, h = rho.grid, rho.values, rho.h
    w = np.full(g.size, h)
    w[0] = w[-1] = h / 2
    diff = g[:, None] - g[None, :]
    num = v[None, :] - v[:, None]
    K = np.zeros_like(diff)
    off = np.abs(diff) > 1e-300
    K[off] = num[off] / diff[off]
    dv = np.gradient(v, h)
    K[np.diag_indices_from(K)] = -dv
    H = K @ w
    lo, hi = g[0], g[-1]
    left = np.clip(g - lo, h / 2, None)
    right = np.clip(hi - g, h / 2, None)
    return H + v * np.log(left / right)


def hilbert_discrete(points, i: int) -> float:
    """(1/n) sum over j != i of 1/(gamma_i - gamma_j)."""
    p = np.asarray(points, dtype=float).ravel()
    if np.any(np.diff(p) <= 0):
        raise MeasureError("coincident particles")
    diff = p[i] - p
    diff[i] = np.inf
    return float(np.sum(1.0 / diff) / p.size)


# ---------------------------------------------------------------------------
# logarithmic functionals


def log_energy(m: Measure) -> float:
    """Double integral of log|x - y|; atomic input excludes the diagonal.

    Duplicate atoms (zero gap after merging) yield -inf.
    """
    pm = _plain(m)
    if isinstance(pm, AtomicMeasure):
        a, w = pm.atoms, pm.weights
        diff = np.abs(a[:, None] - a[None, :])
        np.fill_diagonal(diff, 1.0)
        if np.any(diff == 0.0):
            return NEG_INF
        ld = np.log(diff)
        np.fill_diagonal(ld, 0.0)
        return float(w @ ld @ w)
    g, v, h = pm.grid, pm.values, pm.h
    w = np.empty_like(v)
    w[:] = h
    w[0] = w[-1] = h / 2
    diff = np.abs(g[:, None] - g[None, :])
    K = np.zeros_like(diff)
    off = diff > 0
    K[off] = np.log(diff[off])
    # exact cell self-interaction of a locally constant density:
    # (1/h^2) double integral over a cell pair sharing the diagonal = log h - 3/2
    np.fill_diagonal(K, np.log(h) - 1.5)
    return float((w * v) @ K @ (w * v))


def log_moment(m: Measure) -> float:
    """Integral of log|x| against the measure; an atom at 0 gives -inf."""
    pm = _plain(m)
    if isinstance(pm, AtomicMeasure):
        if np.any(pm.atoms == 0.0):
            return NEG_INF
        return float(np.sum(pm.weights * np.log(np.abs(pm.atoms))))
    g, v, h = pm.grid, pm.values, pm.h
    k = int(np.argmin(np.abs(g)))
    vals = np.zeros_like(g)
    nz = np.abs(g) > 1e-12 * h
    vals[nz] = np.log(np.abs(g[nz]))
    out = float(np.trapezoid(v * vals, g))
    if not nz[k] and 0 < k < g.size - 1:
        # grid node at 0: replace the trapezoid value over the two adjacent
        # cells by the exact integral of rho(0) log|x| there
        trap = 0.5 * h * (v[k - 1] + v[k + 1]) * np.log(h)
        exact = 2.0 * v[k] * (h * np.log(h) - h)
        out += exact - trap
    return out

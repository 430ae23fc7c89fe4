"""Interacting-particle steppers: Dyson Brownian motion (plain and drifted),
the Dyson Bessel process, and the matrix ground-truth sampler.

Positions are stored sorted increasing; the classical decreasing indexing
s_1 >= s_2 >= ... is the reverse of ours.  All steppers take a vector of
standard normal draws for the step and scale it internally by
sqrt(dt / (beta n)), so a stored noise record reproduces a trajectory
exactly and coupled runs share noise by sharing the record.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rng as _rng
from .measures import MeasureError

__all__ = [
    "EnsembleParams",
    "ParticleState",
    "Trajectory",
    "SdeError",
    "CollisionError",
    "step_dbm",
    "step_dbm_drifted",
    "step_bessel",
    "simulate_dbm",
    "simulate_bessel",
    "matrix_oracle",
    "matrix_oracle_batch",
    "quantile_coupling",
    "dbm_drift",
    "bessel_drift",
]

MAX_SUBSTEP_SPLITS = 20  # retry ladder halts at dt / 2^20


class SdeError(RuntimeError):
    pass


class CollisionError(SdeError):
    pass


@dataclass(frozen=True)
class EnsembleParams:
    """Ensemble size (n, m) and inverse temperature beta.

    The origin-repulsion coefficient alpha_n = (m-n)/n + (1 - 1/beta)/n must
    satisfy alpha_n >= 1/(beta n) or vanish exactly; in the window
    0 < alpha_n < 1/(beta n) the particles may collapse at 0 and the
    boundary behavior is unspecified, so such parameters are rejected.
    """

    n: int
    m: int
    beta: float

    def __post_init__(self):
        if self.n < 1:
            raise MeasureError("n must be >= 1")
        if self.m < self.n:
            raise MeasureError("m must be >= n")
        if self.beta < 1:
            raise MeasureError("beta must be >= 1")
        a = self.alpha_n
        if a != 0.0 and a < 1.0 / (self.beta * self.n) - 1e-15:
            raise MeasureError(
                "0 < alpha_n < 1/(beta n): boundary behavior at the origin is unspecified"
            )

    @property
    def alpha_n(self) -> float:
        return (self.m - self.n) / self.n + (1.0 - 1.0 / self.beta) / self.n

    @property
    def alpha(self) -> float:
        return (self.m - self.n) / self.n


@dataclass(frozen=True)
class ParticleState:
    """Sorted particle positions at one time (increasing order)."""

    positions: np.ndarray
    time: float

    def __post_init__(self):
        if np.any(np.diff(self.positions) <= 0):
            raise SdeError("positions must be strictly increasing")
        if self.time < 0:
            raise SdeError("time must be nonnegative")

    @property
    def n(self) -> int:
        return self.positions.size


@dataclass(frozen=True)
class Trajectory:
    """Recorded states plus the per-step noise record for exact reweighting.

    The noise record covers every executed step (shape steps x n) even when
    states are recorded more sparsely.
    """

    params: EnsembleParams
    seed: int
    dt: float
    times: np.ndarray
    states: np.ndarray  # (len(times), n)
    noises: np.ndarray  # (steps, n)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise SdeError("times must be strictly increasing")
        steps = int(round((self.times[-1] - self.times[0]) / self.dt))
        if self.noises.shape != (steps, self.params.n):
            raise SdeError("noise record must have shape (steps, n)")
        if self.states.shape != (self.times.size, self.params.n):
            raise SdeError("states must have shape (len(times), n)")

    def state(self, i: int) -> ParticleState:
        return ParticleState(self.states[i], float(self.times[i]))


# ---------------------------------------------------------------------------
# drifts


def dbm_drift(x: np.ndarray) -> np.ndarray:
    """(1/2n) sum_{j != i} 1/(x_i - x_j), vectorized over leading axes."""
    n = x.shape[-1]
    diff = x[..., :, None] - x[..., None, :]
    np.einsum("...ii->...i", diff)[...] = np.inf
    return np.sum(1.0 / diff, axis=-1) / (2.0 * n)


def bessel_drift(s: np.ndarray, alpha_n: float) -> np.ndarray:
    """DBM repulsion + mirror repulsion + alpha_n/(2 s) origin term."""
    n = s.shape[-1]
    diff = s[..., :, None] - s[..., None, :]
    np.einsum("...ii->...i", diff)[...] = np.inf
    summ = s[..., :, None] + s[..., None, :]
    np.einsum("...ii->...i", summ)[...] = np.inf
    out = (np.sum(1.0 / diff, axis=-1) + np.sum(1.0 / summ, axis=-1)) / (2.0 * n)
    if alpha_n != 0.0:
        out = out + alpha_n / (2.0 * s)
    return out


# ---------------------------------------------------------------------------
# steppers with the substep retry ladder


def _advance(
    x: np.ndarray,
    dt: float,
    dw: np.ndarray,
    drift_fn: Callable[[np.ndarray], np.ndarray],
    ok_fn: Callable[[np.ndarray, float], bool],
    reflect: bool = False,
) -> np.ndarray:
    """One Euler-Maruyama step; when the ordering or the explicit-Euler
    stability criterion fails, the step is retried with 2, 4, ... substeps
    (noise split by linear interpolation of the Brownian increment) down to
    dt / 2^20."""
    if not np.all(np.isfinite(x)):
        raise SdeError("non-finite state")
    for split in range(MAX_SUBSTEP_SPLITS + 1):
        k = 1 << split
        dts = dt / k
        if not ok_fn(x, dts):
            continue
        y = x.copy()
        good = True
        for _ in range(k):
            y = y + drift_fn(y) * dts + dw / k
            if reflect:
                y = np.abs(y)
                y.sort(axis=-1)
            if not ok_fn(y, dts):
                good = False
                break
        if good:
            if not np.all(np.isfinite(y)):
                raise SdeError("non-finite state after step")
            return y
    raise CollisionError(f"collision: ordering violated even at dt/2^{MAX_SUBSTEP_SPLITS}")


def _gap_stable(y: np.ndarray, dts: float, stab: float = 4.0) -> bool:
    """Stability of the singular pair drift: the per-substep kick
    dts/(2n gap) stays below stab/2 gaps iff dts <= stab * n * gap^2."""
    gaps = np.diff(y, axis=-1)
    if not np.all(gaps > 0):
        return False
    n = y.shape[-1]
    if n == 1:
        return True
    gmin = float(np.min(gaps))
    return dts <= stab * n * gmin * gmin


def step_dbm(state: ParticleState, params: EnsembleParams, dt: float, noise: np.ndarray) -> ParticleState:
    """Explicit Euler step of dx_i = dW_i/sqrt(beta n) + (1/2n) sum 1/(x_i-x_j) dt."""
    dw = np.asarray(noise, float) * np.sqrt(dt / (params.beta * params.n))
    y = _advance(state.positions, dt, dw, dbm_drift, _gap_stable)
    return ParticleState(np.sort(y), state.time + dt)


def step_dbm_drifted(
    state: ParticleState,
    params: EnsembleParams,
    dt: float,
    noise: np.ndarray,
    drift: Callable[[np.ndarray, float], np.ndarray],
) -> ParticleState:
    """As step_dbm with an added smooth drift term drift(x, t) dt."""
    dw = np.asarray(noise, float) * np.sqrt(dt / (params.beta * params.n))
    t0 = state.time

    def total(y):
        return dbm_drift(y) + drift(y, t0)

    y = _advance(state.positions, dt, dw, total, _gap_stable)
    return ParticleState(np.sort(y), state.time + dt)


def step_bessel(state: ParticleState, params: EnsembleParams, dt: float, noise: np.ndarray) -> ParticleState:
    """Euler step of the Dyson Bessel system.

    For alpha_n > 0 positivity is enforced through the retry ladder; for
    alpha_n = 0 the lowest particle may cross the origin and is reflected.
    """
    a = params.alpha_n
    dw = np.asarray(noise, float) * np.sqrt(dt / (params.beta * params.n))
    if a == 0.0:
        ok = _gap_stable
        reflect = True
    else:
        if np.any(state.positions <= 0):
            raise SdeError("bessel step requires positive positions when alpha_n > 0")

        def ok(y, dts):
            # origin kick a dts/(2s) must stay below s as well
            return bool(np.all(y > 0)) and _gap_stable(y, dts) and dts <= 2.0 * float(np.min(y)) ** 2 / a

        reflect = False
    y = _advance(state.positions, dt, dw, lambda s: bessel_drift(s, a), ok, reflect=reflect)
    return ParticleState(np.sort(y), state.time + dt)


# ---------------------------------------------------------------------------
# trajectory drivers


def _simulate(
    stepper: Callable[[ParticleState, np.ndarray], ParticleState],
    x0: np.ndarray,
    params: EnsembleParams,
    dt: float,
    t_end: float,
    seed: int,
    record_every: int,
    stream: int,
) -> Trajectory:
    steps = int(round(t_end / dt))
    gen = _rng.generator(seed, stream)
    state = ParticleState(np.sort(np.asarray(x0, float)), 0.0)
    times = [0.0]
    states = [state.positions.copy()]
    noises = []
    for k in range(steps):
        noise = gen.standard_normal(params.n)
        state = stepper(state, noise)
        noises.append(noise)
        if (k + 1) % record_every == 0 or k == steps - 1:
            times.append(state.time)
            states.append(state.positions.copy())
    return Trajectory(
        params=params,
        seed=seed,
        dt=dt,
        times=np.array(times),
        states=np.array(states),
        noises=np.array(noises),
    )


def simulate_dbm(
    x0,
    params: EnsembleParams,
    dt: float,
    t_end: float,
    seed: int,
    record_every: int = 1,
    drift: Optional[Callable[[np.ndarray, float], np.ndarray]] = None,
) -> Trajectory:
    if drift is None:
        return _simulate(lambda s, w: step_dbm(s, params, dt, w), x0, params, dt, t_end, seed, record_every, 0)
    return _simulate(
        lambda s, w: step_dbm_drifted(s, params, dt, w, drift), x0, params, dt, t_end, seed, record_every, 0
    )


def simulate_bessel(
    x0,
    params: EnsembleParams,
    dt: float,
    t_end: float,
    seed: int,
    record_every: int = 1,
) -> Trajectory:
    return _simulate(lambda s, w: step_bessel(s, params, dt, w), x0, params, dt, t_end, seed, record_every, 1)


# ---------------------------------------------------------------------------
# matrix oracle


def _gaussian_matrix(gen: np.random.Generator, n: int, m: int, beta: float) -> np.ndarray:
    if beta == 1:
        return gen.standard_normal((n, m))
    if beta == 2:
        return (gen.standard_normal((n, m)) + 1j * gen.standard_normal((n, m))) / np.sqrt(2.0)
    raise MeasureError("no matrix model for beta outside {1, 2}")


def matrix_oracle(a_singulars, params: EnsembleParams, t: float, seed: int) -> np.ndarray:
    """Singular values (sorted increasing) of A + G(t)/sqrt(n), the exact
    time-t sample of the Bessel flow started from the singulars of A."""
    return matrix_oracle_batch(a_singulars, params, t, seed, replicas=1)[0]


def matrix_oracle_batch(a_singulars, params: EnsembleParams, t: float, seed: int, replicas: int) -> np.ndarray:
    a = np.asarray(a_singulars, float)
    if a.size != params.n:
        raise MeasureError("a_singulars must have length n")
    if t < 0:
        raise MeasureError("t must be nonnegative")
    n, m = params.n, params.m
    out = np.empty((replicas, n))
    if t == 0:
        out[:] = np.sort(a)
        return out
    for r in range(replicas):
        gen = _rng.generator(seed, 2, r)
        G = _gaussian_matrix(gen, n, m, params.beta)
        H = np.zeros((n, m), dtype=G.dtype)
        H[np.arange(n), np.arange(n)] = a
        H += np.sqrt(t / n) * G
        sv = np.linalg.svd(H, compute_uv=False)
        out[r] = np.sort(sv)
    return out


# ---------------------------------------------------------------------------
# quantile coupling


def quantile_coupling(traj: Trajectory, path) -> float:
    """sup over recorded times and particles of |x_i(t) - gamma_i(t)| where
    gamma are the (1/n)-quantiles of the path density at that time."""
    from .measures import quantiles

    sup = 0.0
    n = traj.params.n
    for i, t in enumerate(traj.times):
        j = int(np.argmin(np.abs(path.times - t)))
        if abs(path.times[j] - t) > 1e-9 + 1e-6 * max(t, 1.0):
            raise MeasureError(f"time grids misaligned at t = {t}")
        gam = quantiles(path.slice_density(j), n)
        sup = max(sup, float(np.max(np.abs(traj.states[i] - gam))))
    return sup

"""Girsanov reweighting turning Dyson-Brownian paths into Dyson-Bessel ones.

The exponential martingale is built from
    theta(s) = (beta/2)(sum_{i<j} log(s_i + s_j) + alpha_n n sum_k log s_k),
and the weight exponent along a path stopped when the lowest particle
reaches the threshold a is

    theta|_0^{t ^ tau}  -  (beta n/2) int sum_i alpha_n^2/(4 x_i^2)
    - (beta/2 - 1) int (1/4n) sum_{k != l} 1/(x_k + x_l)^2
    + int (alpha_n/4) sum_k 1/x_k^2.

Integrals are accumulated by the trapezoid rule over the stored path; a
path freezes at the first recorded state at or below the threshold.

The repulsion coefficient alpha_n enters only through the reweighting (the
underlying paths follow plain DBM), so it is a free parameter here and need
not come from integer matrix dimensions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .measures import MeasureError
from .sde import Trajectory

__all__ = ["GirsanovLedger", "girsanov_weight", "theta", "GirsanovAccumulator"]


def _check_alpha(n: int, beta: float, alpha_n: float) -> None:
    if alpha_n != 0.0 and alpha_n < 1.0 / (beta * n) - 1e-15:
        raise MeasureError("0 < alpha_n < 1/(beta n): boundary behavior unspecified")


def theta(s: np.ndarray, beta: float, alpha_n: float) -> np.ndarray:
    """theta(s_1, ..., s_n); vectorized over leading axes."""
    s = np.asarray(s, float)
    n = s.shape[-1]
    if n > 1:
        summ = s[..., :, None] + s[..., None, :]
        iu = np.triu_indices(n, k=1)
        pair = np.sum(np.log(summ[..., iu[0], iu[1]]), axis=-1)
    else:
        pair = np.zeros(s.shape[:-1])
    single = alpha_n * n * np.sum(np.log(s), axis=-1)
    return beta / 2.0 * (pair + single)


def _integrands(x: np.ndarray, beta: float, alpha_n: float) -> tuple[np.ndarray, np.ndarray]:
    """Correction integrand and the quadratic-variation density."""
    n = x.shape[-1]
    inv2 = np.sum(1.0 / x**2, axis=-1)
    summ = x[..., :, None] + x[..., None, :]
    np.einsum("...ii->...i", summ)[...] = np.inf
    pair2 = np.sum(1.0 / summ**2, axis=(-2, -1))
    corr = (
        -beta * n / 2.0 * alpha_n**2 / 4.0 * inv2
        - (beta / 2.0 - 1.0) * pair2 / (4.0 * n)
        + alpha_n / 4.0 * inv2
    )
    pair_row = np.sum(1.0 / summ, axis=-1)
    amp = np.sqrt(beta) / (2.0 * np.sqrt(n)) * pair_row + np.sqrt(beta * n) * alpha_n / (2.0 * x)
    qvar = np.sum(amp**2, axis=-1)
    return corr, qvar


@dataclass(frozen=True)
class GirsanovLedger:
    theta_start: float
    theta_end: float
    correction_terms: float
    quad_variation: float
    stop_threshold_a: float
    stopped_at: Optional[float]

    @property
    def exponent(self) -> float:
        return self.theta_end - self.theta_start + self.correction_terms

    @property
    def weight(self) -> float:
        return float(np.exp(self.exponent))


class GirsanovAccumulator:
    """Trapezoid accumulator shared by the single-trajectory evaluator and
    the batched Monte Carlo runner."""

    def __init__(self, beta: float, alpha_n: float, stop_a: float, x0: np.ndarray):
        if stop_a <= 0:
            raise ValueError("stop threshold must be positive")
        x0 = np.atleast_2d(np.asarray(x0, float))
        _check_alpha(x0.shape[-1], beta, alpha_n)
        self.beta = beta
        self.alpha_n = alpha_n
        self.stop_a = stop_a
        self.active = np.min(x0, axis=-1) > stop_a
        self.theta0 = theta(x0, beta, alpha_n)
        self.theta_cur = self.theta0.copy()
        self.corr = np.zeros(x0.shape[0])
        self.qvar = np.zeros(x0.shape[0])
        self.stopped_at = np.full(x0.shape[0], np.nan)
        self.stopped_at[~self.active] = 0.0
        self._c_prev, self._q_prev = _integrands(x0, beta, alpha_n)

    def update(self, x_next: np.ndarray, dt: float, t_next: float) -> None:
        x_next = np.atleast_2d(np.asarray(x_next, float))
        act = self.active
        c, q = _integrands(x_next, self.beta, self.alpha_n)
        if act.any():
            self.corr[act] += 0.5 * dt * (self._c_prev[act] + c[act])
            self.qvar[act] += 0.5 * dt * (self._q_prev[act] + q[act])
            self.theta_cur[act] = theta(x_next[act], self.beta, self.alpha_n)
            hit = act & (np.min(x_next, axis=-1) <= self.stop_a)
            self.stopped_at[hit] = t_next
            self.active = act & ~hit
        self._c_prev, self._q_prev = c, q

    def exponents(self) -> np.ndarray:
        return self.theta_cur - self.theta0 + self.corr


def girsanov_weight(
    traj: Trajectory, stop_a: float, alpha_n: Optional[float] = None
) -> GirsanovLedger:
    """Evaluate the stopped change-of-measure exponent along a stored
    Dyson-Brownian trajectory (law Q).

    alpha_n defaults to the trajectory's ensemble value but can be set
    freely (the paths themselves do not depend on it).
    """
    a_n = traj.params.alpha_n if alpha_n is None else alpha_n
    acc = GirsanovAccumulator(traj.params.beta, a_n, stop_a, traj.states[0][None, :])
    for i in range(1, traj.times.size):
        dt = float(traj.times[i] - traj.times[i - 1])
        acc.update(traj.states[i][None, :], dt, float(traj.times[i]))
    stopped = None if np.isnan(acc.stopped_at[0]) else float(acc.stopped_at[0])
    return GirsanovLedger(
        theta_start=float(acc.theta0[0]),
        theta_end=float(acc.theta_cur[0]),
        correction_terms=float(acc.corr[0]),
        quad_variation=float(acc.qvar[0]),
        stop_threshold_a=stop_a,
        stopped_at=stopped,
    )

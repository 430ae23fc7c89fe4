"""Steppers, matrix oracle, coupling, and trajectory invariants."""
import numpy as np
import pytest

from dysonlab.freeconv import SqrtMPLaw
from dysonlab.measures import MeasureError, symmetrize, wasserstein2
from dysonlab.paths import sqrt_mp_bridge
from dysonlab.sde import (
    CollisionError,
    EnsembleParams,
    ParticleState,
    bessel_drift,
    matrix_oracle,
    matrix_oracle_batch,
    quantile_coupling,
    simulate_bessel,
    simulate_dbm,
    step_bessel,
    step_dbm,
    step_dbm_drifted,
)


class TestParams:
    def test_alpha_n_formula(self):
        p = EnsembleParams(n=4, m=6, beta=2.0)
        assert p.alpha_n == pytest.approx((6 - 4) / 4 + 0.5 / 4)

    def test_beta_one_square_is_zero(self):
        assert EnsembleParams(n=5, m=5, beta=1.0).alpha_n == 0.0

    def test_forbidden_window_rejected(self):
        # n=m, beta=1.5: alpha_n = (1 - 1/1.5)/n in (0, 1/(beta n))
        with pytest.raises(MeasureError, match="alpha_n"):
            EnsembleParams(n=5, m=5, beta=1.5)

    def test_basic_validation(self):
        with pytest.raises(MeasureError):
            EnsembleParams(n=3, m=2, beta=2.0)
        with pytest.raises(MeasureError):
            EnsembleParams(n=3, m=3, beta=0.5)


class TestStepDBM:
    def test_single_particle_pure_diffusion(self):
        p = EnsembleParams(n=1, m=1, beta=2.0)
        s = ParticleState(np.array([0.3]), 0.0)
        noise = np.array([1.7])
        out = step_dbm(s, p, dt=0.01, noise=noise)
        assert out.positions[0] == pytest.approx(0.3 + 1.7 * np.sqrt(0.01 / 2.0))

    def test_two_particle_drift(self):
        p = EnsembleParams(n=2, m=2, beta=2.0)
        s = ParticleState(np.array([-1.0, 1.0]), 0.0)
        dt = 1e-3
        out = step_dbm(s, p, dt=dt, noise=np.zeros(2))
        assert out.positions == pytest.approx([-(1 + dt / 8), 1 + dt / 8])

    def test_drifted_reduces_to_plain(self):
        p = EnsembleParams(n=3, m=3, beta=2.0)
        s = ParticleState(np.array([-1.0, 0.1, 2.0]), 0.0)
        noise = np.array([0.3, -0.2, 0.9])
        a = step_dbm(s, p, 1e-3, noise)
        b = step_dbm_drifted(s, p, 1e-3, noise, lambda x, t: np.zeros_like(x))
        assert np.array_equal(a.positions, b.positions)

    def test_ou_stationary_variance(self):
        # n=1 with drift -x: stationary variance 1/(2 beta); closed-form OU oracle
        beta = 2.0
        p = EnsembleParams(n=1, m=1, beta=beta)
        dt, t_end = 1e-3, 8.0
        traj = simulate_dbm(np.array([0.0]), p, dt, t_end, seed=5, record_every=10,
                            drift=lambda x, t: -x)
        samples = traj.states[traj.times > 4.0, 0]
        # oracle: var = (1/(2 beta))(1 - exp(-2t)) -> 1/(2 beta)
        est = np.mean(samples**2)
        se = np.std(samples**2) / np.sqrt(len(samples) / 50)  # crude ESS correction
        assert abs(est - 1 / (2 * beta)) < max(3 * se, 0.05)

    def test_constant_drift_moves_center_exactly(self):
        p = EnsembleParams(n=4, m=4, beta=2.0)
        c = 0.7
        x0 = np.array([-2.0, -0.5, 0.5, 2.0])
        s = ParticleState(x0, 0.0)
        dt = 1e-3
        out = step_dbm_drifted(s, p, dt, np.zeros(4), lambda x, t: np.full_like(x, c))
        # pairwise interaction preserves the center of mass
        assert out.positions.mean() == pytest.approx(x0.mean() + c * dt, abs=1e-14)

    def test_semicircle_at_time_one(self):
        # from a tightly clustered start the law at t=1 is the radius sqrt(2)
        # semicircle, beta-independent; prediction via the freeconv module
        from dysonlab.measures import quantiles, semicircle_density

        n = 200
        p = EnsembleParams(n=n, m=n, beta=2.0)
        t0 = 0.01  # quantiles of the short-time profile seed the run
        x0 = quantiles(semicircle_density(np.sqrt(2 * t0), num=2001), n)
        traj = simulate_dbm(x0, p, dt=1e-3, t_end=1.0 - t0, seed=11, record_every=1000)
        emp = symmetrize(np.abs(traj.states[-1]))
        # semicircle radius sqrt(2) = sqrtMP(sigma=sqrt(2)/2, lam=1)
        pred = SqrtMPLaw(np.sqrt(2) / 2, 1.0).gridded()
        assert wasserstein2(emp, pred) < 0.1

    def test_collision_error(self):
        p = EnsembleParams(n=2, m=2, beta=2.0)
        s = ParticleState(np.array([0.0, 1e-14]), 0.0)
        with pytest.raises(CollisionError):
            # enormous opposing noise forces a crossing at every split
            step_dbm(s, p, dt=1.0, noise=np.array([50.0, -50.0]))


class TestStepBessel:
    def test_single_particle_drift(self):
        p = EnsembleParams(n=1, m=3, beta=2.0)
        a = p.alpha_n
        s0 = 0.8
        out = step_bessel(ParticleState(np.array([s0]), 0.0), p, 1e-3, np.zeros(1))
        assert out.positions[0] == pytest.approx(s0 + a / (2 * s0) * 1e-3)

    def test_bessel_radial_moment_oracle(self):
        # n=1, beta=2, m=kappa+1: s(t) is the modulus of a 2(kappa+1)-dim
        # Brownian motion scaled by 1/sqrt(2n); E s(t)^2 = s0^2 + m t / n
        kappa = 2
        p = EnsembleParams(n=1, m=kappa + 1, beta=2.0)
        s0, t_end, dt = 0.7, 0.5, 1e-3
        vals = []
        for seed in range(400):
            traj = simulate_bessel(np.array([s0]), p, dt, t_end, seed=seed, record_every=10**9)
            vals.append(traj.states[-1, 0] ** 2)
        est = np.mean(vals)
        exact = s0**2 + p.m * t_end / p.n
        se = np.std(vals) / np.sqrt(len(vals))
        assert abs(est - exact) < 3.5 * se

    def test_ordering_preserved(self):
        p = EnsembleParams(n=20, m=30, beta=2.0)
        x0 = np.linspace(0.5, 3.0, 20)
        traj = simulate_bessel(x0, p, 1e-3, 0.2, seed=3, record_every=1)
        assert np.all(np.diff(traj.states, axis=1) > 0)

    def test_mirrored_noise_symmetry(self):
        # the symmetrized system with W_{-i} = -W_i keeps s_{-i} = -s_i:
        # equivalent statement: the positive half determines the mirror half,
        # so the Bessel drift of the mirrored configuration is odd
        s = np.array([0.3, 0.9, 1.7])
        d = bessel_drift(s, alpha_n=0.5)
        full = np.concatenate([-s[::-1], s])
        # symmetrized 2n-particle DBM drift with alpha_n - 1/(2n) origin term
        n = s.size
        diff = full[:, None] - full[None, :]
        np.fill_diagonal(diff, np.inf)
        dbm_part = np.sum(1.0 / diff, axis=1) / (2 * n)
        sym_drift = dbm_part + (0.5 - 1 / (2 * n)) / (2 * full)
        assert np.allclose(sym_drift[n:], d)
        assert np.allclose(sym_drift[:n], -d[::-1])

    def test_contraction_same_noise(self):
        # two trajectories driven by identical noise contract in mean square
        p = EnsembleParams(n=8, m=12, beta=2.0)
        x0a = np.linspace(0.5, 2.0, 8)
        x0b = x0a + np.linspace(0.01, 0.15, 8)
        ta = simulate_bessel(x0a, p, 1e-3, 0.3, seed=77, record_every=30)
        tb = simulate_bessel(x0b, p, 1e-3, 0.3, seed=77, record_every=30)
        d2 = np.mean((ta.states - tb.states) ** 2, axis=1)
        assert np.all(np.diff(d2) <= 1e-12)

    def test_reflection_at_alpha_zero(self):
        p = EnsembleParams(n=2, m=2, beta=1.0)
        assert p.alpha_n == 0.0
        s = ParticleState(np.array([0.01, 1.0]), 0.0)
        out = step_bessel(s, p, dt=1e-2, noise=np.array([-3.0, 0.0]))
        assert np.all(out.positions >= 0)


class TestMatrixOracle:
    def test_t_zero_identity(self):
        p = EnsembleParams(n=3, m=5, beta=2.0)
        a = np.array([0.2, 0.8, 1.5])
        assert np.array_equal(matrix_oracle(a, p, 0.0, seed=1), a)

    def test_square_case_is_mp(self):
        # A=0, n=m, beta=2, t=1: squared singulars follow MP on [0, 4]
        n = 400
        p = EnsembleParams(n=n, m=n, beta=2.0)
        sv = matrix_oracle(np.zeros(n), p, 1.0, seed=4)
        emp = symmetrize(sv)
        pred = SqrtMPLaw(1.0, 1.0).gridded()
        assert wasserstein2(emp, pred) < 0.05
        assert sv.max() ** 2 < 4.0 * 1.2

    def test_beta_one_supported(self):
        p = EnsembleParams(n=50, m=60, beta=1.0)
        sv = matrix_oracle(np.zeros(50), p, 1.0, seed=2)
        assert np.all(sv >= 0) and sv.size == 50

    def test_no_matrix_model(self):
        with pytest.raises(MeasureError, match="matrix model"):
            matrix_oracle(np.zeros(4), EnsembleParams(4, 6, 1.5), 1.0, seed=0)

    def test_sde_matches_oracle_small(self):
        # distributional match at moderate n between the SDE endpoint and the
        # exact sampler
        n, m = 60, 90
        p = EnsembleParams(n=n, m=m, beta=2.0)
        lam = n / m
        start = matrix_oracle(np.zeros(n), p, 1e-3, seed=21)
        traj = simulate_bessel(start, p, dt=2e-4, t_end=1.0, seed=22, record_every=10**9)
        w2s = []
        for r in range(8):
            oracle = matrix_oracle_batch(np.zeros(n), p, 1.0, seed=100, replicas=8)[r]
            w2s.append(wasserstein2(symmetrize(traj.states[-1]), symmetrize(oracle)))
        assert np.mean(w2s) < 0.1

    def test_brownian_bridge_identity(self):
        # H(t) given H(1) has the law (1-t) A + t H(1) + sqrt(t(1-t)) W/sqrt(n):
        # compare singular values of H(t) along a path against the bridge
        # construction, as distributions over replicas
        rng = np.random.default_rng(9)
        n, m, t = 40, 60, 0.4
        p = EnsembleParams(n=n, m=m, beta=2.0)
        a = np.linspace(0.5, 1.5, n)
        A = np.zeros((n, m), complex)
        A[np.arange(n), np.arange(n)] = a
        sv_path, sv_bridge = [], []
        for _ in range(60):
            G1 = (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) / np.sqrt(2)
            Gt = np.sqrt(t) * G1  # same Brownian path at time t... build jointly:
            W = (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) / np.sqrt(2)
            Gt = t * G1 + np.sqrt(t * (1 - t)) * W  # Brownian bridge decomposition
            H1 = A + G1 / np.sqrt(n)
            Ht = A + Gt / np.sqrt(n)
            sv_path.append(np.linalg.svd(Ht, compute_uv=False))
            W2 = (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) / np.sqrt(2)
            Hb = (1 - t) * A + t * H1 + np.sqrt(t * (1 - t)) * W2 / np.sqrt(n)
            sv_bridge.append(np.linalg.svd(Hb, compute_uv=False))
        d = wasserstein2(
            symmetrize(np.concatenate(sv_path)), symmetrize(np.concatenate(sv_bridge))
        )
        assert d < 0.03


class TestQuantileCoupling:
    def test_stationary_start_small_deviation(self):
        # drift -x/2 has the radius sqrt(2) semicircle as stationary profile
        n = 100
        p = EnsembleParams(n=n, m=n, beta=2.0)
        bridge = _stationary_semicircle_path(nt=11)
        from dysonlab.measures import quantiles

        x0 = quantiles(bridge.slice_density(0), n)
        traj = simulate_dbm(x0, p, dt=1e-3, t_end=0.5, seed=13, record_every=50,
                            drift=lambda x, t: -x / 2)
        dev = quantile_coupling(traj, bridge)
        assert dev < 0.35  # O(M/sqrt(n)) scale

    def test_misaligned_grids_error(self):
        p = EnsembleParams(n=4, m=4, beta=2.0)
        traj = simulate_dbm(np.array([-1.0, -0.3, 0.4, 1.2]), p, dt=0.01, t_end=0.35,
                            seed=1, record_every=10)
        bridge = _stationary_semicircle_path(nt=7, t_end=0.3)
        with pytest.raises(MeasureError, match="misaligned"):
            quantile_coupling(traj, bridge)


def _stationary_semicircle_path(nt=11, t_end=0.5):
    from dysonlab.measures import semicircle_density
    from dysonlab.ratefn import DensityPath

    rho = semicircle_density(np.sqrt(2), num=1201, span=np.sqrt(2) * 1.1)
    times = np.linspace(0.0, t_end, nt)
    vals = np.tile(rho.values, (nt, 1))
    return DensityPath(times=times, space=rho.grid, rho=vals, alpha=0.0, beta=2.0)

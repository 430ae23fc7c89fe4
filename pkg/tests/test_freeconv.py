"""Stieltjes transforms, MP laws, R-transform reversion, convolution solvers."""
from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import quad

from dysonlab.freeconv import (
    RectLaw,
    SqrtMPLaw,
    mp_and_sqrt_mp,
    mp_edges,
    mp_eigen_density,
    sqrt_mp_stieltjes,
    stieltjes,
)
from dysonlab.convolve import (
    conv_general,
    conv_general_g_fn,
    conv_stieltjes_with_mp,
    conv_with_mp,
    moments_via_contour,
    recst_fixed_point,
)
from dysonlab.measures import AtomicMeasure, MeasureError, SymmetricMeasure, symmetrize, wasserstein2
from dysonlab.rtransform import MomentLaw, RTransformOrderError, rect_r_transform


class TestStieltjes:
    def test_delta_zero(self):
        m = AtomicMeasure.from_points([0.0])
        z = 0.3 + 0.7j
        assert stieltjes(m, z) == pytest.approx(1.0 / z)

    def test_two_atoms_partial_fractions(self):
        a = 1.3
        m = symmetrize([a])
        z = 0.2 + 1.1j
        assert stieltjes(m, z) == pytest.approx(z / (z * z - a * a))

    def test_semicircle_quadratic_oracle(self):
        # semicircle radius 2 = sqrtMP(1, 1): G(z) = (z - sqrt(z^2 - 4))/2
        z = 2j
        expected = (z - np.sqrt(z * z - 4 + 0j)) / 2
        got = sqrt_mp_stieltjes(np.array([z]), 1.0, 1.0)[0]
        assert got == pytest.approx(expected)
        rho = SqrtMPLaw(1.0, 1.0).gridded(num=6001)
        assert stieltjes(rho, z) == pytest.approx(expected, abs=2e-4)

    def test_lower_halfplane_rejected(self):
        with pytest.raises(MeasureError):
            stieltjes(AtomicMeasure.from_points([0.0]), 1 - 1j)

    def test_sign_and_bound(self):
        m = symmetrize([0.5, 1.5])
        xs = np.linspace(-3, 3, 41)
        for eta in (0.1, 1.0):
            vals = stieltjes(m, xs + 1j * eta)
            assert np.all(np.imag(vals) < 0)
            assert np.all(np.abs(vals) <= 1 / eta + 1e-12)


class TestMPLaw:
    def test_support_edges(self):
        a, b = mp_edges(1.0, 1.0)
        assert (a, b) == (0.0, 4.0)

    def test_mass_one(self):
        for sigma, lam in [(1.0, 1.0), (0.5, 0.5), (2.0, 0.25), (1.0, 2 / 3)]:
            a, b = mp_edges(sigma, lam)
            mass = quad(lambda x: mp_eigen_density(np.array([x]), sigma, lam)[0], a, b, limit=200)[0]
            assert mass == pytest.approx(1.0, abs=1e-8)
            eig, sing = mp_and_sqrt_mp(sigma, lam)
            assert eig.total_mass() == pytest.approx(1.0, abs=1e-8)
            assert sing.total_mass() == pytest.approx(1.0, abs=1e-8)

    def test_eigen_second_moment_formula(self):
        # exact Narayana moments: m1 = sigma^2/lam, m2 = sigma^4 (1 + lam)/lam^2
        law = SqrtMPLaw(1.3, 0.6)
        s2, lam = 1.3**2, 0.6
        assert law.eigen_moment(1) == pytest.approx(s2 / lam)
        assert law.eigen_moment(2) == pytest.approx(s2**2 * (1 + lam) / lam**2)

    def test_gridded_matches_exact_moments(self):
        law = SqrtMPLaw(1.0, 2 / 3)
        g = law.gridded(num=8001)
        assert g.moment(2) == pytest.approx(law.moment(2), rel=1e-4)

    def test_sqrt_mp_lambda_one_is_semicircle(self):
        # symmetrized singular law of a square Gaussian = semicircle radius 2 sigma
        law = SqrtMPLaw(0.7, 1.0).gridded(num=4001)
        g = law.underlying
        r = 1.4
        expected = np.where(np.abs(g.grid) < r, 2 / (np.pi * r**2) * np.sqrt(np.clip(r**2 - g.grid**2, 0, None)), 0.0)
        assert np.max(np.abs(g.values - expected)) < 5e-3


class TestRTransform:
    def test_delta_zero_vanishes(self):
        m = SymmetricMeasure(AtomicMeasure.from_points([0.0]))
        series = rect_r_transform(m, lam=0.5, order=6)
        assert np.allclose(series.coefficients, 0.0)

    def test_sqrt_mp_linear(self):
        for sigma, lam in [(1.0, 1.0), (0.5, 0.5), (2.0, 0.25)]:
            series = rect_r_transform(SqrtMPLaw(sigma, lam), lam, order=6)
            expected = np.zeros(7)
            expected[1] = sigma**2 / lam
            assert np.max(np.abs(series.coefficients - expected)) < 1e-9

    def test_two_atoms_symbolic_reversion_oracle(self):
        # brute-force rational reversion at lambda = 1 for (delta_1 + delta_-1)/2
        lam = 1
        K = 5
        moments = [Fraction(1) for _ in range(K)]  # all even moments are 1

        def mul(a, b):
            out = [Fraction(0)] * (K + 1)
            for i, ai in enumerate(a):
                for j, bj in enumerate(b):
                    if i + j <= K:
                        out[i + j] += ai * bj
            return out

        phi = [Fraction(0)] + moments
        onep = phi.copy()
        onep[0] += 1
        sq = mul(onep, onep)
        w = [Fraction(0)] * (K + 1)
        for j in range(1, K + 1):
            w[j] = sq[j - 1]  # lambda = 1
        # invert w(v) by brute substitution
        b = [Fraction(0)] * (K + 1)
        b[1] = 1 / w[1]
        for k in range(2, K + 1):
            comp = [Fraction(0)] * (K + 1)
            power = [Fraction(0)] * (K + 1)
            power[0] = Fraction(1)
            for j in range(1, k + 1):
                power = mul(power, b)
                for idx in range(K + 1):
                    comp[idx] += w[j] * power[idx]
            b[k] -= comp[k] / w[1]
        comp = [Fraction(0)] * (K + 1)
        power = [Fraction(0)] * (K + 1)
        power[0] = Fraction(1)
        for j in range(1, K + 1):
            power = mul(power, b)
            for idx in range(K + 1):
                comp[idx] += phi[j] * power[idx]
        expected = np.array([float(c) for c in comp])

        series = rect_r_transform(symmetrize([1.0]), lam=1.0, order=K)
        assert np.max(np.abs(series.coefficients - expected)) < 1e-12

    def test_order_error_names_achieved(self):
        law = SqrtMPLaw(1.0, 0.5).gridded(num=301)
        with pytest.raises(RTransformOrderError) as exc:
            rect_r_transform(law, 0.5, order=14)
        assert exc.value.achieved < 14


class TestConvWithMP:
    def test_delta_zero_gives_sqrt_mp(self):
        a = RectLaw(2 / 3, SymmetricMeasure(AtomicMeasure.from_points([0.0])))
        out = conv_with_mp(a, sigma=1.0)
        exact = SqrtMPLaw(1.0, 2 / 3).gridded()
        assert wasserstein2(out, exact) < 5e-3

    def test_sigma_zero_identity(self):
        base = SqrtMPLaw(0.8, 0.5).gridded()
        a = RectLaw(0.5, base)
        out = conv_with_mp(a, sigma=0.0)
        assert wasserstein2(out, base) < 1e-9

    def test_additivity_on_mp_family(self):
        # sqrtMP(s0) boxplus sqrtMP(s1) = sqrtMP(sqrt(s0^2 + s1^2))
        a = RectLaw(0.5, SqrtMPLaw(0.6, 0.5))
        out = conv_with_mp(a, sigma=0.8)
        exact = SqrtMPLaw(1.0, 0.5).gridded()
        assert wasserstein2(out, exact) < 5e-3

    def test_fixed_point_residual(self):
        a = RectLaw(2 / 3, symmetrize([0.5, 1.0]))
        sigma, lam = 1.0, 2 / 3
        xs = np.linspace(0.01, 6.0, 100)
        w = xs + 1j * 1e-3
        m = recst_fixed_point(a.measure, sigma, lam, w)
        from dysonlab.convolve import _eigen_stieltjes_fn

        T = _eigen_stieltjes_fn(a.measure)
        D = (1 - sigma**2 * m) * ((1 - sigma**2 * m) * w - (1 - lam) * sigma**2 / lam)
        res = np.abs(T(D) - m / (1 - sigma**2 * m))
        assert res.max() < 1e-10

    def test_stieltjes_bound(self):
        # |G_{A boxplus sigma W}| <= 1/sigma
        a = RectLaw(2 / 3, symmetrize([0.5, 1.0]))
        sigma = 1.0
        xs = np.linspace(-3, 3, 61)
        for eta in (0.5, 0.05, 0.005):
            G = conv_stieltjes_with_mp(a, sigma, xs + 1j * eta)
            assert np.all(np.abs(G) <= 1 / sigma + 1e-8)
            assert np.all(np.imag(G) < 1e-12)


class TestConvGeneral:
    def test_b_delta_zero_returns_a(self):
        a = RectLaw(0.5, symmetrize([1.0]))
        b = RectLaw(0.5, SymmetricMeasure(AtomicMeasure.from_points([0.0])))
        res = conv_general(a, b)
        assert res.measure is a.measure

    def test_matches_conv_with_mp_on_g(self):
        # two independent algorithms agree on G at eta = 0.5
        lam = 2 / 3
        a = RectLaw(lam, symmetrize([0.5, 1.0]))
        b = RectLaw(lam, SqrtMPLaw(1.0, lam))
        g_fn = conv_general_g_fn(a, b)
        xs = np.linspace(-2.5, 2.5, 21)
        z = xs + 0.5j
        G1 = g_fn(z)
        G2 = conv_stieltjes_with_mp(a, 1.0, z)
        assert np.max(np.abs(G1 - G2)) < 1e-6

    def test_measure_matches_conv_with_mp(self):
        lam = 2 / 3
        a = RectLaw(lam, symmetrize([0.5, 1.0]))
        b = RectLaw(lam, SqrtMPLaw(1.0, lam))
        res = conv_general(a, b)
        direct = conv_with_mp(a, 1.0)
        assert wasserstein2(res.measure, direct) < 0.02

    def test_second_moment_adds_and_c_additivity(self):
        lam = 0.5
        a = RectLaw(lam, symmetrize([0.8]))
        b = RectLaw(lam, symmetrize([0.4, 1.1]))
        g_fn = conv_general_g_fn(a, b)
        moms = moments_via_contour(g_fn, radius=4.0, kmax=12)
        assert moms[0] == pytest.approx(1.0, abs=1e-9)
        m2a = a.measure.moment(2)
        m2b = b.measure.moment(2)
        assert moms[2] == pytest.approx(m2a + m2b, abs=1e-9)
        # C-additivity coefficientwise to order 6 via contour moments
        conv_series = rect_r_transform(MomentLaw(moms), lam, order=6)
        ca = rect_r_transform(a.measure, lam, order=6).coefficients
        cb = rect_r_transform(b.measure, lam, order=6).coefficients
        assert np.max(np.abs(conv_series.coefficients[:7] - (ca + cb))) < 1e-6

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import redunquant as rq
from redunquant.errors import DomainError, SynthesisFailedError
from redunquant.reliable_gains import solve_care_newton

from .conftest import random_gains, random_system
from .oracles import brute_force_reliable


class TestVerify:
    def test_scalar_reliable(self, scalar_two_channel):
        system, gains = scalar_two_channel
        report = rq.verify_reliable(system, gains)
        np.testing.assert_allclose(report.abscissae, [-3.0, -1.0, -1.0], atol=1e-12)
        assert report.margin == pytest.approx(1.0)
        assert report.reliable

    def test_marginal_failure_mode(self, scalar_two_channel):
        system, _ = scalar_two_channel
        weak = rq.GainSet([[[-1.0]], [[-1.0]]])
        report = rq.verify_reliable(system, weak)
        np.testing.assert_allclose(report.abscissae, [-1.0, 0.0, 0.0], atol=1e-12)
        assert not report.reliable

    def test_open_loop_stable_zero_gains(self):
        system = rq.MultiChannelSystem(
            [[-1.0]], [[[1.0]], [[1.0]]], rq.ConstantDiffusion([[1.0]])
        )
        zero = rq.GainSet([[[0.0]], [[0.0]]])
        report = rq.verify_reliable(system, zero)
        np.testing.assert_allclose(report.abscissae, [-1.0, -1.0, -1.0], atol=1e-12)
        assert report.reliable

    def test_agrees_with_brute_force_oracle(self):
        rng = np.random.default_rng(2024)
        disagreements = 0
        for _ in range(300):
            d = int(rng.integers(1, 5))
            n = int(rng.integers(1, 4))
            system = random_system(rng, d, n)
            gains = random_gains(rng, system)
            report = rq.verify_reliable(system, gains)
            if report.reliable != brute_force_reliable(system, gains):
                disagreements += 1
        assert disagreements == 0

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=25)
    def test_similarity_invariance(self, seed):
        rng = np.random.default_rng(seed)
        system = random_system(rng, 3, 2)
        gains = random_gains(rng, system)
        T = rng.uniform(-1.0, 1.0, (3, 3)) + 2.0 * np.eye(3)
        T_inv = np.linalg.inv(T)
        transformed = rq.MultiChannelSystem(
            T @ system.A @ T_inv, [T @ Bi for Bi in system.B], system.sigma
        )
        gains_t = rq.GainSet([Ki @ T_inv for Ki in gains.K])
        a = rq.verify_reliable(system, gains).abscissae
        b = rq.verify_reliable(transformed, gains_t).abscissae
        np.testing.assert_allclose(a, b, atol=1e-8)


class TestRiccati:
    def test_scalar_closed_form(self):
        # A=1, B=[1 1], R=I/theta, Q=1 has P = (1 + sqrt(1+2 theta)) / (2 theta)
        for theta in (1.0, 4.0, 64.0):
            A = np.array([[1.0]])
            B = np.array([[1.0, 1.0]])
            P = solve_care_newton(A, B, np.eye(2) / theta, np.eye(1))
            expected = (1.0 + np.sqrt(1.0 + 2.0 * theta)) / (2.0 * theta)
            # convergence is declared at residual 1e-9, so P carries ~1e-9
            assert P[0, 0] == pytest.approx(expected, rel=1e-7)

    def test_matches_scipy_care(self):
        import scipy.linalg

        rng = np.random.default_rng(5)
        for _ in range(10):
            d = int(rng.integers(2, 5))
            A = rng.uniform(-1.0, 1.0, (d, d))
            B = rng.uniform(-1.0, 1.0, (d, 2))
            P = solve_care_newton(A, B, np.eye(2), np.eye(d))
            ref = scipy.linalg.solve_continuous_are(A, B, np.eye(d), np.eye(2))
            np.testing.assert_allclose(P, ref, rtol=1e-7, atol=1e-9)


class TestSynthesis:
    def test_scalar_two_channel_succeeds(self):
        system = rq.MultiChannelSystem(
            [[1.0]], [[[1.0]], [[1.0]]], rq.ConstantDiffusion([[1.0]])
        )
        gains = rq.synthesize_gains(system)
        report = rq.verify_reliable(system, gains)
        assert report.reliable and report.margin >= 1e-6

    def test_zero_authority_channel_fails(self):
        system = rq.MultiChannelSystem(
            [[1.0]], [[[1.0]], [[0.0]]], rq.ConstantDiffusion([[1.0]])
        )
        with pytest.raises(SynthesisFailedError) as err:
            rq.synthesize_gains(system)
        assert err.value.best_report is not None
        assert "not a certificate" in str(err.value)

    def test_open_loop_stable(self):
        rng = np.random.default_rng(3)
        system = rq.MultiChannelSystem(
            np.diag([-1.0, -2.0]),
            [rng.uniform(-1.0, 1.0, (2, 1)), rng.uniform(-1.0, 1.0, (2, 1))],
            rq.ConstantDiffusion(np.eye(2)),
        )
        gains = rq.synthesize_gains(system)
        assert rq.verify_reliable(system, gains).reliable

    def test_options_validation(self):
        with pytest.raises(DomainError):
            rq.SynthesisOptions(theta_max=0.5)
        with pytest.raises(DomainError):
            rq.SynthesisOptions(margin_floor=-1.0)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=20)
    def test_soundness_on_random_instances(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 4))
        n = int(rng.integers(1, 4))
        system = random_system(rng, d, n)
        try:
            gains = rq.synthesize_gains(system)
        except (SynthesisFailedError, rq.NumericalError):
            return  # heuristic failure is allowed; success must verify
        assert rq.verify_reliable(system, gains).reliable

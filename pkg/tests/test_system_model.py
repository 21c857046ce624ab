import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import redunquant as rq
from redunquant.errors import (
    DimensionError,
    DomainError,
    NotHurwitzError,
)

from .conftest import random_hurwitz
from .oracles import char_poly_abscissa, lyapunov_reference

matrix_entries = st.floats(-2.0, 2.0, allow_nan=False)


def seeded(seed):
    return np.random.default_rng(seed)


class TestTypes:
    def test_system_rejects_wrong_b_rows(self):
        with pytest.raises(DimensionError):
            rq.MultiChannelSystem(
                [[1.0, 0.0], [0.0, 1.0]], [[[1.0]]], rq.ConstantDiffusion([[1.0, 0.0], [0.0, 1.0]])
            )

    def test_system_rejects_nonfinite_a(self):
        with pytest.raises(DomainError):
            rq.MultiChannelSystem([[np.inf]], [[[1.0]]], rq.ConstantDiffusion([[1.0]]))

    def test_constant_diffusion_rejects_degenerate(self):
        with pytest.raises(DomainError):
            rq.ConstantDiffusion([[1.0, 0.0], [1.0, 0.0]])  # rank 1, kappa = 0

    def test_constant_diffusion_kappa(self):
        spec = rq.ConstantDiffusion([[2.0, 0.0], [0.0, 3.0]])
        assert spec.kappa == pytest.approx(4.0)

    def test_diag_affine_validation(self):
        spec = rq.DiagAffineDiffusion([1.0, 2.0], [0.5, 0.0])
        assert spec.kappa == pytest.approx(1.0)
        with pytest.raises(DomainError):
            rq.DiagAffineDiffusion([1.0, -1.0], [0.0, 0.0])
        with pytest.raises(DomainError):
            rq.DiagAffineDiffusion([1.0, 1.0], [-0.1, 0.0])

    def test_immutable_arrays(self, scalar_two_channel):
        system, gains = scalar_two_channel
        with pytest.raises(ValueError):
            system.A[0, 0] = 5.0
        with pytest.raises(ValueError):
            gains.K[0][0, 0] = 5.0


class TestClosedLoop:
    def test_scalar_examples(self, scalar_two_channel):
        system, gains = scalar_two_channel
        np.testing.assert_array_equal(rq.closed_loop_matrix(system, gains, 0), [[-3.0]])
        np.testing.assert_array_equal(rq.closed_loop_matrix(system, gains, 1), [[-1.0]])
        np.testing.assert_array_equal(rq.closed_loop_matrix(system, gains, 2), [[-1.0]])

    def test_zero_gains_give_plant(self, scalar_two_channel):
        system, _ = scalar_two_channel
        zero = rq.GainSet([[[0.0]], [[0.0]]])
        for mode in range(3):
            np.testing.assert_array_equal(
                rq.closed_loop_matrix(system, zero, mode), system.A
            )

    def test_mode_out_of_range(self, scalar_two_channel):
        system, gains = scalar_two_channel
        with pytest.raises(DimensionError):
            rq.closed_loop_matrix(system, gains, 3)

    def test_gain_shape_mismatch(self, scalar_two_channel):
        system, _ = scalar_two_channel
        bad = rq.GainSet([[[-2.0, 0.0]], [[-2.0]]])
        with pytest.raises(DimensionError):
            rq.closed_loop_matrix(system, bad, 0)

    @given(seed=st.integers(0, 10_000), d=st.integers(1, 4), n=st.integers(1, 3))
    def test_outage_difference_is_channel_term(self, seed, d, n):
        from .conftest import random_gains, random_system

        rng = seeded(seed)
        system = random_system(rng, d, n)
        gains = random_gains(rng, system)
        nominal = rq.closed_loop_matrix(system, gains, 0)
        for j in range(1, n + 1):
            outage = rq.closed_loop_matrix(system, gains, j)
            # summation-order round-off allows a couple of ulps
            np.testing.assert_allclose(
                nominal - outage, system.B[j - 1] @ gains.K[j - 1], rtol=0, atol=1e-13
            )


class TestSpectralAbscissa:
    def test_diagonal(self):
        assert rq.spectral_abscissa(np.diag([-3.0, -1.0])) == pytest.approx(-1.0)

    def test_rotation(self):
        assert rq.spectral_abscissa([[0.0, 1.0], [-1.0, 0.0]]) == pytest.approx(0.0, abs=1e-12)

    def test_matches_char_poly_roots(self):
        rng = seeded(7)
        for _ in range(50):
            M = rng.uniform(-2.0, 2.0, (4, 4))
            assert rq.spectral_abscissa(M) == pytest.approx(
                char_poly_abscissa(M), abs=1e-8
            )

    @given(seed=st.integers(0, 10_000), c=st.floats(-5.0, 5.0, allow_nan=False))
    def test_shift_invariance(self, seed, c):
        M = seeded(seed).uniform(-2.0, 2.0, (3, 3))
        assert rq.spectral_abscissa(M + c * np.eye(3)) == pytest.approx(
            rq.spectral_abscissa(M) + c, abs=1e-9
        )


class TestMatrixExponential:
    def test_zero_matrix(self):
        np.testing.assert_array_equal(rq.matrix_exponential(np.zeros((3, 3)), 2.7), np.eye(3))

    def test_diagonal(self):
        E = rq.matrix_exponential(np.diag([-1.0, -2.0]), 1.0)
        np.testing.assert_allclose(E, np.diag([np.exp(-1.0), np.exp(-2.0)]), rtol=1e-13)

    def test_nilpotent(self):
        for t in (0.3, 1.0, 7.5):
            E = rq.matrix_exponential(np.array([[0.0, 1.0], [0.0, 0.0]]), t)
            np.testing.assert_allclose(E, [[1.0, t], [0.0, 1.0]], rtol=1e-14)

    @given(seed=st.integers(0, 10_000), t=st.floats(0.01, 3.0, allow_nan=False))
    def test_inverse_identity(self, seed, t):
        M = seeded(seed).uniform(-2.0, 2.0, (3, 3))
        forward = rq.matrix_exponential(M, t)
        backward = rq.matrix_exponential(M, -t)
        np.testing.assert_allclose(forward @ backward, np.eye(3), atol=1e-10)

    @given(seed=st.integers(0, 10_000), t=st.floats(0.01, 3.0, allow_nan=False))
    def test_determinant_is_exp_trace(self, seed, t):
        M = seeded(seed).uniform(-2.0, 2.0, (3, 3))
        det = np.linalg.det(rq.matrix_exponential(M, t))
        expected = np.exp(np.trace(M) * t)
        assert det == pytest.approx(expected, rel=1e-8)

    def test_overflow_raises(self):
        with pytest.raises(rq.NumericalError):
            rq.matrix_exponential(np.array([[500.0]]), 10.0)


class TestLyapunov:
    def test_scalar(self):
        np.testing.assert_allclose(
            rq.solve_lyapunov(np.array([[-3.0]]), np.array([[1.0]])), [[1.0 / 6.0]], rtol=1e-14
        )

    def test_decoupled_diagonal(self):
        P = rq.solve_lyapunov(np.diag([-1.0, -2.0]), np.eye(2))
        np.testing.assert_allclose(P, np.diag([0.5, 0.25]), rtol=1e-13)

    def test_not_hurwitz_raises(self):
        with pytest.raises(NotHurwitzError):
            rq.solve_lyapunov(np.array([[1.0]]), np.array([[1.0]]))

    def test_asymmetric_q_raises(self):
        with pytest.raises(DomainError):
            rq.solve_lyapunov(-np.eye(2), np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_matches_bartels_stewart(self):
        rng = seeded(11)
        for _ in range(20):
            A_cl = random_hurwitz(rng, 5)
            W = rng.uniform(-1.0, 1.0, (5, 5))
            Q = W @ W.T + 0.1 * np.eye(5)
            P = rq.solve_lyapunov(A_cl, Q)
            np.testing.assert_allclose(P, lyapunov_reference(A_cl, Q), rtol=1e-8, atol=1e-10)

    @given(seed=st.integers(0, 10_000), d=st.integers(1, 6))
    @settings(max_examples=30)
    def test_solution_symmetric_pd_for_pd_q(self, seed, d):
        rng = seeded(seed)
        A_cl = random_hurwitz(rng, d)
        W = rng.uniform(-1.0, 1.0, (d, d))
        Q = W @ W.T + 0.5 * np.eye(d)
        P = rq.solve_lyapunov(A_cl, Q)
        np.testing.assert_array_equal(P, P.T)
        assert np.linalg.eigvalsh(P).min() > 0.0

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import redunquant as rq

settings.register_profile(
    "ci",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture
def scalar_two_channel():
    """d=1 plant with two redundant unit channels and unit constant noise."""
    system = rq.MultiChannelSystem([[1.0]], [[[1.0]], [[1.0]]], rq.ConstantDiffusion([[1.0]]))
    gains = rq.GainSet([[[-2.0]], [[-2.0]]])
    return system, gains


@pytest.fixture
def ou_system():
    """Stable scalar plant with a zero gain: the closed loop is dx = -x dt + eps dW."""
    system = rq.MultiChannelSystem([[-1.0]], [[[1.0]]], rq.ConstantDiffusion([[1.0]]))
    gains = rq.GainSet([[[0.0]]])
    return system, gains


def random_system(rng: np.random.Generator, d: int, n_channels: int, input_dims=None):
    """Random plant with Uniform[-2,2] entries and a well-conditioned noise map."""
    input_dims = input_dims or [int(rng.integers(1, 3)) for _ in range(n_channels)]
    A = rng.uniform(-2.0, 2.0, (d, d))
    B = [rng.uniform(-2.0, 2.0, (d, r)) for r in input_dims]
    S = rng.uniform(-1.0, 1.0, (d, d)) + 1.5 * np.eye(d)
    return rq.MultiChannelSystem(A, B, rq.ConstantDiffusion(S))


def random_gains(rng: np.random.Generator, system: rq.MultiChannelSystem):
    return rq.GainSet(
        [rng.uniform(-3.0, 3.0, (r, system.d)) for r in system.input_dims]
    )


def random_hurwitz(rng: np.random.Generator, d: int, margin: float = 0.5) -> np.ndarray:
    """Random matrix shifted left until its spectral abscissa is <= -margin."""
    M = rng.uniform(-2.0, 2.0, (d, d))
    return M - (rq.spectral_abscissa(M) + margin) * np.eye(d)

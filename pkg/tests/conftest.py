import numpy as np
import pytest

from roughsk import SamplePath


@pytest.fixture
def random_path():
    """Factory for a deterministic pseudo-random SamplePath."""

    def make(n=64, d=2, dt=0.01, seed=0, scale=0.1):
        gen = np.random.Generator(np.random.Philox(key=seed))
        values = np.vstack(
            [np.zeros((1, d)), np.cumsum(gen.normal(0.0, scale, (n, d)), axis=0)]
        )
        return SamplePath(0.0, dt, values)

    return make

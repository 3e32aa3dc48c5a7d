import numpy as np
import pytest

from mrspricing.model import (
    AffineMarketPriceOfRisk,
    BaseParams,
    DropParams,
    ModelParams,
    RegimeHistory,
    SpikeParams,
    TransitionSpec,
)

# Reference parameter set used across the suite: a mean level near 37 EUR,
# spikes shifted up from the lower quartile, drops hanging off the upper one.
REFERENCE_MATRIX = np.array(
    [
        [0.97, 0.02, 0.01],
        [0.30, 0.66, 0.04],
        [0.55, 0.05, 0.40],
    ]
)

REFERENCE_LAMBDA = AffineMarketPriceOfRisk(0.0084, -1.8387)


def make_reference_params(matrix=None, period_matrices=None):
    if period_matrices is not None:
        trans = TransitionSpec(np.asarray(period_matrices, dtype=float))
    else:
        trans = TransitionSpec.constant(REFERENCE_MATRIX if matrix is None else matrix)
    return ModelParams(
        base=BaseParams(alpha=5.98, beta=0.16, sigma=np.sqrt(39.53)),
        spike=SpikeParams(mu=2.89, sigma=np.sqrt(0.64), shift=30.0),
        drop=DropParams(mu=2.62, sigma=np.sqrt(0.33), shift=45.0),
        transitions=trans,
    )


@pytest.fixture
def reference_params():
    return make_reference_params()


@pytest.fixture
def base_history():
    return RegimeHistory.at_base(40.0)

from __future__ import annotations

import numpy as np
import pytest

from wsnalloc.model import make_model


def paper_model(p_tot=1000.0, b_tot=30, tau=None):
    """The K=3, q=2 reference configuration used across the test suite."""
    s = np.sqrt(2.0) / 2.0
    return make_model(
        prior_cov=[[1.0, s], [s, 2.0]],
        gains=[[1.0, 0.6, 0.4], [1.0, 0.6, 0.4]],
        obs_noise_var=[1.0, 1.0, 1.0],
        channel_gain=[1.0, 1.0, 1.0],
        channel_noise_var=[1.0, 1.0, 1.0],
        p_tot=p_tot,
        b_tot=b_tot,
        tau=tau,
    )


@pytest.fixture
def k3_model():
    return paper_model()

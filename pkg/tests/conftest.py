import numpy as np
import pytest

from fqreg.dataset import FunctionalDataset, SamplingGrid


def intercept_dataset(y_col, t=2):
    """Intercept-only dataset whose T columns all equal y_col."""
    y = np.asarray(y_col, dtype=float)
    responses = np.tile(y[:, None], (1, t))
    design = np.ones((y.size, 1))
    return FunctionalDataset(responses, design, SamplingGrid(np.linspace(0.0, 1.0, t)))


def random_dataset(rng, n, t, d, beta=None):
    """Dataset with intercept + (d-1) standard-normal covariates and N(0,1) noise."""
    design = np.column_stack([np.ones(n), rng.standard_normal((n, d - 1))]) if d > 1 \
        else np.ones((n, 1))
    beta = np.zeros(d) if beta is None else np.asarray(beta, dtype=float)
    responses = (design @ beta)[:, None] + rng.standard_normal((n, t))
    return FunctionalDataset(responses, design, SamplingGrid(np.linspace(0.0, 1.0, t)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)

import json

import numpy as np
import pytest

from specfilter import ConditionalContext, ProblemInstance

R1_B = (1.0, 0.5, 0.1, 0.01)
R1_X = (1.0, 0.1, 2.0, 0.05)
R1_SIGMA = 0.2
R1_XI = (0.01, -0.02, 0.05, -0.005)


@pytest.fixture
def r1():
    return ProblemInstance.from_spectrum(R1_B, R1_X, R1_SIGMA)


@pytest.fixture
def r1_ctx(r1):
    return ConditionalContext.from_xi(r1, R1_XI, s=0.05, alpha=1.0)


@pytest.fixture
def r1_config(tmp_path):
    """R1 experiment config on disk, with eigenvalue noise."""
    cfg = {
        "schema_version": 1,
        "instance": {"b": list(R1_B), "x": list(R1_X), "sigma": R1_SIGMA},
        "xi": {"family": "gaussian", "s": 0.05, "betaprime": 3, "C": 0.15},
        "estimators": ["oracle-model", "ure", "threshold", "cutoff:*", "noisy-threshold"],
        "replications": 4096,
        "seed": 42,
    }
    path = tmp_path / "r1.json"
    path.write_text(json.dumps(cfg))
    return path


def random_instance(rng, n, sparse=0.0):
    """Non-increasing |b|, x drawn independently of b."""
    b = np.sort(rng.uniform(0.01, 1.0, n))[::-1] * rng.choice([-1.0, 1.0], n)
    x = rng.normal(0, 1, n) * rng.uniform(0.01, 3.0)
    if sparse:
        x[rng.random(n) < sparse] = 0.0
    return ProblemInstance.from_spectrum(b, x, float(rng.uniform(0.05, 1.0)))

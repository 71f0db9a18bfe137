import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def unit_rows(rng, n, d):
    """n random unit vectors of dim d."""
    rows = rng.standard_normal((n, d))
    return rows / np.linalg.norm(rows, axis=1)[:, None]


def random_set(rng, n, d, image_id="img"):
    """Random descriptor set with uniform angles."""
    from covagg import DescriptorSet

    return DescriptorSet(
        unit_rows(rng, n, d), rng.uniform(-3.1, 3.1, n), image_id=image_id
    )

import numpy as np
import pytest

from carmguide.geometry import RigidTransform


def random_transform(rng, max_angle_deg=180.0, max_translation=1000.0) -> RigidTransform:
    """Uniform random rotation (scaled) with a uniform box translation."""
    axis = rng.normal(size=3)
    angle = rng.uniform(-max_angle_deg, max_angle_deg)
    t = tuple(rng.uniform(-max_translation, max_translation, size=3))
    return RigidTransform.from_axis_angle(axis, angle, t)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)

import numpy as np
import pytest

from sphereseg.phantom import PhantomSpec, generate_phantom


@pytest.fixture(scope="session")
def small_spec():
    """Downscaled phantom that keeps every structure but runs fast."""
    return PhantomSpec(
        brain_axes_mm=(30.0, 34.0, 26.0),
        region_radii_mm=(12.0, 7.0, 4.0),
        tumor_offset_mm=(6.0, 4.0, 2.0),
    )


@pytest.fixture(scope="session")
def small_case(small_spec):
    return generate_phantom(small_spec)


@pytest.fixture(scope="session")
def full_case():
    spec = PhantomSpec()
    return spec, generate_phantom(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

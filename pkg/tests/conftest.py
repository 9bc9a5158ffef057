import pytest

from gridntl.dataset import SyntheticConfig, generate_synthetic


@pytest.fixture(scope="session")
def small_dataset():
    """600-customer dataset shared by read-only tests."""
    return generate_synthetic(SyntheticConfig(num_customers=600, num_months=14, seed=7))


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate_synthetic(SyntheticConfig(num_customers=60, num_months=13, seed=11))

import numpy as np
import pytest


def haar_unitary(n, rng):
    """Haar-random unitary via QR with phase-normalized diagonal."""
    z = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d)).conj()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

import numpy as np
import pytest

from quinr.model import ModelConfig
from quinr.signal_io import SignalTensor
from quinr.train import TrainOptions, encode

SMOKE_CONFIG = ModelConfig(n_qubits=4, folds=3, layers=2, blocks=2, head_affine=True)
SMOKE_OPTS = TrainOptions(steps=2000, lr=1e-3, batch_size=1024, seed=0)


def gradient_image(size: int = 16) -> SignalTensor:
    """Diagonal linear ramp from 0 (top-left) to 1 (bottom-right)."""
    r, c = np.mgrid[0:size, 0:size]
    return SignalTensor(((r + c) / (2.0 * (size - 1)))[:, :, None], "u8_image")


@pytest.fixture(scope="session")
def smoke_image():
    return gradient_image(16)


@pytest.fixture(scope="session")
def smoke_run(smoke_image):
    """The acceptance overfit run, trained once per session."""
    return encode(smoke_image, SMOKE_CONFIG, SMOKE_OPTS)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

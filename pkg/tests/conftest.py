import numpy as np
import pytest

from bisense.waveform import FrameConfig


@pytest.fixture
def ref_cfg() -> FrameConfig:
    """Reference mmWave numerology used across the test suite."""
    return FrameConfig(
        carrier_freq=30e9,
        subcarrier_spacing=200e3,
        cp_duration=1e-6,
        n_subcarriers=70,
        n_symbols=100,
    )


@pytest.fixture
def mini_cfg() -> FrameConfig:
    """Small numerology for fast full-chain tests (240-sample frame)."""
    return FrameConfig(
        carrier_freq=30e9,
        subcarrier_spacing=200e3,
        cp_duration=1.25e-6,
        n_subcarriers=16,
        n_symbols=12,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)

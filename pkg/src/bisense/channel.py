"""Received-sample synthesis: path superposition, Doppler, thermal noise.

The receiver samples at t = k*t_sample over exactly one frame. Paths are
evaluated analytically from the baseband waveform (no fractional-delay
filtering), so arbitrary off-grid delays are exact. Noise is drawn after
the deterministic paths from its own seed, which keeps path parameters and
noise realizations independently reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import Propagation
from .waveform import FrameConfig, FrameSymbols, eval_baseband


@dataclass
class NoiseModel:
    """Thermal noise settings.

    Variance follows psd * n_subcarriers * subcarrier_spacing * noise_figure
    unless fixed_variance pins it directly (0.0 means noiseless).
    """

    psd_dbm_per_hz: float = -174.0
    noise_figure_db: float = 8.0
    fixed_variance: float | None = None

    def variance(self, cfg: FrameConfig) -> float:
        if self.fixed_variance is not None:
            if self.fixed_variance < 0:
                raise ValueError("noise variance cannot be negative")
            return float(self.fixed_variance)
        psd_watts = 10.0 ** ((self.psd_dbm_per_hz - 30.0) / 10.0)
        bandwidth = cfg.n_subcarriers * cfg.subcarrier_spacing
        return psd_watts * bandwidth * 10.0 ** (self.noise_figure_db / 10.0)


def set_snr(prop: Propagation, snr_db: float) -> NoiseModel:
    """Noise model whose variance realizes the requested reflected-path SNR.

    SNR is defined as |reflected path gain|^2 / variance, so the variance
    is solved per scene.
    """
    snr_lin = 10.0 ** (snr_db / 10.0)
    return NoiseModel(fixed_variance=abs(prop.gain_nlos) ** 2 / snr_lin)


@dataclass
class SampleStream:
    """One frame of received complex baseband samples."""

    samples: np.ndarray
    cfg: FrameConfig
    noise_variance: float


def synthesize_rx(
    frame: FrameSymbols,
    prop: Propagation,
    noise: NoiseModel | None = None,
    noise_seed=0,
) -> SampleStream:
    """Superpose the reflected path (with Doppler), the direct path when
    present, and circular complex Gaussian noise.

    noise_seed may be an int seed or a numpy Generator.
    """
    cfg = frame.cfg
    t = np.arange(cfg.n_samples_frame) * cfg.t_sample
    doppler_phase = np.exp(2j * np.pi * prop.doppler * t)
    rx = (
        prop.gain_nlos
        * prop.beam_gain
        * eval_baseband(frame, t - prop.delay_nlos)
        * doppler_phase
    )
    if prop.gain_los is not None:
        rx = rx + prop.gain_los * eval_baseband(frame, t - prop.delay_los)

    var = noise.variance(cfg) if noise is not None else 0.0
    if var > 0.0:
        rng = np.random.default_rng(noise_seed)
        scale = np.sqrt(var / 2.0)
        z = rng.standard_normal(rx.size) + 1j * rng.standard_normal(rx.size)
        rx = rx + scale * z
    return SampleStream(rx, cfg, var)


def dump_samples(stream: SampleStream, path: str) -> None:
    """Write samples as little-endian float64 interleaved I/Q, plus a text
    sidecar (<path>.meta.txt) describing the capture."""
    interleaved = np.empty(2 * stream.samples.size, dtype="<f8")
    interleaved[0::2] = stream.samples.real
    interleaved[1::2] = stream.samples.imag
    interleaved.tofile(path)
    cfg = stream.cfg
    with open(path + ".meta.txt", "w") as fh:
        fh.write("format: interleaved I/Q, little-endian float64\n")
        fh.write(f"n_samples: {stream.samples.size}\n")
        fh.write(f"sample_period_s: {cfg.t_sample!r}\n")
        fh.write(f"carrier_freq_hz: {cfg.carrier_freq!r}\n")
        fh.write(f"subcarrier_spacing_hz: {cfg.subcarrier_spacing!r}\n")
        fh.write(f"noise_variance: {stream.noise_variance!r}\n")


def load_samples(path: str, cfg: FrameConfig, noise_variance: float = 0.0) -> SampleStream:
    """Read back a dump produced by dump_samples."""
    raw = np.fromfile(path, dtype="<f8")
    samples = raw[0::2] + 1j * raw[1::2]
    return SampleStream(samples, cfg, noise_variance)

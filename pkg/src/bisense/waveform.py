"""OFDM frame numerology, pilot lattices, and baseband waveform synthesis.

The frame is a grid of QPSK symbols X[m, n] (symbol index m, subcarrier
index n). Pilots sit on a periodic sublattice and are known at the sensing
receiver; everything else is communication data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 3.0e8  # m/s

_QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)


@dataclass(frozen=True)
class FrameConfig:
    """Numerology of one OFDM frame.

    Durations are seconds, frequencies Hz. The cyclic prefix length in
    samples is rounded to the nearest integer (ties away from zero).
    """

    carrier_freq: float
    subcarrier_spacing: float
    cp_duration: float
    n_subcarriers: int
    n_symbols: int

    def __post_init__(self):
        if self.carrier_freq <= 0 or self.subcarrier_spacing <= 0:
            raise ValueError("carrier_freq and subcarrier_spacing must be positive")
        if self.cp_duration <= 0:
            raise ValueError("cp_duration must be positive")
        if self.n_subcarriers < 1 or self.n_symbols < 1:
            raise ValueError("need at least one subcarrier and one symbol")
        if self.n_cp < 1:
            raise ValueError(
                "cp_duration shorter than half a sample; cyclic prefix would be empty"
            )

    @property
    def t_data(self) -> float:
        """Useful symbol duration, the reciprocal subcarrier spacing."""
        return 1.0 / self.subcarrier_spacing

    @property
    def t_symbol(self) -> float:
        """Full symbol duration including the cyclic prefix."""
        return self.cp_duration + self.t_data

    @property
    def t_sample(self) -> float:
        return self.t_data / self.n_subcarriers

    @property
    def n_cp(self) -> int:
        # round half away from zero; the argument is always positive here
        return int(math.floor(self.cp_duration / self.t_sample + 0.5))

    @property
    def n_samples_symbol(self) -> int:
        return self.n_subcarriers + self.n_cp

    @property
    def n_samples_frame(self) -> int:
        return self.n_symbols * self.n_samples_symbol

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq


@dataclass
class PilotPattern:
    """Periodic pilot sublattice: every freq_period-th subcarrier of every
    time_period-th symbol carries a pilot."""

    freq_period: int
    time_period: int
    sub_idx: np.ndarray  # pilot subcarrier indices
    sym_idx: np.ndarray  # pilot symbol indices
    count: int
    density: float

    def n_pilot_symbols(self, n_symbols_available: int) -> int:
        """Pilot symbols with index < n_symbols_available."""
        if n_symbols_available < 1:
            return 0
        return (n_symbols_available - 1) // self.time_period + 1


def build_pilot_pattern(cfg: FrameConfig, freq_period: int, time_period: int) -> PilotPattern:
    """Lay out the pilot lattice for the given numerology.

    A grid point (m, n) is a pilot iff m % time_period == 0 and
    n % freq_period == 0.
    """
    if not (1 <= freq_period <= cfg.n_subcarriers):
        raise ValueError("freq_period must be in [1, n_subcarriers]")
    if not (1 <= time_period <= cfg.n_symbols):
        raise ValueError("time_period must be in [1, n_symbols]")
    sub_idx = np.arange(0, cfg.n_subcarriers, freq_period)
    sym_idx = np.arange(0, cfg.n_symbols, time_period)
    count = sub_idx.size * sym_idx.size
    density = count / float(cfg.n_subcarriers * cfg.n_symbols)
    return PilotPattern(freq_period, time_period, sub_idx, sym_idx, count, density)


@dataclass
class FrameSymbols:
    """One frame's transmitted QPSK grid, pilots included."""

    cfg: FrameConfig
    pattern: PilotPattern
    symbols: np.ndarray  # (n_symbols, n_subcarriers) complex
    pilot_seed: int
    data_seed: int

    def pilot_values(self, n_symbols_available: int | None = None) -> np.ndarray:
        """Pilot symbols as a (pilot symbols x pilot subcarriers) block."""
        sym = self.pattern.sym_idx
        if n_symbols_available is not None:
            sym = sym[sym < n_symbols_available]
        return self.symbols[np.ix_(sym, self.pattern.sub_idx)]


def _qpsk(rng: np.random.Generator, shape) -> np.ndarray:
    return _QPSK[rng.integers(0, 4, size=shape)]


def generate_frame(
    cfg: FrameConfig,
    pattern: PilotPattern,
    pilot_seed: int = 0,
    data_seed: int = 1,
) -> FrameSymbols:
    """Draw a frame of QPSK symbols.

    Pilot values depend only on pilot_seed and the pattern, so the sensing
    receiver can regenerate them; data symbols vary with data_seed.
    """
    data_rng = np.random.default_rng(data_seed)
    grid = _qpsk(data_rng, (cfg.n_symbols, cfg.n_subcarriers))
    pilot_rng = np.random.default_rng(pilot_seed)
    pilots = _qpsk(pilot_rng, (pattern.sym_idx.size, pattern.sub_idx.size))
    grid[np.ix_(pattern.sym_idx, pattern.sub_idx)] = pilots
    return FrameSymbols(cfg, pattern, grid, pilot_seed, data_seed)


def eval_baseband(frame: FrameSymbols, t) -> np.ndarray:
    """Evaluate the continuous-time baseband frame signal at times t.

    Each symbol m occupies the gate [m*t_symbol, (m+1)*t_symbol) and sums
    its subcarriers with the continuous phase exp(j*2*pi*n*df*t); the
    leading cp_duration of the gate is thereby automatically the cyclic
    prefix. Outside every gate the signal is zero.
    """
    cfg = frame.cfg
    t_arr = np.asarray(t, dtype=float)
    flat = np.atleast_1d(t_arr).ravel()
    out = np.zeros(flat.shape, dtype=np.complex128)
    m_idx = np.floor(flat / cfg.t_symbol).astype(np.int64)
    valid = (flat >= 0.0) & (m_idx < cfg.n_symbols)
    n = np.arange(cfg.n_subcarriers)
    scale = 1.0 / np.sqrt(cfg.n_subcarriers)
    for m in np.unique(m_idx[valid]):
        sel = np.flatnonzero(valid & (m_idx == m))
        tones = np.exp(2j * np.pi * cfg.subcarrier_spacing * np.outer(flat[sel], n))
        out[sel] = scale * (tones @ frame.symbols[m])
    return out.reshape(t_arr.shape)

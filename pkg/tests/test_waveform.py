import numpy as np
import pytest

from bisense.waveform import (
    FrameConfig,
    build_pilot_pattern,
    eval_baseband,
    generate_frame,
)


def naive_baseband(frame, t_points):
    """Reference evaluator: literal double sum with explicit symbol gates.

    Slow on purpose; used as the independent oracle for eval_baseband.
    """
    cfg = frame.cfg
    out = np.zeros(len(t_points), dtype=complex)
    for i, t in enumerate(t_points):
        acc = 0.0 + 0.0j
        for m in range(cfg.n_symbols):
            if not (m * cfg.t_symbol <= t < (m + 1) * cfg.t_symbol):
                continue
            for n in range(cfg.n_subcarriers):
                acc += frame.symbols[m, n] * np.exp(
                    2j * np.pi * n * cfg.subcarrier_spacing * t
                )
        out[i] = acc / np.sqrt(cfg.n_subcarriers)
    return out


def test_derived_numerology(ref_cfg):
    assert ref_cfg.t_data == pytest.approx(5e-6)
    assert ref_cfg.t_symbol == pytest.approx(6e-6)
    assert ref_cfg.t_sample == pytest.approx(5e-6 / 70)
    assert ref_cfg.n_cp == 14
    assert ref_cfg.n_samples_symbol == 84
    assert ref_cfg.n_samples_frame == 8400
    assert ref_cfg.wavelength == pytest.approx(0.01)


def test_cp_rounding_is_ties_away():
    base = dict(
        carrier_freq=30e9, subcarrier_spacing=200e3, n_subcarriers=70, n_symbols=4
    )
    t_sample = 5e-6 / 70
    assert FrameConfig(cp_duration=13.5 * t_sample, **base).n_cp == 14
    assert FrameConfig(cp_duration=13.49 * t_sample, **base).n_cp == 13
    assert FrameConfig(cp_duration=14.5 * t_sample, **base).n_cp == 15


def test_config_validation_rejects_bad_values():
    good = dict(
        carrier_freq=30e9,
        subcarrier_spacing=200e3,
        cp_duration=1e-6,
        n_subcarriers=70,
        n_symbols=100,
    )
    with pytest.raises(ValueError):
        FrameConfig(**{**good, "subcarrier_spacing": -1.0})
    with pytest.raises(ValueError):
        FrameConfig(**{**good, "n_subcarriers": 0})
    with pytest.raises(ValueError):
        # CP shorter than half a sample rounds to zero samples
        FrameConfig(**{**good, "cp_duration": 1e-9})


def test_pilot_pattern_counts_and_density(ref_cfg):
    for periods, count, density in [
        ((2, 4), 875, 0.125),
        ((2, 2), 1750, 0.25),
        ((2, 1), 3500, 0.5),
    ]:
        pat = build_pilot_pattern(ref_cfg, *periods)
        assert pat.count == count
        assert pat.density == pytest.approx(density)


def test_pilot_pattern_matches_enumeration():
    # counting formula against brute-force lattice enumeration
    rng = np.random.default_rng(7)
    for _ in range(200):
        n_sub = int(rng.integers(4, 128))
        n_sym = int(rng.integers(2, 60))
        cfg = FrameConfig(
            carrier_freq=1e9,
            subcarrier_spacing=100e3,
            cp_duration=2e-6,
            n_subcarriers=n_sub,
            n_symbols=n_sym,
        )
        fp = int(rng.integers(1, n_sub + 1))
        tp = int(rng.integers(1, n_sym + 1))
        pat = build_pilot_pattern(cfg, fp, tp)
        brute = sum(
            1
            for m in range(n_sym)
            for n in range(n_sub)
            if m % tp == 0 and n % fp == 0
        )
        assert pat.count == brute
        assert pat.density == pytest.approx(brute / (n_sub * n_sym))
        expected_subs = (n_sub - 1) // fp + 1
        expected_syms = (n_sym - 1) // tp + 1
        assert pat.sub_idx.size == expected_subs
        assert pat.sym_idx.size == expected_syms
        assert pat.n_pilot_symbols(n_sym) == expected_syms


def test_pilot_pattern_rejects_out_of_range(ref_cfg):
    with pytest.raises(ValueError):
        build_pilot_pattern(ref_cfg, 0, 1)
    with pytest.raises(ValueError):
        build_pilot_pattern(ref_cfg, 2, 101)


def test_generate_frame_alphabet_and_determinism(ref_cfg):
    pat = build_pilot_pattern(ref_cfg, 2, 4)
    f1 = generate_frame(ref_cfg, pat, pilot_seed=11, data_seed=22)
    f2 = generate_frame(ref_cfg, pat, pilot_seed=11, data_seed=22)
    assert np.array_equal(f1.symbols, f2.symbols)
    # all symbols unit-modulus QPSK
    mags = np.abs(f1.symbols)
    assert np.allclose(mags, 1.0, atol=1e-12)
    re = np.unique(np.round(f1.symbols.real * np.sqrt(2)))
    assert set(re) <= {-1.0, 1.0}


def test_pilots_fixed_across_data_seeds(ref_cfg):
    pat = build_pilot_pattern(ref_cfg, 2, 2)
    fa = generate_frame(ref_cfg, pat, pilot_seed=5, data_seed=100)
    fb = generate_frame(ref_cfg, pat, pilot_seed=5, data_seed=200)
    assert np.array_equal(fa.pilot_values(), fb.pilot_values())
    # and the data portion actually changed
    assert not np.array_equal(fa.symbols, fb.symbols)


def test_eval_baseband_matches_naive(mini_cfg, rng):
    pat = build_pilot_pattern(mini_cfg, 2, 2)
    frame = generate_frame(mini_cfg, pat, pilot_seed=1, data_seed=2)
    total = mini_cfg.n_symbols * mini_cfg.t_symbol
    t_points = rng.uniform(-0.1 * total, 1.1 * total, size=150)
    fast = eval_baseband(frame, t_points)
    slow = naive_baseband(frame, t_points)
    assert np.allclose(fast, slow, rtol=0, atol=1e-12 * np.max(np.abs(slow)))


def test_eval_baseband_zero_outside_gates(mini_cfg):
    pat = build_pilot_pattern(mini_cfg, 1, 1)
    frame = generate_frame(mini_cfg, pat)
    total = mini_cfg.n_symbols * mini_cfg.t_symbol
    vals = eval_baseband(frame, np.array([-1e-9, total, total + 1e-6]))
    assert np.all(vals == 0)


def test_cyclic_prefix_replicates_symbol_tail(ref_cfg, rng):
    pat = build_pilot_pattern(ref_cfg, 2, 4)
    frame = generate_frame(ref_cfg, pat, pilot_seed=3, data_seed=4)
    m = rng.integers(0, ref_cfg.n_symbols, size=20)
    frac = rng.uniform(0, ref_cfg.cp_duration, size=20)
    t_cp = m * ref_cfg.t_symbol + frac
    s_cp = eval_baseband(frame, t_cp)
    s_tail = eval_baseband(frame, t_cp + ref_cfg.t_data)
    scale = np.max(np.abs(s_tail))
    assert np.allclose(s_cp, s_tail, rtol=0, atol=1e-9 * scale)


def test_symbol_energy_parseval(ref_cfg):
    pat = build_pilot_pattern(ref_cfg, 2, 1)
    frame = generate_frame(ref_cfg, pat, pilot_seed=8, data_seed=9)
    for m in (0, 37, 99):
        k = np.arange(ref_cfg.n_subcarriers)
        t = m * ref_cfg.t_symbol + ref_cfg.cp_duration + k * ref_cfg.t_sample
        samples = eval_baseband(frame, t)
        energy = np.sum(np.abs(samples) ** 2)
        expected = np.sum(np.abs(frame.symbols[m]) ** 2)
        assert energy == pytest.approx(expected, rel=1e-6)

"""Monte-Carlo experiment harness.

Everything an experiment needs sits in one ExperimentConfig: frame
numerology, the random scene prior, pilot patterns, sweep grids, trial
counts and seeds. Sweeps draw scenes, synthesize received frames, run
the detection chain, and aggregate errors into RMSE points conditioned
on detection, written out as CSV.

Reproducibility contract: every trial's random inputs derive from
(root seed, study tag, pattern, sweep x, trial index), so re-running a
config gives byte-identical CSVs and adding sweep points or trials
never perturbs existing draws.
"""

import csv
import dataclasses
import functools
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import yaml

from .channel import NoiseModel, SampleStream, set_snr, synthesize_rx
from .detector import (
    calibrate_threshold,
    calibration_fingerprint,
    detect_and_cancel_los,
    detect_and_localize,
    estimate_geometry,
    load_calibration,
    save_calibration,
    velocity_from_doppler,
)
from .scene import Scene, derive_propagation
from .waveform import FrameConfig, build_pilot_pattern, eval_baseband, generate_frame

log = logging.getLogger(__name__)

# sub-stream tags so each study draws from its own seed universe
_TAG_CALIB = 0
_TAG_SNR = 1
_TAG_RATIO = 2
_TAG_AOA = 3
_TAG_NOISELESS = 4

RMSE_CSV_HEADER = ["x", "pattern", "n_trials", "n_detected", "rmse_range_m", "rmse_velocity_mps"]
AOA_CSV_HEADER = ["snr_db", "aoa_error_deg", "pattern", "n_trials", "n_detected", "rmse_velocity_mps"]

_GAIN_MODES = ("model", "model_4x", "projection", "oracle")


@dataclasses.dataclass
class ScenePrior:
    """Random scene distribution: a position rectangle, a speed range and
    a heading range, with fixed terminals. Degenerate (point) ranges are
    allowed; inverted ones are not."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    speed_min: float
    speed_max: float
    heading_min: float
    heading_max: float
    p_tx: np.ndarray
    p_rx: np.ndarray
    los_blocked: bool = True
    rcs: float = 1.0

    def __post_init__(self):
        self.p_tx = np.asarray(self.p_tx, dtype=float)
        self.p_rx = np.asarray(self.p_rx, dtype=float)
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError("position rectangle has inverted bounds")
        if not 0.0 <= self.speed_min <= self.speed_max:
            raise ValueError("speed range must satisfy 0 <= v_min <= v_max")
        if self.heading_min > self.heading_max:
            raise ValueError("heading range has inverted bounds")
        if np.array_equal(self.p_tx, self.p_rx):
            raise ValueError("transmitter and receiver coincide")
        if self.rcs <= 0:
            raise ValueError("rcs must be positive")


@dataclasses.dataclass
class ExperimentConfig:
    frame: FrameConfig
    prior: ScenePrior
    patterns: list
    trials: int
    calib_trials: int
    p_fa: float
    snr_grid_db: list = dataclasses.field(default_factory=list)
    ratio_grid_db: list = dataclasses.field(default_factory=list)
    aoa_errors_deg: list = dataclasses.field(default_factory=lambda: [0.0])
    fine_width: int = 2
    block_select_frac: float = 0.5
    anchor_guard: float = 1.0
    max_bistatic_range: float = 3000.0
    noise_psd_dbm_per_hz: float = -174.0
    noise_figure_db: float = 8.0
    pilot_seed: int = 0
    seed: int = 0
    n_doppler_bins: int = 1024
    n_delay_bins: int = 1024
    work_dtype: str | None = "complex64"
    gain_mode: str = "projection"
    out_dir: str = "results"

    def __post_init__(self):
        _validate_config(self)


def _validate_config(config):
    f = config.frame
    if config.seed < 0:
        raise ValueError("seed must be non-negative")
    if config.trials < 1:
        raise ValueError("trials must be at least 1")
    if config.calib_trials < 1:
        raise ValueError("calib_trials must be at least 1")
    if not 0.0 < config.p_fa < 1.0:
        raise ValueError("p_fa must be in (0, 1)")
    if config.fine_width < 1:
        raise ValueError("fine_width must be at least 1")
    if not 0.0 < config.block_select_frac <= 1.0:
        raise ValueError("block_select_frac must be in (0, 1]")
    if config.anchor_guard < 0.0:
        raise ValueError("anchor_guard must be non-negative")
    if config.max_bistatic_range <= 0:
        raise ValueError("max_bistatic_range must be positive")
    if not config.patterns:
        raise ValueError("need at least one pilot pattern")
    if config.work_dtype not in (None, "complex64", "complex128"):
        raise ValueError("work_dtype must be None, 'complex64' or 'complex128'")
    if config.gain_mode not in _GAIN_MODES:
        raise ValueError(f"gain_mode must be one of {_GAIN_MODES}")
    for freq_period, time_period in config.patterns:
        build_pilot_pattern(f, freq_period, time_period)
        # the pilot comb only resolves delay modulo 1/(freq_period*df);
        # the per-anchor branch spans one CP, which must fit inside it
        comb_period = 1.0 / (freq_period * f.subcarrier_spacing)
        if f.n_cp * f.t_sample > comb_period * (1.0 + 1e-12):
            raise ValueError(
                f"pattern {freq_period}x{time_period}: delay branch spans "
                "more than one pilot comb period; delays would be ambiguous"
            )
        # pilot symbol spacing must sample the fastest Doppler the prior
        # can produce at better than Nyquist
        doppler_limit = 0.5 / (time_period * f.t_symbol)
        max_doppler = 2.0 * config.prior.speed_max / f.wavelength
        if max_doppler >= doppler_limit:
            raise ValueError(
                f"pattern {freq_period}x{time_period}: prior speeds up to "
                f"{config.prior.speed_max} m/s alias in Doppler"
            )


def _work_dtype(config):
    return None if config.work_dtype is None else np.dtype(config.work_dtype)


def _pattern_label(pattern):
    return f"{pattern[0]}x{pattern[1]}"


def default_config():
    """Reference numerology and the Scenario-I style prior."""
    frame = FrameConfig(
        carrier_freq=30.0e9,
        subcarrier_spacing=200.0e3,
        cp_duration=1.0e-6,
        n_subcarriers=70,
        n_symbols=100,
    )
    prior = ScenePrior(
        x_min=-1000.0,
        x_max=1000.0,
        y_min=-1000.0,
        y_max=-500.0,
        speed_min=0.0,
        speed_max=30.0,
        heading_min=math.radians(-5.0),
        heading_max=math.radians(5.0),
        p_tx=[-1000.0, 0.0],
        p_rx=[1000.0, 0.0],
    )
    return ExperimentConfig(
        frame=frame,
        prior=prior,
        patterns=[(2, 4), (2, 2), (2, 1)],
        trials=200,
        calib_trials=10000,
        p_fa=1.0e-3,
        snr_grid_db=[-10.0, -5.0, 0.0, 5.0, 10.0],
        aoa_errors_deg=[0.0, 1.0, 5.0],
        seed=20240917,
    )


def scenario_two_config():
    """Short-baseline layout with an unobstructed direct path."""
    base = default_config()
    prior = ScenePrior(
        x_min=-200.0,
        x_max=200.0,
        y_min=-200.0,
        y_max=-100.0,
        speed_min=0.0,
        speed_max=30.0,
        heading_min=math.radians(-5.0),
        heading_max=math.radians(5.0),
        p_tx=[-200.0, 0.0],
        p_rx=[200.0, 0.0],
        los_blocked=False,
    )
    return dataclasses.replace(
        base,
        prior=prior,
        max_bistatic_range=1000.0,
        ratio_grid_db=[-30.0, -20.0, -10.0, 0.0, 10.0, 20.0, 30.0],
    )


_CONFIG_KEYS = {
    "frame", "prior", "patterns", "trials", "calib_trials", "p_fa",
    "snr_grid_db", "ratio_grid_db", "aoa_errors_deg", "fine_width",
    "block_select_frac", "anchor_guard", "max_bistatic_range_m", "noise_psd_dbm_per_hz",
    "noise_figure_db", "pilot_seed", "seed", "n_doppler_bins",
    "n_delay_bins", "work_dtype", "gain_mode", "out_dir",
}
_PRIOR_KEYS = {
    "x_min", "x_max", "y_min", "y_max", "speed_min_mps", "speed_max_mps",
    "heading_min_deg", "heading_max_deg", "p_tx", "p_rx", "los_blocked",
    "rcs_m2",
}


def config_from_dict(raw):
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    fr = raw["frame"]
    frame = FrameConfig(
        carrier_freq=float(fr["carrier_freq_hz"]),
        subcarrier_spacing=float(fr["subcarrier_spacing_hz"]),
        cp_duration=float(fr["cp_duration_s"]),
        n_subcarriers=int(fr["n_subcarriers"]),
        n_symbols=int(fr["n_symbols"]),
    )
    pr = raw["prior"]
    unknown = set(pr) - _PRIOR_KEYS
    if unknown:
        raise ValueError(f"unknown prior keys: {sorted(unknown)}")
    prior = ScenePrior(
        x_min=float(pr["x_min"]),
        x_max=float(pr["x_max"]),
        y_min=float(pr["y_min"]),
        y_max=float(pr["y_max"]),
        speed_min=float(pr["speed_min_mps"]),
        speed_max=float(pr["speed_max_mps"]),
        heading_min=math.radians(float(pr["heading_min_deg"])),
        heading_max=math.radians(float(pr["heading_max_deg"])),
        p_tx=[float(v) for v in pr["p_tx"]],
        p_rx=[float(v) for v in pr["p_rx"]],
        los_blocked=bool(pr.get("los_blocked", True)),
        rcs=float(pr.get("rcs_m2", 1.0)),
    )
    return ExperimentConfig(
        frame=frame,
        prior=prior,
        patterns=[tuple(int(v) for v in pair) for pair in raw["patterns"]],
        trials=int(raw["trials"]),
        calib_trials=int(raw["calib_trials"]),
        p_fa=float(raw["p_fa"]),
        snr_grid_db=[float(v) for v in raw.get("snr_grid_db", [])],
        ratio_grid_db=[float(v) for v in raw.get("ratio_grid_db", [])],
        aoa_errors_deg=[float(v) for v in raw.get("aoa_errors_deg", [0.0])],
        fine_width=int(raw.get("fine_width", 2)),
        block_select_frac=float(raw.get("block_select_frac", 0.5)),
        anchor_guard=float(raw.get("anchor_guard", 1.0)),
        max_bistatic_range=float(raw.get("max_bistatic_range_m", 3000.0)),
        noise_psd_dbm_per_hz=float(raw.get("noise_psd_dbm_per_hz", -174.0)),
        noise_figure_db=float(raw.get("noise_figure_db", 8.0)),
        pilot_seed=int(raw.get("pilot_seed", 0)),
        seed=int(raw.get("seed", 0)),
        n_doppler_bins=int(raw.get("n_doppler_bins", 1024)),
        n_delay_bins=int(raw.get("n_delay_bins", 1024)),
        work_dtype=raw.get("work_dtype", "complex64"),
        gain_mode=str(raw.get("gain_mode", "projection")),
        out_dir=str(raw.get("out_dir", "results")),
    )


def load_config(path):
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"config file {path} does not hold a mapping")
    return config_from_dict(raw)


def draw_scene(prior, seed, max_attempts=128):
    """One random scene from the prior, deterministic per seed.

    The measure-zero event of the target landing exactly on a terminal
    is handled by redrawing with an incremented sub-seed.
    """
    for attempt in range(max_attempts):
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), attempt)))
        x = rng.uniform(prior.x_min, prior.x_max)
        y = rng.uniform(prior.y_min, prior.y_max)
        speed = rng.uniform(prior.speed_min, prior.speed_max)
        heading = rng.uniform(prior.heading_min, prior.heading_max)
        target = np.array([x, y])
        if np.array_equal(target, prior.p_tx) or np.array_equal(target, prior.p_rx):
            continue
        return Scene(
            p_tx=prior.p_tx,
            p_rx=prior.p_rx,
            p_target=target,
            speed=float(speed),
            heading_offset=float(heading),
            rcs=prior.rcs,
            los_blocked=prior.los_blocked,
        )
    raise RuntimeError("scene draws kept landing on a terminal position")


def _trial_seeds(root, tag, pattern, x_value, trial):
    x_key = int(round(float(x_value) * 1000.0)) & 0xFFFFFFFF
    ss = np.random.SeedSequence((root, tag, pattern[0], pattern[1], x_key, trial))
    state = ss.generate_state(3, dtype=np.uint64)
    return int(state[0]), int(state[1]), int(state[2])


def _calibration_seed(root, pattern):
    ss = np.random.SeedSequence((root, _TAG_CALIB, pattern[0], pattern[1]))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclasses.dataclass(frozen=True)
class TrialRecord:
    """Everything needed to audit one Monte-Carlo trial.

    The scene (and so the truth columns) is recomputable from scene_seed
    alone via draw_scene on the same prior.
    """

    scene_seed: int
    data_seed: int
    noise_seed: int
    bistatic_range: float
    v_bis: float
    doppler: float
    true_block: int
    detected: bool
    estimate: object
    range_error: float
    velocity_error: float


@dataclasses.dataclass(frozen=True)
class RmsePoint:
    x_value: float
    pattern: str
    n_trials: int
    n_detected: int
    rmse_range_m: float | None
    rmse_velocity_mps: float | None


@dataclasses.dataclass(frozen=True)
class AoaPoint:
    snr_db: float
    aoa_error_deg: float
    pattern: str
    n_trials: int
    n_detected: int
    rmse_velocity_mps: float | None


def _true_block(prop, cfg):
    return int(prop.delay_nlos / (cfg.n_cp * cfg.t_sample)) + 1


def _record(seeds, prop, cfg, est):
    detected = est is not None
    nan = float("nan")
    return TrialRecord(
        scene_seed=seeds[0],
        data_seed=seeds[1],
        noise_seed=seeds[2],
        bistatic_range=prop.bistatic_range,
        v_bis=prop.v_bis,
        doppler=prop.doppler,
        true_block=_true_block(prop, cfg),
        detected=detected,
        estimate=est,
        range_error=est.bistatic_range - prop.bistatic_range if detected else nan,
        velocity_error=est.velocity - prop.v_bis if detected else nan,
    )


def _unit_stream(stream):
    """Rescale so the noise is unit variance and calibrated thresholds
    apply directly; the map statistic is linear in stream power."""
    sigma = math.sqrt(stream.noise_variance)
    return SampleStream(stream.samples / sigma, stream.cfg, 1.0)


def _rmse(errors):
    vals = [e for e in errors if math.isfinite(e)]
    if not vals:
        return None
    return math.sqrt(math.fsum(v * v for v in vals) / len(vals))


def _aggregate(x_value, pattern, records):
    det = [r for r in records if r.detected]
    return RmsePoint(
        x_value=float(x_value),
        pattern=_pattern_label(pattern),
        n_trials=len(records),
        n_detected=len(det),
        rmse_range_m=_rmse(r.range_error for r in det),
        rmse_velocity_mps=_rmse(r.velocity_error for r in det),
    )


def _run_point(runner, n_trials, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(runner, range(n_trials)))
    return [runner(t) for t in range(n_trials)]


def load_or_calibrate(config, pattern, cache_dir=None):
    """Fetch the thresholds for one pattern, calibrating on a cache miss.

    The cache key is a fingerprint over everything that determines the
    result, so stale files for other settings are never picked up.
    """
    pat_obj = build_pilot_pattern(config.frame, *pattern)
    seed = _calibration_seed(config.seed, pattern)
    dtype = _work_dtype(config)
    fp = calibration_fingerprint(
        config.frame, pat_obj, config.p_fa, config.calib_trials,
        config.max_bistatic_range, seed, config.n_doppler_bins,
        config.n_delay_bins, dtype,
    )
    directory = cache_dir if cache_dir is not None else config.out_dir
    path = os.path.join(directory, f"calibration_{_pattern_label(pattern)}_{fp[:12]}.txt")
    if os.path.exists(path):
        fp_back, cal = load_calibration(path)
        if fp_back == fp:
            log.info("loaded calibration for %s from %s", _pattern_label(pattern), path)
            return cal
    log.info(
        "calibrating %s: %d noise-only trials at p_fa=%g",
        _pattern_label(pattern), config.calib_trials, config.p_fa,
    )
    cal = calibrate_threshold(
        config.frame, pat_obj, config.p_fa, config.calib_trials,
        config.max_bistatic_range, seed=seed,
        n_doppler_bins=config.n_doppler_bins, n_delay_bins=config.n_delay_bins,
        work_dtype=dtype,
    )
    os.makedirs(directory, exist_ok=True)
    save_calibration(path, cal, fp)
    return cal


def _snr_trial(config, pattern, pat_obj, kappa, dtype, snr_db, trial):
    seeds = _trial_seeds(config.seed, _TAG_SNR, pattern, snr_db, trial)
    scene = draw_scene(config.prior, seeds[0])
    prop = derive_propagation(scene, config.frame)
    frame = generate_frame(config.frame, pat_obj, config.pilot_seed, seeds[1])
    stream = synthesize_rx(
        frame, prop, noise=set_snr(prop, snr_db),
        noise_seed=np.random.default_rng(seeds[2]),
    )
    est = detect_and_localize(
        _unit_stream(stream), frame, kappa, config.max_bistatic_range,
        prop.baseline_dist, prop.aoa,
        fine_width=config.fine_width, block_select_frac=config.block_select_frac,
        anchor_guard=config.anchor_guard,
        n_doppler_bins=config.n_doppler_bins, n_delay_bins=config.n_delay_bins,
        work_dtype=dtype,
    )
    return _record(seeds, prop, config.frame, est)


def run_rmse_sweep(config, out_path=None, threads=1, return_records=False):
    """Range/velocity RMSE versus SNR for every configured pattern.

    RMSE is aggregated over detected trials only; a point with zero
    detections keeps its row with the RMSE fields absent.
    """
    if not config.snr_grid_db:
        raise ValueError("config.snr_grid_db is empty")
    dtype = _work_dtype(config)
    points = []
    records_out = {}
    for pattern in config.patterns:
        pat_obj = build_pilot_pattern(config.frame, *pattern)
        cal = load_or_calibrate(config, pattern)
        for snr_db in config.snr_grid_db:
            runner = functools.partial(
                _snr_trial, config, pattern, pat_obj, cal.kappa, dtype, snr_db
            )
            records = _run_point(runner, config.trials, threads)
            point = _aggregate(snr_db, pattern, records)
            points.append(point)
            records_out[(point.pattern, float(snr_db))] = records
            log.info(
                "pattern %s snr %+.1f dB: %d/%d detected, rmse_range=%s m, rmse_velocity=%s m/s",
                point.pattern, snr_db, point.n_detected, point.n_trials,
                point.rmse_range_m, point.rmse_velocity_mps,
            )
    if out_path is not None:
        write_rmse_csv(out_path, points)
    if return_records:
        return points, records_out
    return points


def _aoa_trial(config, pattern, pat_obj, kappa, dtype, errors_rad, snr_db, trial):
    seeds = _trial_seeds(config.seed, _TAG_AOA, pattern, snr_db, trial)
    scene = draw_scene(config.prior, seeds[0])
    prop = derive_propagation(scene, config.frame)
    frame = generate_frame(config.frame, pat_obj, config.pilot_seed, seeds[1])
    stream = synthesize_rx(
        frame, prop, noise=set_snr(prop, snr_db),
        noise_seed=np.random.default_rng(seeds[2]),
    )
    est = detect_and_localize(
        _unit_stream(stream), frame, kappa, config.max_bistatic_range,
        prop.baseline_dist, prop.aoa,
        fine_width=config.fine_width, block_select_frac=config.block_select_frac,
        anchor_guard=config.anchor_guard,
        n_doppler_bins=config.n_doppler_bins, n_delay_bins=config.n_delay_bins,
        work_dtype=dtype,
    )
    if est is None:
        return False, tuple(float("nan") for _ in errors_rad)
    # detection, delay and Doppler never see the arrival angle, so one
    # detection serves every mismatch value; only the geometry split and
    # the Doppler-to-speed conversion are redone
    verrs = []
    for err in errors_rad:
        geom = estimate_geometry(est.bistatic_range, prop.baseline_dist, prop.aoa + err)
        vel, bad = velocity_from_doppler(est.doppler, geom.bistatic_angle, config.frame.wavelength)
        verrs.append(vel - prop.v_bis if not bad else float("nan"))
    return True, tuple(verrs)


def run_aoa_study(config, out_path=None, threads=1):
    """Velocity RMSE under a deliberately mis-measured arrival angle.

    Applies each configured angle error to the estimated geometry at
    every configured SNR and pattern.
    """
    if not config.snr_grid_db:
        raise ValueError("config.snr_grid_db is empty")
    if not config.aoa_errors_deg:
        raise ValueError("config.aoa_errors_deg is empty")
    dtype = _work_dtype(config)
    errors_rad = [math.radians(e) for e in config.aoa_errors_deg]
    rows = []
    for pattern in config.patterns:
        pat_obj = build_pilot_pattern(config.frame, *pattern)
        cal = load_or_calibrate(config, pattern)
        for snr_db in config.snr_grid_db:
            runner = functools.partial(
                _aoa_trial, config, pattern, pat_obj, cal.kappa, dtype, errors_rad, snr_db
            )
            results = _run_point(runner, config.trials, threads)
            n_detected = sum(1 for det, _ in results if det)
            for i, err_deg in enumerate(config.aoa_errors_deg):
                rmse = _rmse(verrs[i] for det, verrs in results if det)
                rows.append(AoaPoint(
                    snr_db=float(snr_db),
                    aoa_error_deg=float(err_deg),
                    pattern=_pattern_label(pattern),
                    n_trials=len(results),
                    n_detected=n_detected,
                    rmse_velocity_mps=rmse,
                ))
                log.info(
                    "pattern %s snr %+.1f dB aoa_err %.1f deg: %d/%d detected, rmse_velocity=%s m/s",
                    _pattern_label(pattern), snr_db, err_deg, n_detected,
                    len(results), rmse,
                )
    if out_path is not None:
        write_aoa_csv(out_path, rows)
    return rows


def _ratio_trial(config, pattern, pat_obj, cal, dtype, ratio_db, trial):
    seeds = _trial_seeds(config.seed, _TAG_RATIO, pattern, ratio_db, trial)
    scene = draw_scene(config.prior, seeds[0])
    prop = derive_propagation(scene, config.frame)
    # pin the reflected-to-direct power ratio, keeping the phases physical
    mag = abs(prop.gain_los) * 10.0 ** (ratio_db / 20.0)
    prop = dataclasses.replace(
        prop, gain_nlos=prop.gain_nlos * (mag / abs(prop.gain_nlos))
    )
    frame = generate_frame(config.frame, pat_obj, config.pilot_seed, seeds[1])
    noise = NoiseModel(config.noise_psd_dbm_per_hz, config.noise_figure_db)
    stream = synthesize_rx(frame, prop, noise=noise, noise_seed=np.random.default_rng(seeds[2]))
    sigma = math.sqrt(stream.noise_variance)
    true_los = (prop.gain_los / sigma, prop.delay_los) if config.gain_mode == "oracle" else None
    result = detect_and_cancel_los(
        _unit_stream(stream), frame, cal.kappa, cal.kappa_single,
        config.max_bistatic_range, prop.baseline_dist, prop.aoa,
        gain_mode=config.gain_mode, true_los=true_los,
        fine_width=config.fine_width, block_select_frac=config.block_select_frac,
        anchor_guard=config.anchor_guard,
        n_doppler_bins=config.n_doppler_bins, n_delay_bins=config.n_delay_bins,
        work_dtype=dtype,
    )
    return _record(seeds, prop, config.frame, result.target)


def run_ratio_sweep(config, out_path=None, threads=1, return_records=False):
    """Reflected-path RMSE versus the reflected-to-direct power ratio.

    Runs the full direct-path detect/cancel/estimate chain per trial, so
    both failure modes show up: the reflection drowning at low ratios
    and the canceller locking onto the wrong path at high ones.
    """
    if config.prior.los_blocked:
        raise ValueError("ratio sweep needs a prior with the direct path present")
    if not config.ratio_grid_db:
        raise ValueError("config.ratio_grid_db is empty")
    dtype = _work_dtype(config)
    points = []
    records_out = {}
    for pattern in config.patterns:
        pat_obj = build_pilot_pattern(config.frame, *pattern)
        cal = load_or_calibrate(config, pattern)
        for ratio_db in config.ratio_grid_db:
            runner = functools.partial(
                _ratio_trial, config, pattern, pat_obj, cal, dtype, ratio_db
            )
            records = _run_point(runner, config.trials, threads)
            point = _aggregate(ratio_db, pattern, records)
            points.append(point)
            records_out[(point.pattern, float(ratio_db))] = records
            log.info(
                "pattern %s ratio %+.1f dB: %d/%d detected, rmse_range=%s m",
                point.pattern, ratio_db, point.n_detected, point.n_trials,
                point.rmse_range_m,
            )
    if out_path is not None:
        write_rmse_csv(out_path, points)
    if return_records:
        return points, records_out
    return points


def _noiseless_trial(config, pattern, pat_obj, dtype, trial):
    seeds = _trial_seeds(config.seed, _TAG_NOISELESS, pattern, 0.0, trial)
    scene = draw_scene(config.prior, seeds[0])
    prop = derive_propagation(scene, config.frame)
    frame = generate_frame(config.frame, pat_obj, config.pilot_seed, seeds[1])
    stream = synthesize_rx(frame, prop, noise=None)
    # with zero noise any positive peak is signal; the relative block
    # selection does the locating
    est = detect_and_localize(
        stream, frame, 0.0, config.max_bistatic_range, prop.baseline_dist, prop.aoa,
        fine_width=config.fine_width, block_select_frac=config.block_select_frac,
        anchor_guard=config.anchor_guard,
        n_doppler_bins=config.n_doppler_bins, n_delay_bins=config.n_delay_bins,
        work_dtype=dtype,
    )
    return stream, frame, prop, _record(seeds, prop, config.frame, est)


def run_noiseless_check(config, n_scenes, pattern=None, threads=1):
    """Noiseless end-to-end trials; returns the TrialRecords."""
    pattern = pattern if pattern is not None else config.patterns[0]
    pat_obj = build_pilot_pattern(config.frame, *pattern)
    dtype = _work_dtype(config)

    def runner(trial):
        return _noiseless_trial(config, pattern, pat_obj, dtype, trial)[3]

    return _run_point(runner, n_scenes, threads)


def pilot_only_frame(frame):
    """Copy of the frame with every data symbol zeroed.

    This is the reference signal the sensing receiver can actually
    reconstruct without decoding the payload.
    """
    grid = np.zeros_like(frame.symbols)
    ix = np.ix_(frame.pattern.sym_idx, frame.pattern.sub_idx)
    grid[ix] = frame.symbols[ix]
    return dataclasses.replace(frame, symbols=grid)


@dataclasses.dataclass(frozen=True)
class OracleResult:
    delay: float
    doppler: float
    metric: float
    at_boundary: bool


def brute_force_oracle(stream, frame, delay_grid, doppler_grid):
    """Dense matched-filter grid search, independent of the DFT pipeline.

    Correlates the raw samples against delayed/Doppler-shifted copies of
    the pilot-only waveform and returns the grid argmax. at_boundary
    flags a maximum on the grid edge, i.e. a grid that likely excludes
    the true peak.
    """
    delay_grid = np.asarray(delay_grid, dtype=float)
    doppler_grid = np.asarray(doppler_grid, dtype=float)
    if delay_grid.size < 1 or doppler_grid.size < 1:
        raise ValueError("delay and doppler grids must be non-empty")
    cfg = stream.cfg
    reference = pilot_only_frame(frame)
    t = np.arange(cfg.n_samples_frame) * cfg.t_sample
    shift_kernel = np.exp(-2j * np.pi * np.outer(doppler_grid, t))
    best_metric, best_i, best_j = -1.0, 0, 0
    for i, tau in enumerate(delay_grid):
        template = eval_baseband(reference, t - tau)
        correlated = shift_kernel @ (stream.samples * np.conj(template))
        j = int(np.argmax(np.abs(correlated)))
        metric = float(np.abs(correlated[j]))
        if metric > best_metric:
            best_metric, best_i, best_j = metric, i, j
    at_boundary = (
        best_i in (0, delay_grid.size - 1) or best_j in (0, doppler_grid.size - 1)
    )
    return OracleResult(
        delay=float(delay_grid[best_i]),
        doppler=float(doppler_grid[best_j]),
        metric=best_metric,
        at_boundary=at_boundary,
    )


@dataclasses.dataclass(frozen=True)
class OracleCheckRow:
    scene_seed: int
    pipeline_delay: float
    pipeline_doppler: float
    oracle_delay: float
    oracle_doppler: float
    delay_gap: float
    doppler_gap: float
    at_boundary: bool


def run_oracle_check(
    config,
    n_scenes,
    pattern=None,
    delay_half_span=3.0e-8,
    delay_step=1.0e-9,
    doppler_half_span=50.0,
    doppler_step=2.0,
    threads=1,
):
    """Pipeline versus brute-force agreement on noiseless scenes.

    The oracle grid is centered on the true delay/Doppler of each drawn
    scene so it always covers the truth.  Only the reference cells are
    transmitted: the matched filter models just those, and payload
    symbols on the other cells would push its continuum peak a few Hz
    off while leaving the pilot-cell pipeline untouched, turning the
    comparison into a measurement of payload leakage rather than of the
    two estimators.
    """
    pattern = pattern if pattern is not None else config.patterns[0]
    pat_obj = build_pilot_pattern(config.frame, *pattern)
    dtype = _work_dtype(config)

    def runner(trial):
        seeds = _trial_seeds(config.seed, _TAG_NOISELESS, pattern, 0.0, trial)
        scene = draw_scene(config.prior, seeds[0])
        prop = derive_propagation(scene, config.frame)
        frame = generate_frame(config.frame, pat_obj, config.pilot_seed, seeds[1])
        stream = synthesize_rx(pilot_only_frame(frame), prop, noise=None)
        est = detect_and_localize(
            stream, frame, 0.0, config.max_bistatic_range, prop.baseline_dist,
            prop.aoa, fine_width=config.fine_width,
            block_select_frac=config.block_select_frac,
            anchor_guard=config.anchor_guard,
            n_doppler_bins=config.n_doppler_bins,
            n_delay_bins=config.n_delay_bins, work_dtype=dtype,
        )
        if est is None:
            raise RuntimeError("noiseless trial failed to detect; cannot compare")
        delay_grid = prop.delay_nlos + np.arange(
            -delay_half_span, delay_half_span + delay_step / 2, delay_step
        )
        doppler_grid = prop.doppler + np.arange(
            -doppler_half_span, doppler_half_span + doppler_step / 2, doppler_step
        )
        oracle = brute_force_oracle(stream, frame, delay_grid, doppler_grid)
        return OracleCheckRow(
            scene_seed=seeds[0],
            pipeline_delay=est.delay,
            pipeline_doppler=est.doppler,
            oracle_delay=oracle.delay,
            oracle_doppler=oracle.doppler,
            delay_gap=abs(est.delay - oracle.delay),
            doppler_gap=abs(est.doppler - oracle.doppler),
            at_boundary=oracle.at_boundary,
        )

    rows = _run_point(runner, n_scenes, threads)
    for row in rows:
        log.info(
            "scene %d: delay gap %.3g s, doppler gap %.3g Hz%s",
            row.scene_seed, row.delay_gap, row.doppler_gap,
            " (oracle at grid boundary)" if row.at_boundary else "",
        )
    return rows


def _open_csv(path):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return open(path, "w", newline="")


def write_rmse_csv(path, points):
    with _open_csv(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RMSE_CSV_HEADER)
        for p in points:
            writer.writerow([
                repr(float(p.x_value)),
                p.pattern,
                p.n_trials,
                p.n_detected,
                "" if p.rmse_range_m is None else repr(p.rmse_range_m),
                "" if p.rmse_velocity_mps is None else repr(p.rmse_velocity_mps),
            ])
    log.info("wrote %s", path)


def write_aoa_csv(path, rows):
    with _open_csv(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AOA_CSV_HEADER)
        for r in rows:
            writer.writerow([
                repr(float(r.snr_db)),
                repr(float(r.aoa_error_deg)),
                r.pattern,
                r.n_trials,
                r.n_detected,
                "" if r.rmse_velocity_mps is None else repr(r.rmse_velocity_mps),
            ])
    log.info("wrote %s", path)

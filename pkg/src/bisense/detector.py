"""Sliding-window target detection and localization.

The receiver does not know which cyclic-prefix block the target echo
falls in, so it demodulates the frame at a ladder of trial offsets, one
per CP block, and tests the strongest delay-Doppler map peak against a
calibrated threshold.  A relative first crossing of the ladder then
pins down a coarse block; a sample-by-sample search over a short anchor
window refines the timing before the peak is interpolated and mapped
back to physical delay, Doppler, and bistatic geometry.

Thresholds are calibrated on noise-only streams at unit noise variance.
The map peak statistic scales linearly with the noise variance, so a
stream pre-scaled to unit variance can be tested directly against the
calibrated value.
"""

import dataclasses
import hashlib
import logging
import math

import numpy as np

from .channel import SampleStream
from .receiver import (
    DelayDopplerMap,
    demod_window,
    interpolate_peak,
    ls_estimates,
    map_peak_value,
    periodogram,
)
from .waveform import SPEED_OF_LIGHT, generate_frame

log = logging.getLogger(__name__)

# cos(half bistatic angle) below which the Doppler-to-speed division is
# meaningless (target on the baseline)
_MIN_HALF_ANGLE_COS = 1e-6


@dataclasses.dataclass(frozen=True)
class HypothesisSweep:
    """Peak statistics of the coarse offset ladder."""

    offsets: np.ndarray
    peak_values: np.ndarray

    def first_crossing(self, threshold):
        """Index of the first block whose peak reaches the threshold."""
        hits = np.nonzero(self.peak_values >= threshold)[0]
        return int(hits[0]) if hits.size else None


@dataclasses.dataclass(frozen=True)
class GeometrySolution:
    d_tx: float
    d_rx: float
    bistatic_angle: float
    unstable: bool


@dataclasses.dataclass(frozen=True)
class TargetEstimate:
    coarse_block: int
    anchor: int
    delay: float
    doppler: float
    bistatic_range: float
    d_tx: float
    d_rx: float
    bistatic_angle: float
    velocity: float
    peak_value: float
    geometry_unstable: bool
    velocity_unreliable: bool
    interp_degenerate: bool
    ddmap: DelayDopplerMap | None = None


@dataclasses.dataclass(frozen=True)
class ThresholdCalibration:
    kappa: float
    kappa_single: float
    p_fa: float
    n_trials: int
    n_hypotheses: int
    peak_values: np.ndarray | None = None

    @property
    def maxima(self):
        if self.peak_values is None:
            return None
        return self.peak_values.max(axis=1)


@dataclasses.dataclass(frozen=True)
class CancellationResult:
    los_detected: bool
    los_delay: float
    los_gain: complex | None
    residual_db: float
    target: TargetEstimate | None
    used_fallback: bool


def hypothesis_count(cfg, max_bistatic_range):
    """Number of CP blocks needed to cover the requested range."""
    if max_bistatic_range <= 0:
        raise ValueError("max_bistatic_range must be positive")
    return int(math.ceil(max_bistatic_range / (SPEED_OF_LIGHT * cfg.cp_duration)))


def _map_at(stream, frame, offset, n_doppler_bins, n_delay_bins, work_dtype):
    grid = ls_estimates(demod_window(stream, offset), frame)
    return periodogram(grid, n_doppler_bins, n_delay_bins, work_dtype=work_dtype)


def sweep_hypotheses(
    stream,
    frame,
    max_bistatic_range,
    n_doppler_bins=1024,
    n_delay_bins=1024,
    work_dtype=None,
):
    """Evaluate the map peak at every CP-block trial offset."""
    cfg = stream.cfg
    n_hyp = hypothesis_count(cfg, max_bistatic_range)
    offsets = cfg.n_cp * np.arange(1, n_hyp + 1)
    peaks = np.empty(n_hyp)
    for i, offset in enumerate(offsets):
        grid = ls_estimates(demod_window(stream, int(offset)), frame)
        peaks[i] = map_peak_value(grid, n_doppler_bins, n_delay_bins, work_dtype)
    return HypothesisSweep(offsets=offsets, peak_values=peaks)


def doppler_from_bin(doppler_bin, pattern, cfg, n_doppler_bins):
    """Signed (fractional) Doppler bin to a frequency in Hz."""
    return doppler_bin / (n_doppler_bins * pattern.time_period * cfg.t_symbol)


def delay_from_bin(delay_bin, anchor, pattern, cfg, n_delay_bins):
    """Fractional delay bin plus its anchor to an absolute delay.

    The map only resolves the delay modulo the pilot comb period, so the
    absolute value is recovered by picking the alias branch closest to
    the midpoint of the delay interval the anchor was selected for,
    namely [anchor, anchor + n_cp] samples.
    """
    comb = pattern.freq_period * cfg.subcarrier_spacing
    x = (delay_bin / n_delay_bins) % 1.0
    psi_center = 0.5 * cfg.cp_duration - 2.0 * cfg.n_cp * cfg.t_sample
    branch = math.floor(comb * psi_center - x + 0.5)
    psi = (x + branch) / comb
    return (anchor + 2 * cfg.n_cp) * cfg.t_sample + psi


def estimate_geometry(bistatic_range, baseline_dist, aoa):
    """Split a bistatic range into the two path legs.

    The ellipse with the transmitter and receiver as foci intersects the
    arrival direction at a unique point as long as the range exceeds the
    baseline; the law of cosines then gives the bistatic angle.
    """
    nan = float("nan")
    denom = bistatic_range - baseline_dist * math.cos(aoa)
    scale = max(abs(bistatic_range), abs(baseline_dist), 1.0)
    if bistatic_range <= baseline_dist or abs(denom) < 1e-12 * scale:
        return GeometrySolution(nan, nan, nan, True)
    d_rx = (bistatic_range**2 - baseline_dist**2) / (2.0 * denom)
    d_tx = bistatic_range - d_rx
    if d_rx <= 0.0 or d_tx <= 0.0:
        return GeometrySolution(nan, nan, nan, True)
    cos_beta = (d_tx**2 + d_rx**2 - baseline_dist**2) / (2.0 * d_tx * d_rx)
    beta = math.acos(min(1.0, max(-1.0, cos_beta)))
    return GeometrySolution(d_tx, d_rx, beta, False)


def velocity_from_doppler(doppler, bistatic_angle, wavelength):
    """Doppler shift to bistatic speed; returns (value, unreliable)."""
    half_cos = math.cos(bistatic_angle / 2.0)
    if not math.isfinite(half_cos) or half_cos < _MIN_HALF_ANGLE_COS:
        return float("nan"), True
    return doppler * wavelength / (2.0 * half_cos), False


def _estimate_from_map(ddmap, anchor, coarse_block, baseline_dist, aoa, keep_map):
    cfg = ddmap.cfg
    peak = interpolate_peak(ddmap)
    doppler = doppler_from_bin(peak.doppler_bin, ddmap.pattern, cfg, ddmap.n_doppler_bins)
    delay = delay_from_bin(peak.delay_bin, anchor, ddmap.pattern, cfg, ddmap.n_delay_bins)
    bistatic_range = SPEED_OF_LIGHT * delay
    geom = estimate_geometry(bistatic_range, baseline_dist, aoa)
    velocity, v_bad = velocity_from_doppler(doppler, geom.bistatic_angle, cfg.wavelength)
    return TargetEstimate(
        coarse_block=coarse_block,
        anchor=anchor,
        delay=delay,
        doppler=doppler,
        bistatic_range=bistatic_range,
        d_tx=geom.d_tx,
        d_rx=geom.d_rx,
        bistatic_angle=geom.bistatic_angle,
        velocity=velocity,
        peak_value=ddmap.peak_value,
        geometry_unstable=geom.unstable,
        velocity_unreliable=v_bad or geom.unstable,
        interp_degenerate=peak.degenerate_doppler or peak.degenerate_delay,
        ddmap=ddmap if keep_map else None,
    )


def detect_and_localize(
    stream,
    frame,
    threshold,
    max_bistatic_range,
    baseline_dist,
    aoa,
    fine_width=2,
    block_select_frac=0.5,
    anchor_guard=1.0,
    n_doppler_bins=1024,
    n_delay_bins=1024,
    work_dtype=None,
    keep_map=False,
):
    """Full detection chain; returns None if no block crosses the threshold.

    Detection is declared when the strongest ladder peak reaches the
    calibrated threshold.  The coarse block is then the first block whose
    peak reaches block_select_frac times that strongest peak.  An echo in
    block h leaks into neighbouring blocks through partially overlapping
    demodulation windows: the block before h always collects at least
    ~64% of the peak power while blocks two or more early stay below
    ~36%, so a relative cut at 0.5 lands on h-1 or h (occasionally h-2
    when the echo sits early in its block, still inside the fine search
    span below).  An absolute cut at the noise threshold would instead
    fire on the far skirt of a strong echo several blocks early.

    After the coarse block h is found, every sample-level anchor k in
    [(h-1)*n_cp, (h+fine_width-1)*n_cp) is tried by demodulating at
    offset k + n_cp, and the anchor with the strongest map peak wins
    (earliest anchor on ties), restricted to anchors that are consistent
    with their own delay estimate.  An anchor hypothesises an echo in
    [k, k + n_cp] samples, so an unwrapped delay outside that span (plus
    anchor_guard samples of interpolation slack) means the window caught
    a partial echo whose comb phase may alias by a full comb period;
    such anchors are skipped.  If every anchor is inconsistent the raw
    argmax is used.  The winning map is interpolated and mapped to
    physical coordinates.
    """
    if fine_width < 1:
        raise ValueError("fine_width must be at least 1")
    if not 0.0 < block_select_frac <= 1.0:
        raise ValueError("block_select_frac must be in (0, 1]")
    if anchor_guard < 0.0:
        raise ValueError("anchor_guard must be non-negative")
    cfg = stream.cfg
    sweep = sweep_hypotheses(
        stream, frame, max_bistatic_range, n_doppler_bins, n_delay_bins, work_dtype
    )
    top = float(sweep.peak_values.max())
    if top < threshold:
        return None
    hit = sweep.first_crossing(block_select_frac * top)
    block = hit + 1
    first = (block - 1) * cfg.n_cp
    guard = anchor_guard * cfg.t_sample
    best_map, best_anchor = None, -1
    raw_map, raw_anchor = None, -1
    for anchor in range(first, first + fine_width * cfg.n_cp):
        ddmap = _map_at(
            stream, frame, anchor + cfg.n_cp, n_doppler_bins, n_delay_bins, work_dtype
        )
        if raw_map is None or ddmap.peak_value > raw_map.peak_value:
            raw_map, raw_anchor = ddmap, anchor
        delay = delay_from_bin(
            interpolate_peak(ddmap).delay_bin, anchor, ddmap.pattern, cfg, n_delay_bins
        )
        if not anchor * cfg.t_sample - guard <= delay <= (anchor + cfg.n_cp) * cfg.t_sample + guard:
            continue
        if best_map is None or ddmap.peak_value > best_map.peak_value:
            best_map, best_anchor = ddmap, anchor
    if best_map is None:
        best_map, best_anchor = raw_map, raw_anchor
    return _estimate_from_map(best_map, best_anchor, block, baseline_dist, aoa, keep_map)


def calibrate_threshold(
    cfg,
    pattern,
    p_fa,
    n_trials,
    max_bistatic_range,
    seed=0,
    n_doppler_bins=1024,
    n_delay_bins=1024,
    work_dtype=None,
):
    """Noise-only Monte Carlo calibration of the detection thresholds.

    Each trial draws one unit-variance noise stream of a full frame and
    runs the complete offset ladder on it, so the correlation between
    overlapping demodulation windows is captured rather than assumed
    away.  kappa is the (1 - p_fa) quantile of the per-trial maximum
    statistic; kappa_single is the same quantile of the per-map peaks,
    for tests run on a single map such as the post-cancellation stage.
    """
    if p_fa <= 0.0 or p_fa >= 1.0:
        raise ValueError("p_fa must be in (0, 1)")
    if n_trials * p_fa < 10.0:
        raise ValueError(
            "n_trials too small for requested p_fa; need n_trials * p_fa >= 10"
        )
    frame = generate_frame(cfg, pattern, pilot_seed=0, data_seed=0)
    n_hyp = hypothesis_count(cfg, max_bistatic_range)
    n_frame = cfg.n_samples_frame
    peaks = np.empty((n_trials, n_hyp))
    for trial in range(n_trials):
        rng = np.random.default_rng(np.random.SeedSequence((seed, trial)))
        raw = rng.standard_normal(2 * n_frame)
        samples = (raw[:n_frame] + 1j * raw[n_frame:]) / np.sqrt(2.0)
        stream = SampleStream(samples=samples, cfg=cfg, noise_variance=1.0)
        sweep = sweep_hypotheses(
            stream, frame, max_bistatic_range, n_doppler_bins, n_delay_bins, work_dtype
        )
        peaks[trial] = sweep.peak_values
        if trial and trial % 1000 == 0:
            log.info("calibration trial %d / %d", trial, n_trials)
    kappa = float(np.quantile(peaks.max(axis=1), 1.0 - p_fa, method="higher"))
    kappa_single = float(np.quantile(peaks.ravel(), 1.0 - p_fa, method="higher"))
    return ThresholdCalibration(
        kappa=kappa,
        kappa_single=kappa_single,
        p_fa=p_fa,
        n_trials=n_trials,
        n_hypotheses=n_hyp,
        peak_values=peaks,
    )


def calibration_fingerprint(
    cfg,
    pattern,
    p_fa,
    n_trials,
    max_bistatic_range,
    seed,
    n_doppler_bins=1024,
    n_delay_bins=1024,
    work_dtype=None,
):
    """Hash of everything that determines a calibration result."""
    dtype_name = np.dtype(work_dtype).name if work_dtype is not None else "complex128"
    parts = (
        repr(cfg.carrier_freq),
        repr(cfg.subcarrier_spacing),
        repr(cfg.cp_duration),
        repr(cfg.n_subcarriers),
        repr(cfg.n_symbols),
        repr(pattern.freq_period),
        repr(pattern.time_period),
        repr(p_fa),
        repr(n_trials),
        repr(max_bistatic_range),
        repr(seed),
        repr(n_doppler_bins),
        repr(n_delay_bins),
        dtype_name,
    )
    return hashlib.sha256("|".join(parts).encode()).hexdigest()


def save_calibration(path, calibration, fingerprint):
    lines = [
        f"fingerprint={fingerprint}",
        f"kappa={calibration.kappa!r}",
        f"kappa_single={calibration.kappa_single!r}",
        f"p_fa={calibration.p_fa!r}",
        f"n_trials={calibration.n_trials}",
        f"n_hypotheses={calibration.n_hypotheses}",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_calibration(path):
    """Read back a saved calibration; returns (fingerprint, calibration).

    The per-trial peak matrix is not serialized, so the loaded object
    carries thresholds only.
    """
    fields = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                key, _, value = line.partition("=")
                fields[key] = value
    calibration = ThresholdCalibration(
        kappa=float(fields["kappa"]),
        kappa_single=float(fields["kappa_single"]),
        p_fa=float(fields["p_fa"]),
        n_trials=int(fields["n_trials"]),
        n_hypotheses=int(fields["n_hypotheses"]),
        peak_values=None,
    )
    return fields["fingerprint"], calibration


def _los_gain_estimate(gain_mode, grid, signature, delay, cfg, true_los):
    if gain_mode == "projection":
        return complex(np.mean(grid.values * np.conj(signature)))
    if gain_mode == "model":
        amp = cfg.wavelength / (4.0 * math.pi * SPEED_OF_LIGHT * delay)
    elif gain_mode == "model_4x":
        amp = cfg.wavelength / (math.pi * SPEED_OF_LIGHT * delay)
    elif gain_mode == "oracle":
        return complex(true_los[0])
    else:
        raise ValueError(f"unknown gain_mode: {gain_mode!r}")
    return amp * np.exp(-2j * np.pi * cfg.carrier_freq * delay)


def detect_and_cancel_los(
    stream,
    frame,
    threshold,
    threshold_single,
    max_bistatic_range,
    baseline_dist,
    aoa,
    gain_mode="model",
    true_los=None,
    fine_width=2,
    block_select_frac=0.5,
    anchor_guard=1.0,
    n_doppler_bins=1024,
    n_delay_bins=1024,
    work_dtype=None,
    keep_map=False,
):
    """Two-stage detection when a direct path dominates the echo.

    Stage one runs the plain detection chain, which locks onto the
    strongest return.  If its delay is consistent with the known
    baseline (within one CP block of baseline/c), the direct path is
    reconstructed from the chosen gain model and subtracted from the
    least-squares grid; the cleaned grid is then tested once against
    threshold_single.  If the stage-one detection is not consistent with
    the direct path, it is returned unchanged as the target (fallback).

    residual_db reports the energy of the cleaned pilot grid relative to
    the grid before subtraction, so for a direct-path-only stream it
    measures the cancellation quality directly, while in a mixed scene
    it is the fraction of energy left for the sensing stage.

    gain_mode selects how the direct-path amplitude is obtained:
    "model" uses the free-space gain at the estimated delay,
    "model_4x" the same with a 4x larger amplitude, "projection"
    fits the amplitude to the grid itself, and "oracle" takes the exact
    (gain, delay) pair from true_los.
    """
    nan = float("nan")
    if gain_mode == "oracle" and true_los is None:
        raise ValueError("oracle gain_mode requires true_los=(gain, delay)")
    cfg = stream.cfg
    stage1 = detect_and_localize(
        stream,
        frame,
        threshold,
        max_bistatic_range,
        baseline_dist,
        aoa,
        fine_width,
        block_select_frac,
        anchor_guard,
        n_doppler_bins,
        n_delay_bins,
        work_dtype,
        keep_map=False,
    )
    if stage1 is None:
        return CancellationResult(False, nan, None, nan, None, True)
    los_delay_nominal = baseline_dist / SPEED_OF_LIGHT
    if abs(stage1.delay - los_delay_nominal) > cfg.cp_duration:
        return CancellationResult(False, nan, None, nan, stage1, True)

    los_delay = float(true_los[1]) if gain_mode == "oracle" else stage1.delay
    anchor = int(math.floor(los_delay / cfg.t_sample))
    grid = ls_estimates(demod_window(stream, anchor + cfg.n_cp), frame)
    psi = los_delay - (anchor + 2 * cfg.n_cp) * cfg.t_sample
    signature = np.exp(
        -2j * np.pi * cfg.subcarrier_spacing * psi * grid.pattern.sub_idx
    )[None, :]
    gain = _los_gain_estimate(gain_mode, grid, signature, los_delay, cfg, true_los)

    cleaned = dataclasses.replace(grid, values=grid.values - gain * signature)
    post_map = periodogram(cleaned, n_doppler_bins, n_delay_bins, work_dtype=work_dtype)
    energy_pre = float(np.sum(np.abs(grid.values) ** 2))
    energy_post = float(np.sum(np.abs(cleaned.values) ** 2))
    residual = energy_post / energy_pre if energy_pre > 0.0 else float("nan")
    residual_db = 10.0 * math.log10(residual) if residual > 0.0 else -math.inf

    target = None
    if post_map.peak_value >= threshold_single:
        target = _estimate_from_map(post_map, anchor, stage1.coarse_block, baseline_dist, aoa, keep_map)
    return CancellationResult(True, los_delay, gain, residual_db, target, False)

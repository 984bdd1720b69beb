"""Bistatic OFDM sensing simulator and receiver library."""

from .channel import (
    NoiseModel,
    SampleStream,
    dump_samples,
    load_samples,
    set_snr,
    synthesize_rx,
)
from .detector import (
    CancellationResult,
    HypothesisSweep,
    TargetEstimate,
    ThresholdCalibration,
    calibrate_threshold,
    detect_and_cancel_los,
    detect_and_localize,
    hypothesis_count,
    load_calibration,
    save_calibration,
    sweep_hypotheses,
)
from .harness import (
    ExperimentConfig,
    ScenePrior,
    TrialRecord,
    brute_force_oracle,
    default_config,
    draw_scene,
    load_config,
    load_or_calibrate,
    pilot_only_frame,
    run_aoa_study,
    run_noiseless_check,
    run_oracle_check,
    run_ratio_sweep,
    run_rmse_sweep,
    scenario_two_config,
)
from .receiver import (
    DelayDopplerMap,
    LsGrid,
    demod_window,
    interpolate_peak,
    ls_estimates,
    map_peak_value,
    n_symbols_available,
    periodogram,
)
from .scene import Propagation, Scene, derive_propagation
from .waveform import (
    SPEED_OF_LIGHT,
    FrameConfig,
    FrameSymbols,
    PilotPattern,
    build_pilot_pattern,
    eval_baseband,
    generate_frame,
)

__all__ = [
    "SPEED_OF_LIGHT",
    "CancellationResult",
    "DelayDopplerMap",
    "ExperimentConfig",
    "FrameConfig",
    "FrameSymbols",
    "HypothesisSweep",
    "LsGrid",
    "NoiseModel",
    "PilotPattern",
    "Propagation",
    "SampleStream",
    "Scene",
    "ScenePrior",
    "TargetEstimate",
    "ThresholdCalibration",
    "TrialRecord",
    "brute_force_oracle",
    "build_pilot_pattern",
    "calibrate_threshold",
    "default_config",
    "demod_window",
    "derive_propagation",
    "detect_and_cancel_los",
    "detect_and_localize",
    "draw_scene",
    "dump_samples",
    "eval_baseband",
    "generate_frame",
    "hypothesis_count",
    "interpolate_peak",
    "load_calibration",
    "load_config",
    "load_or_calibrate",
    "load_samples",
    "ls_estimates",
    "map_peak_value",
    "n_symbols_available",
    "periodogram",
    "pilot_only_frame",
    "run_aoa_study",
    "run_noiseless_check",
    "run_oracle_check",
    "run_ratio_sweep",
    "run_rmse_sweep",
    "save_calibration",
    "scenario_two_config",
    "set_snr",
    "sweep_hypotheses",
    "synthesize_rx",
]

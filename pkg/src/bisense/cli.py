"""Command-line front end for the experiment harness.

Each subcommand loads an ExperimentConfig (YAML, the same keys as
configs/default.yaml), applies the command-line overrides, runs one of
the harness studies, and writes its outputs under the output directory.
Exit status is zero on success; any failure prints a single
"error: <message>" line on stderr and exits nonzero.
"""

import argparse
import csv
import dataclasses
import logging
import os
import sys

from .channel import dump_samples, synthesize_rx
from .harness import (
    _pattern_label,
    _trial_seeds,
    _TAG_NOISELESS,
    default_config,
    draw_scene,
    load_config,
    load_or_calibrate,
    run_aoa_study,
    run_oracle_check,
    run_ratio_sweep,
    run_rmse_sweep,
    scenario_two_config,
)
from .scene import derive_propagation
from .waveform import build_pilot_pattern, generate_frame

log = logging.getLogger(__name__)

ORACLE_CSV_HEADER = [
    "scene_seed", "pipeline_delay_s", "pipeline_doppler_hz",
    "oracle_delay_s", "oracle_doppler_hz", "delay_gap_s",
    "doppler_gap_hz", "at_boundary",
]


def _u64(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit value")
    return value


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _resolve_config(args, fallback):
    config = load_config(args.config) if args.config else fallback()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.trials is not None:
        updates["trials"] = args.trials
    if args.out is not None:
        updates["out_dir"] = args.out
    if updates:
        config = dataclasses.replace(config, **updates)
    return config


def _cmd_calibrate(args):
    config = _resolve_config(args, default_config)
    for pattern in config.patterns:
        cal = load_or_calibrate(config, pattern)
        print(
            f"pattern={_pattern_label(pattern)} p_fa={config.p_fa!r} "
            f"trials={config.calib_trials} kappa={cal.kappa!r} "
            f"kappa_single={cal.kappa_single!r}"
        )
    return 0


def _cmd_sweep_snr(args):
    config = _resolve_config(args, default_config)
    if not config.snr_grid_db:
        raise ValueError("config has an empty snr_grid_db")
    out = os.path.join(config.out_dir, "rmse_vs_snr.csv")
    points = run_rmse_sweep(config, out_path=out, threads=args.threads)
    print(f"wrote {out} ({len(points)} rows)")
    return 0


def _cmd_sweep_ratio(args):
    config = _resolve_config(args, scenario_two_config)
    if not config.ratio_grid_db:
        raise ValueError("config has an empty ratio_grid_db")
    out = os.path.join(config.out_dir, "rmse_vs_ratio.csv")
    points = run_ratio_sweep(config, out_path=out, threads=args.threads)
    print(f"wrote {out} ({len(points)} rows)")
    return 0


def _cmd_aoa_study(args):
    config = _resolve_config(args, default_config)
    if not config.snr_grid_db:
        raise ValueError("config has an empty snr_grid_db")
    out = os.path.join(config.out_dir, "aoa_mismatch.csv")
    rows = run_aoa_study(config, out_path=out, threads=args.threads)
    print(f"wrote {out} ({len(rows)} rows)")
    return 0


def _cmd_oracle_check(args):
    config = _resolve_config(args, default_config)
    rows = run_oracle_check(config, config.trials, threads=args.threads)
    out = os.path.join(config.out_dir, "oracle_check.csv")
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ORACLE_CSV_HEADER)
        for row in rows:
            writer.writerow([
                row.scene_seed,
                repr(row.pipeline_delay), repr(row.pipeline_doppler),
                repr(row.oracle_delay), repr(row.oracle_doppler),
                repr(row.delay_gap), repr(row.doppler_gap),
                int(row.at_boundary),
            ])
    worst_delay = max((r.delay_gap for r in rows), default=0.0)
    worst_doppler = max((r.doppler_gap for r in rows), default=0.0)
    print(
        f"wrote {out} ({len(rows)} rows, worst delay gap {worst_delay:.3g} s, "
        f"worst doppler gap {worst_doppler:.3g} Hz)"
    )
    return 0


def _cmd_dump_samples(args):
    # scene 0 of the noiseless study for the first configured pattern,
    # so the dump matches the first row of oracle-check on this config
    config = _resolve_config(args, default_config)
    pattern = config.patterns[0]
    seeds = _trial_seeds(config.seed, _TAG_NOISELESS, pattern, 0.0, 0)
    scene = draw_scene(config.prior, seeds[0])
    prop = derive_propagation(scene, config.frame)
    pat_obj = build_pilot_pattern(config.frame, *pattern)
    frame = generate_frame(config.frame, pat_obj, config.pilot_seed, seeds[1])
    stream = synthesize_rx(frame, prop, noise=None)
    os.makedirs(config.out_dir, exist_ok=True)
    out = os.path.join(config.out_dir, f"samples_{_pattern_label(pattern)}.iq64")
    dump_samples(stream, out)
    print(f"wrote {out} and {out}.meta.txt")
    print(
        f"truth: bistatic_range_m={prop.bistatic_range!r} "
        f"delay_s={prop.delay_nlos!r} doppler_hz={prop.doppler!r} "
        f"v_bis_mps={prop.v_bis!r}"
    )
    return 0


_COMMANDS = {
    "calibrate": _cmd_calibrate,
    "sweep-snr": _cmd_sweep_snr,
    "sweep-ratio": _cmd_sweep_ratio,
    "aoa-study": _cmd_aoa_study,
    "oracle-check": _cmd_oracle_check,
    "dump-samples": _cmd_dump_samples,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bisense",
        description="Bistatic OFDM sensing experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = [
        ("calibrate", "calibrate detection thresholds for every configured pattern"),
        ("sweep-snr", "range/velocity RMSE versus SNR (rmse_vs_snr.csv)"),
        ("sweep-ratio", "reflected-path RMSE versus power ratio (rmse_vs_ratio.csv); "
                        "defaults to the short-baseline config"),
        ("aoa-study", "velocity RMSE under arrival-angle mismatch (aoa_mismatch.csv)"),
        ("oracle-check", "pipeline versus brute-force agreement on noiseless scenes "
                         "(oracle_check.csv); --trials sets the scene count"),
        ("dump-samples", "write one noise-free baseband capture plus its ground truth"),
    ]
    for name, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML config path (default: built-in config)")
        p.add_argument("--seed", type=_u64, help="override the root seed")
        p.add_argument("--trials", type=_positive, help="override trials per point")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--threads", type=_positive, default=1,
                       help="concurrent trials per sweep point (default 1)")
    return parser


def main(argv=None):
    logging.basicConfig(
        level=logging.INFO, format="%(asctime)s %(name)s %(message)s"
    )
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # argparse handles its own usage errors
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: simulate, estimate, evaluate.

Every subcommand is deterministic given identical inputs (and seed, where
one applies); output files are written atomically (temp file + rename) and
numeric fields carry 17 significant digits.  Errors raised by the library
exit nonzero with a single-line message on stderr.  Set ODO25D_LOG to
debug/info/warning/error to control diagnostics.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from pathlib import Path

from .errors import ManeuverError, Odo25dError
from .evaluate import compare, format_metrics, load_trajectory, overlay_svg
from .extrinsics import load_calibration
from .ingest import align, load_config, parse_log
from .pipeline import (
    format_sensor_poses,
    format_suspension,
    format_trajectory,
    run_estimation,
)
from .simulator import (
    NoiseSpec,
    format_sensor_log,
    format_truth,
    load_maneuver,
    simulate,
)

log = logging.getLogger(__name__)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _parse_noise(spec: str, seed: int) -> NoiseSpec:
    """--noise accepts 'none', 'default', or 'yaw=..,tick=..,susp=..'."""
    if spec == "none":
        return NoiseSpec(seed=seed)
    if spec == "default":
        return NoiseSpec.defaults(seed=seed)
    values = {"yaw": 0.0, "tick": 0.0, "susp": 0.0}
    for item in spec.split(","):
        key, _, raw = item.partition("=")
        key = key.strip()
        if key not in values or not raw:
            raise ManeuverError(f"bad --noise entry {item!r}; keys are yaw, tick, susp")
        try:
            values[key] = float(raw)
        except ValueError:
            raise ManeuverError(f"bad --noise value {raw!r}") from None
    return NoiseSpec(
        yaw_sigma=values["yaw"],
        tick_quantization=values["tick"],
        suspension_sigma=values["susp"],
        seed=seed,
    )


def _cmd_simulate(args) -> int:
    config = load_config(args.config)
    spec, susp = load_maneuver(args.maneuver)
    noise = _parse_noise(args.noise, args.seed)
    result = simulate(
        spec,
        config.geometry,
        susp,
        noise,
        rate=args.rate,
        meters_per_tick=config.meters_per_tick,
    )
    out = Path(args.out)
    _atomic_write(out / "log.csv", format_sensor_log(result))
    _atomic_write(out / "truth.csv", format_truth(result.truth))
    log.info("simulated %d samples over %.3f s", len(result.truth.t), result.truth.t[-1])
    return 0


def _cmd_estimate(args) -> int:
    config = load_config(args.config)
    calibration = load_calibration(args.calibration) if args.calibration else None
    with open(args.log, "r", encoding="utf-8") as fh:
        streams = parse_log(fh, config.meters_per_tick)
    suspension_present = all(c in streams for c in ("susp_fl", "susp_fr", "susp_rl", "susp_rr"))
    planar_only = args.planar_only or not suspension_present
    samples = align(streams, config.alignment_policy, require_suspension=not planar_only)
    result = run_estimation(
        samples,
        config,
        calibration=calibration,
        planar_only=planar_only,
    )
    out = Path(args.out)
    _atomic_write(out / "trajectory.csv", format_trajectory(result))
    if result.roll is not None:
        _atomic_write(out / "suspension.csv", format_suspension(result))
    if result.sensor_poses:
        _atomic_write(out / "sensor_poses.csv", format_sensor_poses(result))
    log.info("estimated %d samples", len(result.t))
    return 0


def _cmd_evaluate(args) -> int:
    estimated = load_trajectory(args.estimated)
    reference = load_trajectory(args.reference)
    metrics = compare(estimated, reference)
    out = Path(args.out)
    _atomic_write(out / "metrics.txt", format_metrics(metrics))
    if not args.no_plot:
        _atomic_write(out / "overlay.svg", overlay_svg(estimated, reference))
    sys.stdout.write(format_metrics(metrics))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odo25d",
        description="2.5D vehicle dead reckoning: simulate maneuvers, estimate poses, evaluate drift.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="synthesize a sensor log plus ground truth")
    p_sim.add_argument("--maneuver", required=True, help="maneuver script path")
    p_sim.add_argument("--config", required=True, help="vehicle/run config JSON path")
    p_sim.add_argument("--noise", default="none", help="'none', 'default', or yaw=..,tick=..,susp=..")
    p_sim.add_argument("--seed", type=int, default=0, help="noise seed")
    p_sim.add_argument("--rate", type=float, default=50.0, help="bus sample rate, Hz")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.set_defaults(func=_cmd_simulate)

    p_est = sub.add_parser("estimate", help="run the estimation pipeline over a sensor log")
    p_est.add_argument("log", help="sensor log path")
    p_est.add_argument("--config", required=True, help="vehicle/run config JSON path")
    p_est.add_argument("--calibration", default=None, help="calibration file path")
    p_est.add_argument(
        "--planar-only",
        action="store_true",
        help="skip the suspension model (2D pipeline only)",
    )
    p_est.add_argument("--out", required=True, help="output directory")
    p_est.set_defaults(func=_cmd_estimate)

    p_eval = sub.add_parser("evaluate", help="compare an estimated trajectory against a reference")
    p_eval.add_argument("estimated", help="estimated trajectory CSV (t,x,y,theta)")
    p_eval.add_argument("reference", help="reference CSV (t,x,y[,theta]); extra columns ignored")
    p_eval.add_argument("--no-plot", action="store_true", help="skip the SVG overlay")
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("ODO25D_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    for attr in ("maneuver", "config", "calibration", "log", "estimated", "reference"):
        value = getattr(args, attr, None)
        if value is not None and not Path(value).exists():
            print(f"error: {attr} file not found: {value}", file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except Odo25dError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

import sys
import os
import argparse
import logging
from dataclasses import replace
from datetime import datetime

from rkhs_tools.errors import ConfigError, GateFailure, KernelError, StageMissing
from rkhs_tools.pipeline import CERTIFICATE, CertificationPipeline
from utils.config_utils import RunConfig, load_run_config
from utils.fs_utils import ensure_clean_dir
from utils.logging_utils import setup_logging

EXIT_OK, EXIT_GATE, EXIT_CONFIG = 0, 1, 2


def load_config(args: argparse.Namespace) -> RunConfig:
    config = load_run_config(args.config)
    if args.tol_scale is not None:
        config = config.scaled(args.tol_scale)
    if getattr(args, "near_uniform", None) is not None:
        if not args.near_uniform > 0:
            raise ConfigError(f"--near-uniform must be positive, got {args.near_uniform}")
        u_radius = config.points.get("u_radius", 1.0)
        config = replace(config, points={"kind": "near_uniform", "epsilon": args.near_uniform, "u_radius": u_radius})
    return config


def main(args: argparse.Namespace, config: RunConfig, output_dir: str) -> int:
    """Run one subcommand and return its exit code."""
    logger = logging.getLogger(__name__)
    start_time = datetime.now()
    pipeline = CertificationPipeline(config, output_dir)

    if args.command == "report":
        lines, passed = pipeline.report()
        for line in lines:
            print(line)
        return EXIT_OK if passed else EXIT_GATE

    stages = {
        "certify-kernel": pipeline.certify_kernel,
        "build-points": pipeline.build_points,
        "build-frame": pipeline.build_frame,
        "build-riesz": pipeline.build_riesz,
        "certify-molecules": pipeline.certify_molecules,
        "interpolate": lambda: pipeline.interpolate(args.values),
    }
    try:
        if args.command == "run":
            certificate = pipeline.run()
        else:
            try:
                stages[args.command]()
            finally:
                certificate = pipeline.write_certificate()
    finally:
        logger.info("Total time: %.2f seconds", (datetime.now() - start_time).total_seconds())

    failing = pipeline.failing_gates(certificate)
    if failing:
        logger.warning("Failing gates: %s", ", ".join(failing))
        print(f"FAIL: {', '.join(failing)}")
        return EXIT_GATE
    print(f"PASS: {os.path.join(output_dir, CERTIFICATE)}")
    return EXIT_OK


def parse_args(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Certify RKHS kernels and build sampling frames and Riesz sequences.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", required=True, help="Path to the JSON run configuration")
    common.add_argument("-o", "--output-dir", dest="output_dir", default=None,
                        help="Output directory (overrides output_dir from the config)")
    common.add_argument("--tol-scale", dest="tol_scale", type=float, default=None,
                        help="Multiply every tolerance of the config by this factor")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="Run the configured stage list from scratch")
    sub.add_parser("certify-kernel", parents=[common], help="BD, LOC and WUC checks of the scenario kernel")
    points = sub.add_parser("build-points", parents=[common], help="Build the point family and its disjoint cover")
    points.add_argument("--near-uniform", dest="near_uniform", type=float, default=None, metavar="EPS",
                        help="Replace the points directive by a near-uniform set with this epsilon")
    sub.add_parser("build-frame", parents=[common], help="Frame construction selected by frame.mode")
    sub.add_parser("build-riesz", parents=[common], help="Riesz sequence, biorthogonal and orthonormal systems")
    sub.add_parser("certify-molecules", parents=[common], help="Molecule envelopes of the constructed systems")
    interp = sub.add_parser("interpolate", parents=[common], help="Interpolate node values with the biorthogonal system")
    interp.add_argument("--values", required=True, help="CSV with a 'value' column (and optional 'value_imag')")
    sub.add_parser("report", parents=[common], help="Print the certificate summary and write the xlsx workbook")
    return parser.parse_args(argv)


if __name__ == "__main__":
    args = parse_args()
    try:
        config = load_config(args)
    except ConfigError as exc:
        print(f"Configuration error: {exc}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)

    output_dir = os.path.abspath(args.output_dir or config.output_dir)
    try:
        if args.command == "run":
            # Fresh directory for a full run only; single stages read upstream artifacts
            ensure_clean_dir(output_dir)
        else:
            os.makedirs(output_dir, exist_ok=True)
    except Exception:
        logging.getLogger(__name__).exception("Failed to prepare output directory: %s", output_dir)
        sys.exit(EXIT_GATE)

    setup_logging(log_dir=output_dir, log_filename="certify_rkhs.log")
    logger = logging.getLogger(__name__)
    logger.info("Command %s: config=%s scenario=%s output=%s", args.command, args.config, config.scenario.id, output_dir)
    print(f"{datetime.now().strftime('%Y-%m-%d %H:%M:%S')} - {args.command}: config={args.config} output={output_dir}")

    try:
        sys.exit(main(args, config, output_dir))
    except GateFailure as exc:
        logger.error("Gate %s failed: %s", exc.gate, exc)
        print(f"FAIL: gate '{exc.gate}' ({exc})", file=sys.stderr)
        sys.exit(EXIT_GATE)
    except StageMissing as exc:
        logger.error("%s", exc)
        print(f"FAIL: {exc}", file=sys.stderr)
        sys.exit(EXIT_GATE)
    except KernelError as exc:
        logger.error("Kernel rejected: %s", exc)
        print(f"FAIL: {exc}", file=sys.stderr)
        sys.exit(EXIT_GATE)
    except ConfigError as exc:
        logger.error("Configuration error: %s", exc)
        print(f"Configuration error: {exc}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)
    except Exception:
        logger.exception("Unhandled error during %s", args.command)
        sys.exit(EXIT_GATE)

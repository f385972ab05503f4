# main.py
# Command-line entry point of the HRV toolkit.

import argparse
import logging
import sys
from typing import List, Optional

from src.app import __version__
from src.app.errors import DataError, HrvToolkitError
from src.app.utils import load_run_config, set_deterministic
from src.config import DETERMINISTIC, LOG_LEVEL

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hrv-toolkit", description="Neonatal ECG to HRV-Conformer toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.FIELD=VALUE",
                        help="override one configuration field (repeatable)")
    common.add_argument("--seed", type=int, help="seed for synthesis, initialisation and shuffling")
    common.add_argument("--deterministic", action="store_true", default=DETERMINISTIC,
                        help="pin numeric thread pools for bitwise reproducible runs")
    common.add_argument("--force", action="store_true", help="overwrite an existing run directory")
    common.add_argument("--log-level", default=LOG_LEVEL, choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--out", required=True, help="output directory")

    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[common], help="generate synthetic ECG with beat annotations")
    synth.add_argument("--preset", default="clean", choices=["clean", "artifacts", "inverted", "epochs"])
    synth.add_argument("--name", default="record", help="file stem of single-record presets")
    synth.add_argument("--recordings", type=int, default=2, help="recordings of the epochs preset")
    synth.add_argument("--hours", type=int, default=4, help="epochs per recording of the epochs preset")

    detect = sub.add_parser("detect", parents=[common], help="detect R-peaks and correct RR intervals")
    detect.add_argument("ecg", nargs="+", help="ECG CSV files")
    detect.add_argument("--standard", action="store_true", help="use the unenhanced detector preset")
    detect.add_argument("--annotations", help="ground-truth beats CSV (single input only)")
    detect.add_argument("--tolerance", type=float, default=0.05, help="beat matching tolerance in seconds")
    detect.add_argument("--dump-thresholds", action="store_true", help="write the threshold trajectory JSON")
    detect.add_argument("--plot", action="store_true", help="write a detection overlay figure per record")

    preprocess = sub.add_parser("preprocess", parents=[common], help="turn corrected RR files into HR windows")
    preprocess.add_argument("--rr-dir", action="append", required=True,
                            help="detect output directory; repeat to compare detectors (windows come from the first)")
    preprocess.add_argument("--labels", required=True, help="CSV with recording,epoch_hour,grade")

    train = sub.add_parser("train", parents=[common], help="train an HRV-Conformer on a window store")
    train.add_argument("--windows", required=True, help="preprocess output directory")
    train.add_argument("--preset", help="configuration preset under configs/ (or a JSON path)")

    evaluate = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a window store")
    evaluate.add_argument("--windows", required=True)
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--split", default="all", choices=["all", "train", "val"])

    attn = sub.add_parser("attn", parents=[common], help="attention rollout, distance and entropy")
    attn.add_argument("--windows", required=True)
    attn.add_argument("--checkpoint", help="trained checkpoint; a seeded untrained model when omitted")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, force=True)
    set_deterministic(args.deterministic)

    # command bodies pull in the numerical stack, so import them after the thread pins
    from src.app.commands import COMMANDS

    try:
        cfg = load_run_config(args.config, _train_preset(args), args.overrides, args.seed)
        return COMMANDS[args.command](args, cfg)
    except HrvToolkitError as e:
        logger.error(f"{args.command} failed: {e.detail}")
        return e.exit_code
    except OSError as e:
        logger.error(f"{args.command} failed: {e}")
        return DataError.exit_code


def _train_preset(args: argparse.Namespace) -> Optional[str]:
    return args.preset if args.command == "train" else None


if __name__ == "__main__":
    sys.exit(main())

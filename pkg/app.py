"""
Command-line entry point for the thermal-light QRNG side-information study.

Usage:
  python app.py sweep-table2 --seed 7 --shots 200000
  python app.py fig3 --workers 4
  python app.py extract-test --n-eve 5.58 --n-alice 5.12 --inject zeros
  python app.py single --n-eve 0 --n-alice 0 --dump-shots
  python app.py replay runs/sweep-table2/manifest.json --workers 8
"""
import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from experiment_config import ConfigError, resolve_config
from experiment_service import ExperimentService, replay

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)


def setup_logging(level: str = "INFO"):
    """Console logging; a per-run file handler is added once the run directory is known."""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stdout)],
        force=True,
    )


def attach_run_log(run_dir: str) -> logging.Handler:
    os.makedirs(run_dir, exist_ok=True)
    handler = logging.FileHandler(os.path.join(run_dir, "run.log"), mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logging.getLogger().addHandler(handler)
    return handler


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config document")
    common.add_argument("--seed", type=int, help="master seed (QRNG_SEED)")
    common.add_argument("--shots", type=int, help="shots per scenario (QRNG_SHOTS)")
    common.add_argument("--out-dir", dest="out_dir", help="output root (QRNG_OUT_DIR)")
    common.add_argument("--electronic-noise", dest="electronic_noise", type=float,
                        help="homodyne variance broadening factor f >= 1")
    common.add_argument("--coherence-ratio", dest="coherence_ratio", type=float,
                        help="pulse spacing / coherence time; inf or 0 for independent shots")
    common.add_argument("--workers", type=int, help="processes for shot generation")
    common.add_argument("--phase", dest="alice_phase", type=float, help="Alice's LO phase in radians")
    common.add_argument("--paper-scale", dest="paper_scale", action="store_true", default=None,
                        help="2,000,000 shots per scenario unless --shots is given")
    common.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING, ...")

    scenario = argparse.ArgumentParser(add_help=False)
    scenario.add_argument("--n-eve", dest="n_eve", type=float, help="mean photon number in Eve's port")
    scenario.add_argument("--n-alice", dest="n_alice", type=float, help="mean photon number in Alice's port")
    scenario.add_argument("--dump-shots", dest="dump_shots", action="store_true", default=None,
                          help="write the raw little-endian shot records")

    ap = argparse.ArgumentParser(description="Thermal-light QRNG side-information simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)
    sub.add_parser("sweep-table2", parents=[common], help="all 15 reference splitting ratios")
    sub.add_parser("fig3", parents=[common], help="conditional min-entropy versus n_eve at fixed n_alice")
    p_ex = sub.add_parser("extract-test", parents=[common, scenario],
                          help="hash, merge and run the statistical battery")
    p_ex.add_argument("--inject", choices=["zeros", "alternating"],
                      help="replace the extracted stream with a broken one")
    sub.add_parser("single", parents=[common, scenario], help="one scenario")

    p_re = sub.add_parser("replay", help="verify a run against its manifest")
    p_re.add_argument("manifest", help="manifest.json or its run directory")
    p_re.add_argument("--workers", type=int, help="worker count for the re-run")
    p_re.add_argument("--log-level", dest="log_level", default=None)
    return ap


CONFIG_ARGS = ("seed", "shots", "out_dir", "electronic_noise", "coherence_ratio", "workers",
               "alice_phase", "paper_scale", "log_level", "n_eve", "n_alice", "dump_shots", "inject")


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one command.

    Returns:
        int: 0 on success, 1 on failure or replay mismatch, 2 on bad
        configuration, 3 on I/O errors
    """
    load_dotenv()
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level or os.getenv("QRNG_LOG_LEVEL", "INFO"))

    try:
        if args.cmd == "replay":
            verdict = replay(args.manifest, workers=args.workers)
            print(f"{'PASS' if verdict.ok else 'FAIL'}: {verdict.checked} outputs checked")
            for name in verdict.divergent:
                print(f"  divergent: {name}")
            return 0 if verdict.ok else 1

        cli_values = {key: getattr(args, key, None) for key in CONFIG_ARGS}
        config = resolve_config(cli_values, args.config)
        logging.getLogger().setLevel(config.log_level.upper())
        service = ExperimentService(config)
        run_dir = service.run_dir_for(args.cmd)
        handler = attach_run_log(run_dir)
        try:
            store = service.run(args.cmd, run_dir)
        finally:
            logging.getLogger().removeHandler(handler)
            handler.close()
        print(f"Outputs written to {store.run_dir}")
        return 0

    except ConfigError as e:
        logger.error(f"❌ Invalid configuration: {e}")
        return 2
    except OSError as e:
        logger.error(f"❌ I/O error: {e}", exc_info=True)
        return 3
    except Exception as e:
        logger.error(f"❌ Unhandled exception: {str(e)}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())

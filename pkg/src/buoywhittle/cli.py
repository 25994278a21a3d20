"""Command-line entry point: ``buoywhittle {simulate,fit,sim-study,diagnose,partition}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .discrete import NumericalConsistencyError
from .inference import DataError
from .models import DispersionSolverError, ModelDomainError
from .pipeline import (
    FIT_COLUMNS,
    ConfigError,
    PipelineConfig,
    diagnose,
    ingest,
    partition_sea_states,
    run_fits,
    run_sim_study,
    simulate_record,
    write_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

logger = logging.getLogger("buoywhittle")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    p.add_argument("--threads", type=int, help="worker processes")


def _band(p):
    p.add_argument("--low-cut", dest="low_cut", type=float, help="lowest frequency used (rad/s)")
    p.add_argument("--high-cut", dest="high_cut", type=float, help="highest frequency used (rad/s)")
    p.add_argument("--duration", dest="sea_state_duration", type=float, help="sea-state length (s)")
    p.add_argument("--depth", help="water depth in metres or 'inf' (overrides the record header)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="buoywhittle", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a synthetic record CSV")
    _common(p)
    p.add_argument("--scenario", help="built-in scenario key")
    p.add_argument("--n-samples", dest="n_samples", type=int, help="record length in samples")
    p.add_argument("--delta", type=float, help="sampling interval (s)")
    p.add_argument("--depth", help="water depth in metres or 'inf'")
    p.add_argument("--method", dest="simulation_method", choices=("spectral", "circulant"))

    p = sub.add_parser("fit", help="fit every sea state of a record")
    _common(p)
    _band(p)
    p.add_argument("record", help="record CSV")
    p.add_argument("--objective", choices=("debiased", "whittle"))

    p = sub.add_parser("sim-study", help="run a simulation study")
    _common(p)
    p.add_argument("--replications", type=int)
    p.add_argument("--scenarios", type=lambda s: [int(v) for v in s.split(",")], help="comma-separated scenario keys")
    p.add_argument("--estimators", type=lambda s: s.split(","), help="comma-separated estimator names")
    p.add_argument("--n", type=int, help="samples per replication")
    p.add_argument("--resume", action="store_true", default=None, help="keep replications already on disk")

    p = sub.add_parser("diagnose", help="spectra, error function, mean direction and Hs per sea state")
    _common(p)
    _band(p)
    p.add_argument("record", help="record CSV")
    p.add_argument("--method", dest="spectral_method", choices=("multitaper", "welch"))

    p = sub.add_parser("partition", help="list the sea states of a record")
    _common(p)
    p.add_argument("record", help="record CSV")
    p.add_argument("--duration", dest="sea_state_duration", type=float, help="sea-state length (s)")
    return parser


CONFIG_KEYS = {
    "seed", "out_dir", "threads", "low_cut", "high_cut", "sea_state_duration", "depth", "objective",
    "replications", "scenarios", "estimators", "n", "resume", "scenario", "n_samples", "delta",
    "simulation_method", "spectral_method",
}


def _run(args) -> int:
    overrides = {k: v for k, v in vars(args).items() if k in CONFIG_KEYS}
    if overrides.get("scenario") is not None:
        overrides["scenario"] = int(overrides["scenario"])
    config = PipelineConfig.load(args.config, overrides)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "simulate":
        path = out / "record.csv"
        simulate_record(config, path)
        logger.info("wrote %s", path)
    elif args.command == "fit":
        record = ingest(args.record)
        rows = run_fits(record, config)
        write_csv(out / "fits.csv", FIT_COLUMNS, rows)
        logger.info("wrote %d sea-state fits to %s", len(rows), out / "fits.csv")
    elif args.command == "sim-study":
        run_sim_study(config, out)
        logger.info("wrote study outputs to %s", out)
    elif args.command == "diagnose":
        record = ingest(args.record)
        diagnose(record, config, out)
        logger.info("wrote diagnostics to %s", out)
    elif args.command == "partition":
        record = ingest(args.record)
        states = partition_sea_states(record, config)
        rows = [{"sea_state": i, "start_time": s.start_time, "n": s.n, "hs": s.significant_wave_height}
                for i, s in enumerate(states)]
        write_csv(out / "sea_states.csv", ["sea_state", "start_time", "n", "hs"], rows)
        logger.info("%d sea states", len(rows))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as err:
        logger.error("%s", err)
        return EXIT_USAGE
    except (DataError, ModelDomainError) as err:
        logger.error("%s", err)
        return EXIT_DATA
    except (NumericalConsistencyError, DispersionSolverError, np.linalg.LinAlgError, FloatingPointError) as err:
        logger.error("numerical failure: %s", err)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

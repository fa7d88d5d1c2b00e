"""Command-line entry point: ``mfuq {plan,run,baseline,replicate,fit-trends}``.

Exit codes: 0 success, 2 invalid configuration or input, 3 budget
infeasible, 4 solver failure, 5 DL-MFMC policy inapplicable (the report
then carries the MC-FOM fallback estimate).
"""

import argparse
import json
import logging
import sys

from .errors import MfuqError
from .model import FieldSolution, SnapshotSet
from .pipeline import (
    CampaignConfig,
    fit_trends_from_snapshots,
    format_summary,
    make_testbed,
    plan_campaign,
    replication_study,
    run_campaign,
    run_mc_baseline,
    write_report,
)
from .snapshots import snapshot_store_read, snapshot_store_write

log = logging.getLogger("mfuq")

OVERRIDES = ("seed", "budget", "qoi", "gamma", "out", "workers", "measure")


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--budget", type=float, help="total budget p in declared cost units")
    common.add_argument("--qoi", help="quantity of interest: avg_po2, delta_po2 or tcp")
    common.add_argument("--gamma", type=float, help="confidence level in (0, 1)")
    common.add_argument("--out", help="output directory for report.json, summary.txt, samples.csv")
    common.add_argument("--workers", type=int, help="threads used for independent solves")
    common.add_argument("--measure", action="store_true", default=None,
                        help="record wall-clock timings per phase")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="mfuq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("plan", parents=[common], help="preliminary phase only: trends and n*")
    run = sub.add_parser("run", parents=[common], help="full DL-MFMC campaign")
    run.add_argument("--save-snapshots", metavar="PATH",
                     help="also store the training FOM snapshots (oxygen testbed)")
    sub.add_parser("baseline", parents=[common], help="MC-FOM at the same budget")
    rep = sub.add_parser("replicate", parents=[common], help="replication study of the final sampling stage")
    rep.add_argument("--replications", type=int, default=100, help="number of replications (>= 100)")
    fit = sub.add_parser("fit-trends", parents=[common], help="trend fits from an existing snapshot file")
    fit.add_argument("snapshots", help="snapshot file written by 'run --save-snapshots'")
    return parser


def load_config(args):
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            from .errors import ConfigError

            raise ConfigError(f"cannot read configuration {args.config}: {exc}") from exc
    for key in OVERRIDES:
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    return CampaignConfig.from_dict(data)


def _emit(report, config):
    sys.stdout.write(format_summary(report))
    if config.out:
        write_report(report, config.out)
        log.info("wrote report to %s", config.out)


def _read_snapshots(path, config):
    from .oxygen.network import VascularLayout

    decode = VascularLayout.from_array if config.testbed == "oxygen" else None
    return snapshot_store_read(path, decode_descriptor=decode)


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args)
        if args.command == "plan":
            report = plan_campaign(config)
        elif args.command == "run":
            report = run_campaign(config)
            if args.save_snapshots and report.training and isinstance(report.training[0][1], FieldSolution):
                snaps = SnapshotSet(report.training, seed=config.seed,
                                    solver_version=make_testbed(config).version)
                snapshot_store_write(snaps, args.save_snapshots)
        elif args.command == "baseline":
            report = run_mc_baseline(config)
        elif args.command == "replicate":
            report = replication_study(config, args.replications)
        else:
            report = fit_trends_from_snapshots(config, _read_snapshots(args.snapshots, config))
        _emit(report, config)
        return report.exit_code
    except MfuqError as exc:
        print(f"mfuq: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"mfuq: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

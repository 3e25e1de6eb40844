"""``tune``: run, validate and report VRFT Monte Carlo campaigns."""

import argparse
import logging
import sys

from .campaign import (
    ConfigError,
    configure_logging,
    format_table,
    load_config,
    load_report,
    run_campaign,
)

log = logging.getLogger("vrftctls.cli")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="tune", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo campaign")
    run.add_argument("--config", required=True, help="TOML file or preset name (open_loop, closed_loop)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, help="override the master seed")
    run.add_argument("--runs", type=int, help="override the number of runs")
    run.add_argument("--methods", help="comma separated subset of ols,iv,ctls")
    run.add_argument("--jobs", type=int, default=1, help="worker processes")

    val = sub.add_parser("validate", help="check a campaign config")
    val.add_argument("--config", required=True)

    rep = sub.add_parser("report", help="re-render the summary of a finished campaign")
    rep.add_argument("--in", dest="in_dir", required=True)
    return p


def main(argv=None):
    configure_logging()
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            print(f"ok: {cfg.loop_mode.value}, {cfg.n_runs} runs of {cfg.n_samples} samples, "
                  f"methods {','.join(cfg.methods)}")
            return EXIT_OK
        if args.command == "run":
            cfg = load_config(args.config)
            methods = None
            if args.methods is not None:
                methods = [m.strip().lower() for m in args.methods.split(",") if m.strip()]
            cfg = cfg.with_overrides(seed=args.seed, runs=args.runs, methods=methods)
            if args.jobs < 1:
                raise ConfigError(["--jobs: must be >= 1"])
            report = run_campaign(cfg, args.out, jobs=args.jobs)
            sys.stdout.write(format_table(report.stats, cfg.loop_mode.value))
            return EXIT_OK
        meta, stats, _ = load_report(args.in_dir)
        sys.stdout.write(format_table(stats, meta["loop_mode"]))
        return EXIT_OK
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

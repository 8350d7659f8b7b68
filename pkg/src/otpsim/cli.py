"""``simulate`` command line entry point.

Exit codes: 0 on success, 2 on a configuration error, 1 on runtime failure.
Reports go to ``--out`` (or the config's ``output_path``) or to stdout;
progress and diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness, metrics, shaping

log = logging.getLogger("otpsim")


def _add_output_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out", help="report path ('-' for stdout)")
    p.add_argument("--format", choices=harness.FORMATS, help="report format (default csv)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simulate", description="Wiretap OTP-approaching simulations")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--trials", type=int, help="override trial_count")
    _add_output_args(run)

    preset = sub.add_parser("preset", help="run a built-in experiment")
    preset.add_argument("name", choices=sorted(harness.PRESETS))
    preset.add_argument("--trials", type=int)
    _add_output_args(preset)

    m = sub.add_parser("metrics", help="evaluate one closed-form metric")
    msub = m.add_subparsers(dest="metric", required=True)
    doa = msub.add_parser("doa", help="degree of approaching E_K / E_M")
    doa.add_argument("key_entropy", type=float)
    doa.add_argument("message_entropy", type=float)
    dosa = msub.add_parser("dosa", help="degree of synchronous approaching C_K / C_M")
    dosa.add_argument("key_capacity", type=float)
    dosa.add_argument("channel_capacity", type=float)
    bl = msub.add_parser("blocklen", help="required block length for lambda and p_e")
    bl.add_argument("security_level", type=int)
    bl.add_argument("error_floor", type=float)
    me = msub.add_parser("minentropy", help="per-bit min-entropy bound log2(1/(1-p_e))")
    me.add_argument("error_floor", type=float)
    ef = msub.add_parser("errorfloor", help="error floor needed for a target DoSA")
    ef.add_argument("target_dosa", type=float)
    return parser


def _metric(args) -> str:
    if args.metric == "doa":
        value = metrics.degree_of_approaching(metrics.EntropyBudget(args.key_entropy, args.message_entropy))
    elif args.metric == "dosa":
        value = metrics.degree_of_synchronous_approaching(
            metrics.CapacityPair(args.key_capacity, args.channel_capacity))
    elif args.metric == "blocklen":
        return str(shaping.required_block_length(args.security_level, args.error_floor))
    elif args.metric == "minentropy":
        value = metrics.min_entropy_bound(args.error_floor)
    else:
        value = metrics.required_error_floor(args.target_dosa)
    if args.metric in ("doa", "dosa") and value > 1:
        log.warning("%s = %.6g exceeds 1", args.metric, value)
    return f"{value:.6g}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "metrics":
            try:
                print(_metric(args))
            except ValueError as exc:
                raise harness.ConfigError(str(exc)) from None
            return 0
        if args.command == "run":
            cfg = harness.load_config(args.config)
        else:
            cfg = harness.preset_config(args.name)
        cfg = cfg.with_overrides(trial_count=args.trials, master_seed=args.seed, format=args.format)
        rows = harness.run_experiment(cfg)
        out = args.out if args.out is not None else cfg.output_path
        harness.emit_report(rows, out, cfg.format, harness.report_columns(cfg.experiment_kind))
        if out not in (None, "-"):
            log.info("wrote %d row(s) to %s", len(rows), out)
        return 0
    except harness.ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    except Exception as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands: feedback, capacity, simulate, sessions generate, check.
Exit codes: 0 success, 1 validation problem, 2 dead end (no feasible
continuation).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

from .capacity import estimate_capacity
from .engine import (
    ExactFeedback,
    LookaheadFeedback,
    RhcOperator,
    SamplerOperator,
    SessionGeneratorParams,
    SimConfig,
    generate_sessions,
    run_closed_loop,
)
from .errors import DeadEnd, ValidationError
from .feedback import count_feasible, entropy, optimal_feedback, system_capacity
from .fileio import (
    SCHEMA_VERSION,
    build_instance,
    dumps_deterministic,
    load_run_config,
    parse_prefix,
    read_prices,
    read_sessions,
    write_sessions,
)
from .lookahead import approx_feedback
from .operators import CostCurve

logger = logging.getLogger("flexfeed")


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 on usage errors (2 is reserved)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="flexfeed",
        description="Flexibility feedback and closed-loop coordination for "
        "deferrable charging loads.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("feedback", help="next-slot feedback for a signal prefix")
    p.add_argument("--config", required=True, help="run configuration JSON")
    p.add_argument("--sessions", required=True, help="session CSV")
    p.add_argument("--prefix", default="", help="comma-separated signals already sent")
    p.add_argument("--out", help="write JSON here instead of stdout")

    p = sub.add_parser("capacity", help="count or estimate the feasible-set capacity")
    p.add_argument("--config", required=True)
    p.add_argument("--sessions", required=True)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--exact", action="store_true", help="exact count")
    mode.add_argument("--mc", type=int, metavar="N", help="Monte Carlo with N trajectories")
    p.add_argument("--out")

    p = sub.add_parser("simulate", help="one closed-loop run")
    p.add_argument("--config", required=True)
    p.add_argument("--sessions", required=True)
    p.add_argument("--prices", help="price CSV (required for the rhc operator)")
    p.add_argument("--out")
    p.add_argument("--csv", dest="slot_csv", help="also write a per-slot CSV table here")

    p = sub.add_parser("sessions", help="session file utilities")
    ssub = p.add_subparsers(dest="sessions_command", required=True, parser_class=_Parser)
    g = ssub.add_parser("generate", help="draw a synthetic session file")
    g.add_argument("--horizon", type=int, required=True)
    g.add_argument("--stations", type=int, required=True)
    g.add_argument("--rate", type=float, required=True, help="mean arrivals per slot")
    g.add_argument("--stay-min", type=int, required=True)
    g.add_argument("--stay-max", type=int, required=True)
    g.add_argument("--energy-min", type=float, required=True)
    g.add_argument("--energy-max", type=float, required=True)
    g.add_argument("--peak-rate", type=float, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    p = sub.add_parser("check", help="validate config and input files")
    p.add_argument("--config", required=True)
    p.add_argument("--sessions", required=True)
    p.add_argument("--prices")
    return parser


def _emit(payload, out_path) -> None:
    text = dumps_deterministic(payload)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_problem(args):
    config = load_run_config(args.config)
    sessions = read_sessions(args.sessions)
    instance = build_instance(config, sessions)
    return config, instance


def _feedback_vector(config, instance, prefix):
    if config.feedback_mode == "lookahead":
        return approx_feedback(instance, config.policy, prefix, config.feedback_depth)
    return optimal_feedback(instance, config.policy, prefix)


def cmd_feedback(args) -> int:
    config, instance = _load_problem(args)
    prefix = parse_prefix(args.prefix, instance.grid)
    fv = _feedback_vector(config, instance, prefix)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "feedback",
        "mode": fv.mode,
        "depth": fv.depth,
        "prefix": list(prefix),
        "levels": list(instance.grid.levels),
        "probabilities": list(fv.probabilities),
        "counts": list(fv.counts),
        "entropy_bits": entropy(fv, config.log_base),
        "log_base": config.log_base,
    }
    _emit(payload, args.out)
    return 0


def cmd_capacity(args) -> int:
    config, instance = _load_problem(args)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "capacity",
        "log_base": config.log_base,
    }
    if args.exact:
        bits = system_capacity(instance, config.policy, log_base=config.log_base)
        payload.update(
            {
                "mode": "exact",
                "feasible_count": count_feasible(instance, config.policy),
                "capacity_bits": bits,
            }
        )
    else:
        if args.mc < 1:
            raise ValidationError("--mc needs at least one trajectory")
        source = (
            LookaheadFeedback(config.feedback_depth)
            if config.feedback_mode == "lookahead"
            else ExactFeedback()
        )
        estimate = estimate_capacity(
            instance,
            config.policy,
            source,
            args.mc,
            config.seed,
            log_base=config.log_base,
        )
        payload.update(
            {
                "mode": "mc",
                "mean_bits": estimate.mean,
                "std_error_bits": estimate.std_error,
                "n_trajectories": estimate.n_trajectories,
                "dead_ends": estimate.dead_ends,
            }
        )
    _emit(payload, args.out)
    return 0


def cmd_simulate(args) -> int:
    config, instance = _load_problem(args)
    curve = None
    if args.prices:
        curve = CostCurve.linear(read_prices(args.prices, instance.horizon))
    if config.operator_mode == "rhc":
        if curve is None:
            raise ValidationError("the rhc operator requires --prices")
        operator = RhcOperator(beta=config.beta, cost_curve=curve)
    else:
        operator = SamplerOperator(cost_curve=curve)
    source = (
        LookaheadFeedback(config.feedback_depth)
        if config.feedback_mode == "lookahead"
        else ExactFeedback()
    )
    result = run_closed_loop(
        SimConfig(
            instance=instance,
            policy=config.policy,
            feedback=source,
            operator=operator,
            seed=config.seed,
            log_base=config.log_base,
        )
    )
    violation = None
    if result.verdict.violation is not None:
        v = result.verdict.violation
        violation = {"kind": v.kind, "slot": v.slot, "detail": v.detail}
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "simulate",
        "policy": result.policy_name,
        "seed": result.seed,
        "signals": list(result.signals),
        "delivered_per_slot": list(result.delivered_per_slot),
        "entropy_bits_per_slot": list(result.feedback_entropies),
        "total_cost": result.total_cost,
        "feasible": result.feasible,
        "violation": violation,
        "unmet_energy": {sid: amount for sid, amount in result.unmet_energy},
        "metrics": {
            "tracking_mse": result.tracking_mse,
            "undelivered_fraction": result.undelivered_fraction,
        },
    }
    _emit(payload, args.out)
    if args.slot_csv:
        with open(args.slot_csv, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["slot", "signal", "delivered", "entropy_bits", "cost"])
            for t, (x, d, h) in enumerate(
                zip(result.signals, result.delivered_per_slot, result.feedback_entropies),
                start=1,
            ):
                cost = curve.slot_cost(t, x) if curve else 0.0
                writer.writerow([t, repr(x), repr(d), repr(h), repr(cost)])
    return 0


def cmd_sessions_generate(args) -> int:
    params = SessionGeneratorParams(
        horizon=args.horizon,
        stations=args.stations,
        arrival_rate=args.rate,
        stay_min=args.stay_min,
        stay_max=args.stay_max,
        energy_min=args.energy_min,
        energy_max=args.energy_max,
        peak_rate=args.peak_rate,
    )
    sessions = generate_sessions(params, args.seed)
    write_sessions(args.out, sessions)
    logger.info("wrote %d sessions to %s", len(sessions), args.out)
    return 0


def cmd_check(args) -> int:
    problems: list[str] = []
    try:
        config = load_run_config(args.config)
        sessions = read_sessions(args.sessions)
        build_instance(config, sessions)
        if args.prices:
            read_prices(args.prices, config.horizon)
        if config.operator_mode == "rhc" and not args.prices:
            problems.append("operator mode is rhc but no price file was given")
    except ValidationError as exc:
        problems.extend(exc.problems)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "check",
        "ok": not problems,
        "problems": problems,
    }
    sys.stdout.write(dumps_deterministic(payload))
    return 0 if not problems else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "feedback":
            return cmd_feedback(args)
        if args.command == "capacity":
            return cmd_capacity(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "sessions":
            return cmd_sessions_generate(args)
        if args.command == "check":
            return cmd_check(args)
    except ValidationError as exc:
        for problem in exc.problems:
            print(f"error: {problem}", file=sys.stderr)
        return 1
    except DeadEnd as exc:
        print(f"dead end: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())

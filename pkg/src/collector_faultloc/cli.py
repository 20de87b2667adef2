"""Command-line front end.

Subcommands mirror the study pipeline: ``calibrate`` evaluates the
penetration-dispersion half-width, ``simulate`` solves an explicit scenario
list, ``montecarlo`` generates a converged scenario set, ``locate`` scores
locator methods over a record file and ``report`` aggregates the scores
(rendering boxplot figures next to the delimited output unless told not
to).

Exit codes: 0 success, 1 configuration error, 2 parse/unit error in an
input file, 3 a solve or the Monte Carlo loop failed to converge.
"""

import argparse
import json
import os
import sys
from pathlib import Path

from . import harness, montecarlo, plots, records
from .errors import (
    ConfigError,
    FaultLocError,
    NoConvergenceError,
    ParseError,
    UnitError,
)
from .feeder import load_feeder
from .locators import LocatorConfig
from .montecarlo import calibrate_delta
from .oracle import FaultSpec, IbrControlConfig, PenetrationVector, solve_fault

SEED_ENV_VAR = "FAULTLOC_SEED"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARSE = 2
EXIT_NO_CONVERGENCE = 3


def _control_from(raw: dict | None) -> IbrControlConfig:
    if not raw:
        return IbrControlConfig()
    known = {"current_limit", "ride_through_threshold", "reactive_gain",
             "negative_seq_injection"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown control fields: {', '.join(sorted(unknown))}")
    return IbrControlConfig(**raw)


def _cmd_calibrate(args) -> int:
    delta = calibrate_delta(args.rmax)
    print(json.dumps({"r_max": args.rmax, "delta": delta}))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    feeder = load_feeder(args.feeder)
    with open(args.scenarios, "r", encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(f"scenario file {args.scenarios}: invalid JSON ({exc})") from exc
    if "scenarios" not in raw or not raw["scenarios"]:
        raise ConfigError("scenario file carries no scenarios")
    control = _control_from(raw.get("control"))
    z_base = feeder.z_base_ohm

    out_records = []
    for index, entry in enumerate(raw["scenarios"]):
        fault_raw = entry.get("fault")
        if fault_raw is None or "type" not in fault_raw or "distance" not in fault_raw:
            raise ParseError(f"scenario #{index}: fault needs 'type' and 'distance'",
                             field=f"scenarios[{index}].fault")
        if "resistance_pu" in fault_raw:
            r_pu = float(fault_raw["resistance_pu"])
            r_ohm = float(fault_raw.get("resistance_ohm", r_pu * z_base))
        elif "resistance_ohm" in fault_raw:
            r_ohm = float(fault_raw["resistance_ohm"])
            r_pu = r_ohm / z_base
        else:
            r_pu, r_ohm = 0.0, 0.0
        fault = FaultSpec(
            fault_type=str(fault_raw["type"]),
            distance=float(fault_raw["distance"]),
            resistance=r_pu,
            inception_angle=float(fault_raw.get("inception_deg", 0.0)),
            resistance_ohm=r_ohm,
        )
        pen = PenetrationVector(tuple(float(v) for v in entry.get("penetration", [])))
        out_records.append(solve_fault(feeder.spec, fault, pen, control, scenario_id=index))

    header = records.RecordHeader(feeder.base_mva, feeder.base_kv, feeder.spec.name)
    records.export_records(out_records, header, args.out)
    print(f"simulated {len(out_records)} scenarios -> {args.out}")
    return EXIT_OK


def _cmd_montecarlo(args) -> int:
    feeder = load_feeder(args.feeder)
    cfg = montecarlo.load_mc_config(args.config, feeder.base_mva, feeder.base_kv)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            cfg = montecarlo.with_seed(cfg, int(env_seed))
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR}={env_seed!r} is not an integer") from None

    with open(args.config, "r", encoding="utf-8") as handle:
        control = _control_from(json.load(handle).get("control"))
    oracle = montecarlo.make_oracle(feeder.spec, control)
    mc_records, trace = montecarlo.run_until_converged(feeder.spec, cfg, oracle,
                                                       batch=args.batch)

    header = records.RecordHeader(feeder.base_mva, feeder.base_kv, feeder.spec.name)
    records.export_records(mc_records, header, args.out)
    if args.trace:
        montecarlo.save_trace_csv(trace, args.trace)
        if args.figures:
            figure_path = Path(args.trace).with_suffix(".png")
            plots.render_convergence_trace(trace, figure_path,
                                           title=f"{feeder.spec.name}: resolution convergence")
            print(f"figure -> {figure_path}")
    if trace.converged_at is not None:
        print(f"converged at n={trace.converged_at} "
              f"(eps={trace.entries[-1][1]:.3e} pu <= {trace.tol_pu:.3e} pu); "
              f"records -> {args.out}")
        return EXIT_OK
    print(f"hit cap at n={len(mc_records)} without meeting the resolution tolerance; "
          f"records -> {args.out}")
    return EXIT_NO_CONVERGENCE


def _cmd_locate(args) -> int:
    feeder = load_feeder(args.feeder)
    _, record_list = records.ingest_records(
        args.records, expect_base=(feeder.base_mva, feeder.base_kv)
    )
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise ConfigError("no methods given")
    source = {"proxy": "practical_proxy", "truth": "ground_truth"}.get(args.current_source)
    if source is None:
        raise ConfigError(f"current source must be proxy or truth, got {args.current_source!r}")
    samples = harness.run_benchmark(record_list, methods, feeder.spec,
                                    LocatorConfig(), current_source=source)
    harness.save_samples_csv(samples, args.out)
    print(f"scored {len(samples)} (record, method) pairs -> {args.out}")
    return EXIT_OK


def _cmd_report(args) -> int:
    samples = harness.load_samples_csv(args.errors)
    group_by = tuple(k.strip() for k in args.group_by.split(",") if k.strip())
    tables = harness.aggregate(samples, group_by)
    harness.save_report_json(tables, group_by, args.out, source=str(args.errors))
    print(f"aggregated {len(samples)} samples into {len(tables)} groups -> {args.out}")

    if args.figures and "method" in group_by:
        other = [k for k in group_by if k != "method"]
        if other:
            x_key = other[0]
            out = Path(args.out)
            figure_path = out.with_name(f"{out.stem}_boxplot_{x_key}.png")
            plots.render_error_boxplot(tables, x_key, figure_path,
                                       title=f"location error by {x_key}")
            print(f"figure -> {figure_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faultloc",
        description="One-terminal fault location toolkit for collector feeders with "
                    "inverter-based resources",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="penetration dispersion half-width for a "
                                         "correlation bound")
    p.add_argument("--rmax", type=float, required=True)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("simulate", help="solve an explicit scenario list")
    p.add_argument("--feeder", required=True)
    p.add_argument("--scenarios", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("montecarlo", help="generate scenarios until the resolution "
                                          "criterion is met")
    p.add_argument("--feeder", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=_cmd_montecarlo, figures=True)

    p = sub.add_parser("locate", help="score locator methods over a record file")
    p.add_argument("--records", required=True)
    p.add_argument("--feeder", required=True)
    p.add_argument("--methods", default="takz,takz_new,takn,taks,reactance,impedance,proposed")
    p.add_argument("--current-source", dest="current_source", default="proxy")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_locate)

    p = sub.add_parser("report", help="aggregate scored samples into grouped statistics")
    p.add_argument("--errors", required=True)
    p.add_argument("--group-by", dest="group_by", default="method,fault_type")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=_cmd_report, figures=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, UnitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NoConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (ConfigError, FaultLocError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()

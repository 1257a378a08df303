"""Command-line interface.  All times are in months.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical degeneracy.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import harness, model, sim
from .exceptions import DataError, DegenerateVarianceError
from .survdata import read_dataset, write_dataset
from .tests import FHParams, fleming_harrington, logrank, max_combo, mwlr, rmst_test

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DEGENERATE = 4

ANALYZE_TESTS = ("lr", "mwlr", "fh", "maxcombo", "rmst")


class UsageError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _design_params(args, p_prime: float) -> model.SwitchModelParams:
    try:
        return model.SwitchModelParams(args.pfs0, args.os0, args.os1, p_prime)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def cmd_weights(args) -> int:
    if not args.t_max > 0 or not args.step > 0:
        raise UsageError("--t-max and --step must be positive")
    n = int(math.floor(args.t_max / args.step + 1e-9))
    t = np.arange(n + 1) * args.step
    designs = [_design_params(args, pp) for pp in args.p_prime]
    out, close = _open_out(args.out)
    try:
        out.write("p_prime,t,eta,w\n")
        for pp, params in zip(args.p_prime, designs):
            rates = model.rates_from_medians(params)
            eta = model.hazard_ratio(rates, pp, t)
            w = model.weight_function(params, t)
            for ti, ei, wi in zip(t.tolist(), eta.tolist(), w.tolist()):
                out.write(f"{pp!r},{ti!r},{ei!r},{wi!r}\n")
    finally:
        if close:
            out.close()
    return EXIT_OK


def cmd_analyze(args) -> int:
    wanted = [t.strip().lower() for t in args.tests.split(",") if t.strip()]
    bad = [t for t in wanted if t not in ANALYZE_TESTS]
    if bad or not wanted:
        raise UsageError(f"unknown test(s) {bad}; choose from {','.join(ANALYZE_TESTS)}")
    design = None
    if "mwlr" in wanted:
        missing = [f for f in ("p_prime", "pfs0", "os0", "os1") if getattr(args, f) is None]
        if missing:
            raise UsageError("mwlr needs " + ", ".join("--" + m.replace("_", "-") for m in missing))
        design = _design_params(args, args.p_prime)
    with open(args.data) as fh:
        data = read_dataset(fh)
    status = EXIT_OK
    for name in wanted:
        try:
            if name == "lr":
                record = logrank(data).as_dict()
            elif name == "mwlr":
                record = mwlr(data, design).as_dict()
            elif name == "fh":
                record = fleming_harrington(data, FHParams(args.rho, args.gamma)).as_dict()
            elif name == "rmst":
                record = rmst_test(data).as_dict()
            else:
                mc = max_combo(data)
                record = {"test": "MaxCombo", "U": None, "V": None, "z": mc.z_max, "p": mc.p_one_sided}
        except DegenerateVarianceError as exc:
            record = {"test": name, "error": str(exc)}
            status = EXIT_DEGENERATE
        print(json.dumps(record))
    return status


def _load_scenario(path) -> sim.TrialScenario:
    import yaml

    if path is None:
        text = resources.files("switchrank").joinpath("data/default_scenario.yaml").read_text()
    else:
        text = Path(path).read_text()
    mapping = yaml.safe_load(text)
    if not isinstance(mapping, dict) or "true_params" not in mapping:
        raise UsageError("scenario file must be a mapping with a true_params section")
    mapping.pop("seed", None)
    try:
        return sim.TrialScenario.from_dict(mapping)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad scenario: {exc}") from None


def cmd_simulate(args) -> int:
    scenario = _load_scenario(args.scenario)
    scenario = sim.TrialScenario.from_dict({**scenario.to_dict(), "seed": args.seed})
    trial = sim.simulate_trial_full(scenario, args.replication)
    out, close = _open_out(args.out)
    try:
        write_dataset(trial.data, out, include_switch=True)
    finally:
        if close:
            out.close()
    if args.out and args.out != "-":
        sidecar = {
            "scenario": scenario.to_dict(),
            "replication": args.replication,
            "cutoff_calendar_months": trial.cutoff,
            "events": int(trial.data.event.sum()),
        }
        with open(args.out + ".json", "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def cmd_power(args) -> int:
    try:
        config = harness.load_config(args.config)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    config.seed = args.seed
    if args.full:
        config.replications = harness.FULL_REPLICATIONS
    if args.replications is not None:
        config.replications = args.replications
    out_dir = args.out or config.output
    if out_dir is None:
        raise UsageError("--out is required (or set output in the config)")
    if args.events_sweep:
        rows = harness.events_sweep(config, workers=args.workers)
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        with open(Path(out_dir) / "events_sweep.csv", "w") as fh:
            fh.write("switch_prob,target_deaths,power,power_se\n")
            for r in rows:
                fh.write(f"{r.switch_prob!r},{r.target_deaths},{r.power!r},{r.power_se!r}\n")
        return EXIT_OK
    result = harness.run_power_study(config, workers=args.workers)
    harness.write_outputs(result, out_dir)
    return EXIT_DEGENERATE if result.all_degenerate() else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="switchrank",
        description="Weighted log-rank tests under treatment switching. All times are in months.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def design_flags(p, required):
        p.add_argument("--pfs0", type=float, default=2.0 if required else None, help="control median PFS")
        p.add_argument("--os0", type=float, default=10.0 if required else None, help="control median OS")
        p.add_argument("--os1", type=float, default=15.0 if required else None, help="experimental median OS")

    p = sub.add_parser("weights", help="tabulate eta(t) and w(t) as CSV")
    design_flags(p, True)
    p.add_argument("--p-prime", type=_float_list, default=[0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
                   help="design switching probabilities, comma separated")
    p.add_argument("--t-max", type=float, default=40.0)
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--out", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("analyze", help="run tests on a CSV dataset, one JSON line per test")
    p.add_argument("--data", required=True)
    p.add_argument("--tests", default="lr", help=f"comma separated subset of {','.join(ANALYZE_TESTS)}")
    design_flags(p, False)
    p.add_argument("--p-prime", type=float, help="design switching probability (mwlr)")
    p.add_argument("--rho", type=float, default=1.0, help="Fleming-Harrington rho (fh)")
    p.add_argument("--gamma", type=float, default=0.0, help="Fleming-Harrington gamma (fh)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="simulate one trial to CSV plus a JSON sidecar")
    p.add_argument("--scenario", help="scenario YAML (default: bundled 139/277, 221-death design)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--replication", type=int, default=0)
    p.add_argument("--out", help="output CSV (default stdout, no sidecar)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("power", help="Monte Carlo power/efficiency study")
    p.add_argument("--config", required=True, help="YAML config")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", help="output directory")
    p.add_argument("--full", action="store_true", help=f"use {harness.FULL_REPLICATIONS} replications")
    p.add_argument("--replications", type=int)
    p.add_argument("--workers", type=int, help=f"worker processes (default ${harness.WORKERS_ENV} or all cores)")
    p.add_argument("--events-sweep", action="store_true", help="log-rank power against target deaths")
    p.set_defaults(func=cmd_power)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"switchrank: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"switchrank: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DegenerateVarianceError as exc:
        print(f"switchrank: degenerate: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())

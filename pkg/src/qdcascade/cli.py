"""Command-line entry point: run, list and validate scenarios.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.  The default
output directory comes from --out, then the QDCASCADE_OUT environment
variable, then the current directory.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback

import yaml

from .config import ConfigError, apply_dotted
from .scenarios import ScenarioConfig, list_scenarios, run_scenario, validate_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="qdcascade",
        description="Seeded scenario runs of the cascaded quantum-dot simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a named scenario")
    run_p.add_argument("--scenario", help="scenario name (see 'list')")
    run_p.add_argument("--config", help="YAML config file (may also name the scenario)")
    run_p.add_argument("--seed", type=int, help="master seed override")
    run_p.add_argument("--out", help="output directory (default $QDCASCADE_OUT or '.')")
    run_p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted config override, e.g. --set target.delta_e_ghz=2.4",
    )

    sub.add_parser("list", help="list scenarios with one-line descriptions")

    val_p = sub.add_parser("validate", help="validate a config file")
    val_p.add_argument("config", help="YAML config file")
    return parser


def _load_run_config(args) -> ScenarioConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a mapping")
    if args.scenario:
        data["scenario"] = args.scenario
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set needs KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        apply_dotted(data, key.strip(), value)
    if args.seed is not None:
        data["master_seed"] = args.seed
    out_dir = args.out or data.pop("output_dir", None) or os.environ.get("QDCASCADE_OUT") or "."
    cfg = validate_config(data)
    return ScenarioConfig(cfg.name, cfg.master_seed, out_dir, cfg.resolved)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "list":
        for name, desc in list_scenarios():
            print(f"{name:24s} {desc}")
        return EXIT_OK
    if args.command == "validate":
        try:
            with open(args.config) as fh:
                cfg = validate_config(fh.read())
        except FileNotFoundError:
            print(f"config error: no such file: {args.config}", file=sys.stderr)
            return EXIT_CONFIG
        except (ConfigError, yaml.YAMLError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"ok: scenario {cfg.name}, seed {cfg.master_seed}")
        return EXIT_OK
    # run
    try:
        cfg = _load_run_config(args)
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        status = run_scenario(cfg)
    except Exception as exc:  # runtime failures carry scenario context
        print(f"runtime error in scenario {cfg.name}: {exc}", file=sys.stderr)
        traceback.print_exc()
        return EXIT_RUNTIME
    print(f"scenario {cfg.name} done -> {cfg.output_dir}")
    return EXIT_OK if status == 0 else EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

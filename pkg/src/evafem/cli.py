"""Command line interface: run benchmark problems, list them, check configs."""

import argparse
import sys
from pathlib import Path

from evafem import driver
from evafem.problems import get_problem, list_problems

_CONFIG_KEYS = {
    "problem": str,
    "theta": float,
    "criterion": str,
    "alpha_E": float,
    "alpha_gamma": float,
    "n_min": int,
    "n_batch": int,
    "d_init": int,
    "delta_d": int,
    "tau": float,
    "g_tol": float,
    "N_max": int,
    "rel_energy_stop": float,
    "seed_sweeps": int,
    "ref_value": float,
}


class ConfigError(ValueError):
    pass


def parse_config(path) -> dict:
    """Flat key=value file; unknown keys are rejected."""
    values = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](value)
        except ValueError:
            raise ConfigError(
                f"{path}:{lineno}: cannot parse {value!r} as {_CONFIG_KEYS[key].__name__}"
            ) from None
    return values


def _build_config(args) -> driver.DriverConfig:
    file_values = parse_config(args.config) if args.config else {}
    problem = args.problem or file_values.get("problem")
    criterion = args.criterion or file_values.get("criterion")
    if problem is None:
        raise ConfigError("no problem specified (flag --problem or config key)")
    if criterion is None:
        raise ConfigError("no criterion specified (flag --criterion or config key)")
    get_problem(problem)  # fail early with the list of known ids

    overrides = {}
    for key in ("alpha_E", "alpha_gamma", "n_min", "n_batch", "d_init", "delta_d",
                "tau", "g_tol"):
        if key in file_values:
            overrides[key] = file_values[key]
    if "theta" in file_values:
        overrides["theta"] = file_values["theta"]
    if "N_max" in file_values:
        overrides["n_max"] = file_values["N_max"]
    if "rel_energy_stop" in file_values:
        overrides["rel_energy_stop"] = file_values["rel_energy_stop"]
    if "seed_sweeps" in file_values:
        overrides["seed_sweeps"] = file_values["seed_sweeps"]
    if "ref_value" in file_values:
        overrides["ref_value"] = file_values["ref_value"]
    return driver.make_config(
        problem, criterion,
        diagnostics=args.diagnostics, snapshots=args.snapshots, timing=args.timing,
        **overrides,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="evafem",
        description="Energy-driven adaptive P1 FEM benchmark runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one adaptive benchmark")
    p_run.add_argument("--problem", help="problem id (see list-problems)")
    p_run.add_argument("--criterion", choices=["tail_off", "relative", "default"])
    p_run.add_argument("--config", help="key=value configuration file")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--diagnostics", action="store_true",
                       help="compute the iteration error with a tight reference solve")
    p_run.add_argument("--snapshots", action="store_true",
                       help="write per-step mesh snapshots (ascii-tri v1)")
    p_run.add_argument("--timing", action="store_true",
                       help="record wall-clock seconds per step in the CSV")
    p_run.add_argument("--self-reference", action="store_true",
                       help="derive the reference energy from a 2-rounds-deeper run")

    p_list = sub.add_parser("list-problems", help="list catalog problem ids")

    p_val = sub.add_parser("validate-config", help="check a configuration file")
    p_val.add_argument("config")

    args = parser.parse_args(argv)

    if args.command == "list-problems":
        for name in list_problems():
            problem = get_problem(name)
            kind = "linear" if problem.is_linear else "nonlinear"
            print(f"{name:24s} {kind:9s} {problem.description}")
        return 0

    if args.command == "validate-config":
        try:
            values = parse_config(args.config)
        except (ConfigError, OSError) as err:
            print(f"invalid: {err}", file=sys.stderr)
            return 1
        for key in sorted(values):
            print(f"{key} = {values[key]}")
        print("ok")
        return 0

    # run
    try:
        config = _build_config(args)
        if args.self_reference:
            config.self_reference = True
        records = driver.run(config)
        written = driver.emit_outputs(records, config, args.out)
    except (ConfigError, KeyError, driver.DriverError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    last = records[-1]
    print(f"{config.problem} [{config.criterion}]: {len(records)} steps, "
          f"final ndof {last.ndof}, final energy {last.energy:.12g}")
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

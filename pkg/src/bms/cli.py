"""Command line front end.

Subcommands: run (one Monte Carlo scenario, reports written to a
directory), sweep (one parameter axis), observability (switching and
observability statistics), ledger (stability constants and the tuned
arrival scale).  Configurations are INI files; see load_config for the
recognized sections and keys.

Exit codes: 0 on success, 2 when window solves fail to converge, 3 on a
configuration problem.
"""

import argparse
import configparser
import json
import sys as _sys

from . import bench
from .errors import ConfigError, ConvergenceError

_SCHEMA = {
    "scenario": {
        "kind": str,
        "estimator": str,
        "n": int,
        "duration": int,
        "trials": int,
        "seed": int,
    },
    "weights": {"p": float, "q": float, "r": float, "epsilon": float},
    "sensing": {
        "tau": "floats",
        "noise_bound": float,
        "noise_variance": float,
        "n_sensors": int,
    },
    "network": {"gamma": float},
    "fast": {"local_order": int, "local_q": float, "local_window": int},
    "sweep": {"axis": str, "grid": str},
}

_FIELD_NAMES = {
    "n": "N",
    "p": "P",
    "q": "Q",
    "r": "R",
}


def load_config(path):
    """Parse an INI scenario file.

    Returns (ScenarioConfig, sweep_spec) where sweep_spec is None or a
    dict with axis and grid taken from the [sweep] section.
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    kwargs = {}
    sweep_spec = None
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        schema = _SCHEMA[section]
        for key, raw in parser.items(section):
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            kind = schema[key]
            try:
                if kind == "floats":
                    value = tuple(float(v) for v in raw.split(",") if v.strip())
                elif kind is str:
                    value = raw.strip()
                else:
                    value = kind(raw)
            except ValueError:
                raise ConfigError(
                    f"bad value {raw!r} for {key} in [{section}]"
                ) from None
            if section == "sweep":
                sweep_spec = sweep_spec or {}
                sweep_spec[key] = value
            else:
                kwargs[_FIELD_NAMES.get(key, key)] = value
    if "kind" not in kwargs or "estimator" not in kwargs:
        raise ConfigError("the [scenario] section needs kind and estimator")
    return bench.ScenarioConfig(**kwargs), sweep_spec


def parse_grid(text, integer=False):
    """Grid values from 'a:b:step' (inclusive) or a comma list."""
    text = text.strip()
    try:
        if ":" in text:
            a, b, step = (float(v) for v in text.split(":"))
            if step <= 0 or b < a:
                raise ValueError
            values = []
            v = a
            while v <= b + 1e-12 * max(1.0, abs(step)):
                values.append(v)
                v += step
        else:
            values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse grid {text!r}") from None
    if not values:
        raise ConfigError(f"empty grid {text!r}")
    if integer:
        return [int(round(v)) for v in values]
    return values


def _cmd_run(args):
    cfg, _ = load_config(args.config)
    if args.seed is not None:
        cfg = bench.replace(cfg, seed=args.seed)
    result = bench.run_scenario(cfg)
    bench.emit(result, cfg, args.out)
    print(
        f"{cfg.kind}/{cfg.estimator}: {result.windows} windows, "
        f"final rmse {result.rmse[-1]:.6g}, reports in {args.out}"
    )
    return 0


def _cmd_sweep(args):
    cfg, sweep_spec = load_config(args.config)
    if args.seed is not None:
        cfg = bench.replace(cfg, seed=args.seed)
    axis = args.axis or (sweep_spec or {}).get("axis")
    grid_text = args.grid or (sweep_spec or {}).get("grid")
    if not axis or not grid_text:
        raise ConfigError("sweep needs an axis and a grid")
    values = parse_grid(grid_text, integer=axis == "N")
    rows = bench.sweep(cfg, axis, values, out_dir=args.out)
    for v, res in rows:
        print(f"{axis}={v:g}: delta={res.delta:.6g} rmse={res.rmse[-1]:.6g}")
    return 0


def _cmd_observability(args):
    cfg, _ = load_config(args.config)
    report = bench.observability_report(cfg)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_ledger(args):
    cfg, _ = load_config(args.config)
    report = bench.ledger_report(cfg)
    for key in sorted(report):
        print(f"{key} = {report[key]!r}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="bms", description="moving-horizon estimation with binary sensors"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario and write reports")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", required=True)
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a scenario across one axis")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--axis", choices=bench.SWEEP_AXES, default=None)
    p_sweep.add_argument("--grid", default=None, help="a:b:step or v1,v2,...")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_obs = sub.add_parser("observability", help="switching statistics")
    p_obs.add_argument("--config", required=True)
    p_obs.set_defaults(fn=_cmd_observability)

    p_led = sub.add_parser("ledger", help="stability constants")
    p_led.add_argument("--config", required=True)
    p_led.set_defaults(fn=_cmd_ledger)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=_sys.stderr)
        return 3
    except ConvergenceError as e:
        print(f"convergence failure: {e}", file=_sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

"""``mfes`` command-line entry point.

Exit codes: 0 success, 2 config error, 3 numerical abort.
"""

import argparse
import logging
import sys

from . import config as config_mod
from . import experiments
from .errors import ConfigError, NotStabilizableError, NumericalConditioningError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="mfes", description="Multi-fidelity entropy search experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("synthetic", "1-D two-source demo"),
                       ("cartpole", "LQR tuning of the cart-pole"),
                       ("compare", "MF-ES vs. physical-only ES over all configured seeds"),
                       ("validate-config", "check a config file against the schema")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", help="YAML run config (default: the bundled one for the command)")
        if name in ("synthetic", "cartpole"):
            sp.add_argument("--seed", type=int, help="run only this seed (default: all configured seeds)")
            sp.add_argument("--mode", choices=["mfes", "es"], help="override the configured mode")
    return p


def _load(args, problem):
    path = args.config or config_mod.default_config_path(problem)
    cfg = config_mod.load(path)
    if problem is not None and args.config and cfg["problem"] != problem:
        raise ConfigError(f"'{args.command}' needs problem {problem}, config has {cfg['problem']}",
                          line=1, path=str(path))
    return cfg


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate-config":
            if not args.config:
                raise ConfigError("--config is required")
            cfg = config_mod.load(args.config)
            config_mod.build(cfg)
            print(f"{args.config}: ok ({cfg['problem']})")
            return EXIT_OK
        problem = {"synthetic": "synthetic1d", "cartpole": "cartpole"}.get(args.command)
        cfg = _load(args, problem)
        exp = config_mod.build(cfg)
        root = experiments.output_root(cfg)
        if args.command == "compare":
            rows, agg, aborted = experiments.compare(exp, root / cfg["problem"] / "compare")
            for mode in ("mfes", "es"):
                a = agg[mode]
                print(f"{mode}: {a['runs']} runs, mean #exp {a['n_exp_mean']}, "
                      f"mean final cost {a['final_cost_mean']}")
            return EXIT_NUMERICAL if aborted else EXIT_OK
        mode = args.mode or cfg.get("mode", "mfes")
        seeds = [args.seed] if args.seed is not None else cfg["seeds"]
        for seed in seeds:
            out = root / cfg["problem"] / mode / f"seed_{seed}"
            _, summary = experiments.run_one(exp, seed, mode, out)
            print(f"seed {seed}: theta_bg {summary['theta_bg']} final cost "
                  f"{summary['final_cost']:.6g} ({summary['stop_reason']}) -> {out}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalConditioningError, NotStabilizableError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

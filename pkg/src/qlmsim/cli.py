"""Command-line entry point: ``qlmsim <build|simulate|mitigate|scan|report|run> --config FILE``.

Exit codes: 0 success, 2 configuration error, 3 numerical or mitigation error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from . import experiment as E
from .mitigation import MitigationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

log = logging.getLogger("qlmsim")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qlmsim", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML experiment config")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int,
                        help="base seed; replaces every entry of the seeds section")
    common.add_argument("--backend", choices=("exact", "mps"), help="physics backend override")
    common.add_argument("--steps", help="step range such as 1-15, or a single step")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("build", "write gate lists of the physics and vacuum circuits"),
                       ("simulate", "ideal and noisy simulation, writes distributions"),
                       ("mitigate", "apply mDEM for every (epsilon, n_C) candidate"),
                       ("scan", "choose hyperparameters per step and bootstrap errors"),
                       ("report", "write CSV, JSON summary and SVG heatmap"),
                       ("run", "all stages in sequence")):
        sub.add_parser(name, parents=[common], help=text)
    return p


def _apply_overrides(cfg: E.ExperimentConfig, args) -> E.ExperimentConfig:
    changes = {}
    if args.out:
        changes["out_dir"] = args.out
    if args.seed is not None:
        if args.seed < 0:
            raise E.ConfigError("--seed must be non-negative")
        changes["seeds"] = {k: args.seed + i for i, k in enumerate(sorted(cfg.seeds))}
    if args.backend:
        changes["physics_backend"] = args.backend
    if args.steps:
        changes["steps"] = E._parse_steps(args.steps, cfg.model.n_steps)
    if not changes:
        return cfg
    raw = cfg.to_dict()
    new = replace(cfg, **changes)
    # re-validate the combination through the same path as a fresh file
    raw.update({"seeds": new.seeds, "steps": None if new.steps is None else list(new.steps)})
    raw["backend"]["physics"] = new.physics_backend
    raw["output"]["dir"] = new.out_dir
    return E.config_from_dict(raw)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_overrides(E.load_config(args.config), args)
    except E.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "build":
            for path in E.stage_build(cfg):
                print(path)
        elif args.command == "simulate":
            E.stage_simulate(cfg)
        elif args.command == "mitigate":
            if not cfg.noiseless:
                E.stage_mitigate(cfg)
        elif args.command == "scan":
            if not cfg.noiseless:
                E.stage_scan(cfg)
        elif args.command == "report":
            for path in E.emit_report(E.assemble_result(cfg), cfg.out_dir):
                print(path)
        else:
            res = E.run_experiment(cfg)
            print(f"wrote {len(res.steps)} steps to {cfg.out_dir}")
    except (MitigationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"missing input from an earlier stage: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

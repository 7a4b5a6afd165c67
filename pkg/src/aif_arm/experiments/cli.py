"""Command line entry point: ``aif-arm``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from ..errors import DivergenceError, ScenarioError
from ..genmodel import AnalyticFK, gpr_fit, sample_fk_dataset
from .config import SCENARIOS, load_scenario, scenario_from_dict
from .logs import summarize_dir, write_run
from .presets import preset_dict
from .runner import run_scenario

log = logging.getLogger("aif_arm")

EXIT_OK, EXIT_VALIDATION, EXIT_DIVERGENCE = 0, 1, 2


def _load(spec: str):
    path = Path(spec)
    if path.exists():
        return load_scenario(path)
    if spec in SCENARIOS:
        return scenario_from_dict(preset_dict(spec))
    raise ScenarioError(f"no scenario file {spec!r} and no preset by that name")


def cmd_run(args) -> int:
    scn = _load(args.scenario)
    if args.seed is not None:
        scn = replace(scn, seed=args.seed)
    if args.trials is not None:
        scn = replace(scn, trials=args.trials)
    scn.validate()
    records = run_scenario(scn, jobs=args.jobs)
    summary = write_run(records, args.out, scn.name)
    if not args.quiet:
        brief = {k: v for k, v in summary.items() if k not in ("mean_vfe_trajectory", "variants")}
        print(json.dumps(brief, indent=1))
        for name, sub in summary.get("variants", {}).items():
            print(f"{name}: converged {sub['converged']}/{sub['trials']}, "
                  f"mean tracking error {sub['mean_tracking_err_rad']:.4f} rad")
    return EXIT_OK


def cmd_summarize(args) -> int:
    summary = summarize_dir(args.dir)
    summary.pop("mean_vfe_trajectory", None)
    for sub in summary.get("variants", {}).values():
        sub.pop("mean_vfe_trajectory", None)
    print(json.dumps(summary, indent=1))
    return EXIT_OK


def cmd_fit_gpr(args) -> int:
    if args.samples < 1:
        raise ScenarioError("--samples must be >= 1")
    fk = AnalyticFK(args.links)
    X, Y = sample_fk_dataset(fk, args.samples, -args.range, args.range, seed=args.seed, design=args.design)
    model = gpr_fit(X, Y, args.length_scale, args.signal_variance, args.noise_variance)
    model.save(args.out)
    if not args.quiet:
        print(f"fitted GPR on {args.samples} samples -> {args.out}")
    return EXIT_OK


def cmd_preset(args) -> int:
    text = yaml.safe_dump(preset_dict(args.name), sort_keys=False)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aif-arm", description="Active-inference arm experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write CSV/JSON logs")
    run.add_argument("--scenario", required=True, help="scenario YAML file or preset name")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--jobs", type=int, default=1, help="worker processes")
    run.add_argument("--quiet", action="store_true")
    run.set_defaults(func=cmd_run)

    summ = sub.add_parser("summarize", help="summarize a run directory")
    summ.add_argument("dir")
    summ.set_defaults(func=cmd_summarize)

    fit = sub.add_parser("fit-gpr", help="fit the GPR visual model on sampled planar FK")
    fit.add_argument("--samples", type=int, required=True)
    fit.add_argument("--out", required=True)
    fit.add_argument("--links", type=float, nargs="+", default=[1.0, 1.0])
    fit.add_argument("--length-scale", type=float, default=0.5)
    fit.add_argument("--signal-variance", type=float, default=1.0)
    fit.add_argument("--noise-variance", type=float, default=1e-4)
    fit.add_argument("--range", type=float, default=float(np.pi / 2), help="joint sampling half-range, rad")
    fit.add_argument("--design", choices=("grid", "sobol"), default="grid")
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--quiet", action="store_true")
    fit.set_defaults(func=cmd_fit_gpr)

    pre = sub.add_parser("preset", help="print a built-in scenario as YAML")
    pre.add_argument("name", choices=SCENARIOS)
    pre.add_argument("--out")
    pre.set_defaults(func=cmd_preset)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DivergenceError as exc:
        log.error("%s", exc)
        return EXIT_DIVERGENCE
    except (ScenarioError, ValueError, KeyError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

"""Command line: ``seafusion {run,simulate,evaluate,profile,project}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import List, Optional

from . import app, plots
from .errors import SeafusionError

logger = logging.getLogger("seafusion")


def _common(p: argparse.ArgumentParser, dataset=True):
    p.add_argument("--config", help="key: value config file")
    if dataset:
        p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--output", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, default=None, help="random seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seafusion", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the fusion pipeline over a dataset")
    _common(p)
    p.add_argument("--figures", action="store_true", help="render a bird's-eye figure of the last frame")

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    _common(p, dataset=False)
    p.add_argument("--scenario", help="scenario file; default is the three-boat scene")
    p.add_argument("--dropout", type=float, default=None, help="override detector dropout")

    p = sub.add_parser("evaluate", help="score 2D predictions against ground truth")
    _common(p, dataset=False)
    p.add_argument("--predictions", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--iou-threshold", type=float, required=True)
    p.add_argument("--class-agnostic", action="store_true")

    p = sub.add_parser("profile", help="time the pipeline stages")
    _common(p)
    p.add_argument("--repetitions", type=int, default=3)

    p = sub.add_parser("project", help="project a frame's cloud into the image")
    _common(p)
    p.add_argument("--frame", type=int, required=True)
    return parser


def cmd_run(args) -> int:
    cfg = app.load_config(args.config)
    result = app.run_pipeline(args.dataset, cfg, args.output)
    if args.figures and result.maps:
        plots.plot_obstacle_map(result.maps[-1], os.path.join(args.output, "obstacle_map.png"), extent=cfg.r_max)
    print(f"frames: {result.n_frames}")
    print(f"skipped: {len(result.skipped)}")
    print(f"obstacles: {os.path.join(args.output, 'obstacles.txt')}")
    return 0 if result.ok else 1


def cmd_simulate(args) -> int:
    from . import sim

    if args.config:
        # fail fast on a bad pipeline config even though simulation does not use it
        app.load_config(args.config)
    scenario_cfg = sim.load_scenario(args.scenario) if args.scenario else sim.three_boat_scenario()
    if args.seed is not None:
        scenario_cfg.seed = args.seed
    if args.dropout is not None:
        scenario_cfg.detector.dropout = args.dropout
    scenario_cfg.validate()
    scenario = sim.generate_scenario(scenario_cfg)
    app.write_dataset(scenario, args.output)
    print(f"frames: {len(scenario.frames)}")
    print(f"dataset: {args.output}")
    return 0


def cmd_evaluate(args) -> int:
    if args.config:
        app.load_config(args.config)
    report = app.evaluate_files(args.predictions, args.ground_truth, args.iou_threshold, args.class_agnostic)
    app.write_report(report, args.output)
    curves = app.pr_curves(args.predictions, args.ground_truth, args.iou_threshold, args.class_agnostic)
    if curves:
        plots.plot_pr_curve(curves, os.path.join(args.output, "pr_curve.png"))
    sys.stdout.write(app.format_report(report))
    return 0


def cmd_profile(args) -> int:
    cfg = app.load_config(args.config)
    summary = app.profile(args.dataset, cfg, args.repetitions)
    app.write_profile(summary, args.output)
    plots.plot_timing(summary.rows, os.path.join(args.output, "profile.png"), summary.budget_ms)
    med, p95 = summary.stats["total"]
    print(f"rows: {len(summary.rows)}")
    print(f"total_median_ms: {med:.3f}")
    print(f"total_p95_ms: {p95:.3f}")
    print(f"budget_ms: {summary.budget_ms:.3f}")
    print(f"budget_violations: {summary.violations}")
    return 0


def cmd_project(args) -> int:
    cfg = app.load_config(args.config)
    overlay, calib = app.project_debug(args.dataset, args.frame, cfg.sync_slack)
    os.makedirs(args.output, exist_ok=True)
    app.write_overlay(os.path.join(args.output, f"projection_{args.frame:06d}.txt"), overlay)
    plots.plot_projection(
        overlay, calib.image_width, calib.image_height, os.path.join(args.output, f"projection_{args.frame:06d}.png")
    )
    print(f"points_in_image: {overlay.shape[0]}")
    return 0


COMMANDS = {
    "run": cmd_run,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "profile": cmd_profile,
    "project": cmd_project,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except SeafusionError as exc:
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``semloc localize | simulate | evaluate``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from .config import ConfigError, load_pipeline_config, load_scenario_spec, scenario_to_ini
from .core import FRAME_REFERENCE, PROFILES, ObjectMap, PipelineConfig, RigidTransform, SemlocError
from .evaluation import evaluate_run
from .formats import (
    FormatError,
    read_map,
    read_observations,
    read_trajectory,
    write_map,
    write_observations,
    write_trajectory,
)
from .pipeline import run_session
from .report import build_report, check_self_consistent, dumps, events_from_records, read_report, write_plot_series
from .simulator import ScenarioRun, generate

EXIT_OK = 0
EXIT_NOT_LOCALIZED = 3
EXIT_INPUT_ERROR = 4

MAP_FILE = "reference_map.txt"
OBSERVATIONS_FILE = "observations.txt"
ODOMETRY_FILE = "odometry.txt"
GROUND_TRUTH_FILE = "ground_truth.txt"
ALIGNMENT_FILE = "alignment.txt"
SCENARIO_FILE = "scenario.ini"

log = logging.getLogger("semloc")


@dataclass
class RunInputs:
    """Everything ``localize`` and ``evaluate`` need, however it was loaded."""

    reference_map: ObjectMap
    timestamps: list
    odometry: list[RigidTransform]
    batches: list[ObjectMap]
    ground_truth_poses: list[RigidTransform] | None
    source: dict


def save_run(run: ScenarioRun, out_dir) -> list[Path]:
    """Serialize a generated scenario into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = run.spec.names
    write_map(out / MAP_FILE, run.reference_map, names)
    write_observations(out / OBSERVATIONS_FILE, run.observation_batches, names)
    write_trajectory(out / ODOMETRY_FILE, run.timestamps, run.odometry, "odometry")
    write_trajectory(out / GROUND_TRUTH_FILE, run.timestamps, run.ground_truth_poses, FRAME_REFERENCE)
    write_trajectory(out / ALIGNMENT_FILE, run.timestamps, run.ground_truth_alignment, "alignment")
    (out / SCENARIO_FILE).write_text(scenario_to_ini(run.spec))
    return [out / f for f in (MAP_FILE, OBSERVATIONS_FILE, ODOMETRY_FILE, GROUND_TRUTH_FILE, ALIGNMENT_FILE,
                              SCENARIO_FILE)]


def load_run_dir(run_dir, map_path=None) -> RunInputs:
    d = Path(run_dir)
    ref, names = read_map(map_path or d / MAP_FILE)
    ts, odom, _ = read_trajectory(d / ODOMETRY_FILE)
    batches = read_observations(d / OBSERVATIONS_FILE, len(ts), names)
    truth = None
    if (d / GROUND_TRUTH_FILE).exists():
        gt_ts, truth, _ = read_trajectory(d / GROUND_TRUTH_FILE)
        if len(gt_ts) != len(ts):
            raise FormatError(d / GROUND_TRUTH_FILE, 0, f"{len(gt_ts)} poses but odometry has {len(ts)}")
    return RunInputs(ref, list(ts), odom, batches, truth, {"run_dir": str(d)})


def load_inputs(args) -> RunInputs:
    src = Path(args.input)
    if src.is_dir():
        return load_run_dir(src, args.map)
    if src.suffix == ".ini":
        run = generate(load_scenario_spec(src, args.seed))
        ref = run.reference_map
        if args.map:
            ref, _ = read_map(args.map)
        return RunInputs(ref, list(run.timestamps), list(run.odometry), list(run.observation_batches),
                         list(run.ground_truth_poses), {"scenario": str(src), "seed": run.spec.seed})
    if not (args.map and args.odometry):
        raise ConfigError("an observation file needs --map and --odometry")
    ref, names = read_map(args.map)
    ts, odom, _ = read_trajectory(args.odometry)
    batches = read_observations(src, len(ts), names)
    truth = None
    if args.ground_truth:
        _, truth, _ = read_trajectory(args.ground_truth)
    return RunInputs(ref, list(ts), odom, batches, truth, {"observations": str(src)})


class _Truth:
    def __init__(self, truth, odometry):
        self.ground_truth_poses = truth
        self.odometry = odometry


def _emit(report: dict, path) -> None:
    text = dumps(report)
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_localize(args) -> int:
    cfg = load_pipeline_config(args.config, args.profile, **({"workers": args.workers} if args.workers else {}))
    inputs = load_inputs(args)
    session = run_session(inputs.reference_map, cfg, inputs.timestamps, inputs.odometry, inputs.batches)
    metrics = None
    if inputs.ground_truth_poses is not None:
        metrics = evaluate_run(_Truth(inputs.ground_truth_poses, inputs.odometry), session.events,
                               session.estimates, project_2d=args.project_2d)
        if args.plot_dir and metrics.localized:
            write_plot_series(args.plot_dir, metrics, args.ablation)
    report = build_report(cfg, session.events, metrics, source=inputs.source,
                          project_2d=args.project_2d, ablation=args.ablation)
    _emit(report, args.report)
    if not session.events:
        log.warning("never localized")
        return EXIT_NOT_LOCALIZED
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = load_scenario_spec(args.spec, args.seed)
    run = generate(spec)
    for p in save_run(run, args.out_dir):
        log.info("wrote %s", p)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        old = read_report(args.report)
        events = events_from_records(old["events"])
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"{args.report}: cannot load report ({exc})") from None
    try:
        cfg = PipelineConfig(**_config_from_report(old["config"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{args.report}: bad config echo ({exc})") from None
    d = Path(args.run_dir)
    ts, odom, _ = read_trajectory(d / ODOMETRY_FILE)
    if any(e.step >= len(ts) for e in events):
        raise ConfigError("report events refer to steps beyond the run's trajectory")
    metrics = None
    if (d / GROUND_TRUTH_FILE).exists():
        _, truth, _ = read_trajectory(d / GROUND_TRUTH_FILE)
        metrics = evaluate_run(_Truth(truth, odom), events, project_2d=args.project_2d)
        if args.plot_dir and metrics.localized:
            write_plot_series(args.plot_dir, metrics, args.ablation)
    else:
        log.warning("no ground truth in %s; reporting event counts only", d)
    report = build_report(cfg, events, metrics, source={"run_dir": str(d), "report": str(args.report)},
                          project_2d=args.project_2d, ablation=args.ablation)
    if not check_self_consistent(report):
        raise SemlocError("regenerated report is not self-consistent")
    _emit(report, args.out)
    return EXIT_OK if events else EXIT_NOT_LOCALIZED


def _config_from_report(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if v == "inf":
            v = float("inf")
        elif isinstance(v, list):
            v = tuple(v)
        out[k] = v
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semloc", description="Object-map global localization and relocalization.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def output_flags(sp):
        sp.add_argument("--2d", dest="project_2d", action="store_true", help="errors in the xy plane, yaw only")
        sp.add_argument("--ablation", action="store_true", help="also report the first-transform-only replay")
        sp.add_argument("--plot-dir", help="write tab-separated plot series here")

    loc = sub.add_parser("localize", help="run the pipeline on a run directory, scenario file or observation file")
    loc.add_argument("input", help="run directory, scenario .ini, or observation file")
    loc.add_argument("--map", help="reference map file (overrides the run directory's)")
    loc.add_argument("--odometry", help="odometry trajectory file (with an observation file)")
    loc.add_argument("--ground-truth", help="ground truth trajectory file (with an observation file)")
    loc.add_argument("--config", help="INI file with a [pipeline] section")
    loc.add_argument("--profile", choices=sorted(PROFILES))
    loc.add_argument("--seed", type=int, help="override the scenario seed")
    loc.add_argument("--workers", type=int, help="threads for per-submap registration")
    loc.add_argument("--report", help="report path (default: stdout)")
    output_flags(loc)
    loc.set_defaults(func=cmd_localize)

    sim = sub.add_parser("simulate", help="generate a scenario and write its files")
    sim.add_argument("spec", help="INI file with a [scenario] section")
    sim.add_argument("out_dir")
    sim.add_argument("--seed", type=int, help="override the scenario seed")
    sim.set_defaults(func=cmd_simulate)

    ev = sub.add_parser("evaluate", help="re-evaluate a report against a run directory")
    ev.add_argument("run_dir")
    ev.add_argument("report")
    ev.add_argument("--out", help="output report path (default: stdout)")
    output_flags(ev)
    ev.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SemlocError as exc:
        print(f"semloc: error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())

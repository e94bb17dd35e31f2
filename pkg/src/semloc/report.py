"""RunReport: JSON record of a localization run, plus tabular plot series.

The summary block is a pure function of the per-event records
(:func:`summarize`), so a report can always be checked against itself.
"""

from __future__ import annotations

import json
import math
import statistics
from pathlib import Path

import numpy as np

from .core import PipelineConfig, RigidTransform
from .evaluation import RunMetrics
from .localizer import LocalizationEvent

REPORT_KIND = "semloc-report"
REPORT_VERSION = 1


def _clean(v):
    """JSON-safe copy: infinities become the strings "inf"/"-inf"."""
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, np.integer):
        return int(v)
    return v


def transform_record(t: RigidTransform) -> dict:
    return {"rotation": t.rotation.tolist(), "translation": t.translation.tolist()}


def transform_from_record(rec: dict) -> RigidTransform:
    return RigidTransform(np.array(rec["rotation"], dtype=float), np.array(rec["translation"], dtype=float))


def event_records(events, metrics: RunMetrics | None = None) -> list[dict]:
    errors = {}
    if metrics is not None and metrics.localized:
        errors = {i: e for i, e in enumerate(metrics.event_errors)}
    out = []
    for i, e in enumerate(events):
        rec = {
            "step": e.step,
            "timestamp": e.timestamp,
            "mode": e.mode,
            "inlier_count": e.inlier_count,
            "rmse": e.rmse,
            "submap_id": e.submap_id,
            "distance_traveled": e.distance_traveled,
            "map_size": e.map_size,
            "transform": transform_record(e.transform),
            "position_error": None,
            "orientation_error": None,
            "true_distance": None,
        }
        if i in errors:
            rec["position_error"] = errors[i].position_error
            rec["orientation_error"] = errors[i].orientation_error
            rec["true_distance"] = errors[i].distance
        out.append(rec)
    return out


def events_from_records(records) -> list[LocalizationEvent]:
    return [
        LocalizationEvent(
            timestamp=float(r["timestamp"]),
            transform=transform_from_record(r["transform"]),
            inlier_count=int(r["inlier_count"]),
            rmse=float(r["rmse"]),
            mode=r["mode"],
            submap_id=int(r["submap_id"]),
            step=int(r["step"]),
            distance_traveled=float(r["distance_traveled"]),
            map_size=int(r["map_size"]),
        )
        for r in records
    ]


def _stats(values) -> dict:
    if not values:
        return {"mean": None, "median": None, "max": None}
    return {"mean": statistics.fmean(values), "median": statistics.median(values), "max": max(values)}


def summarize(event_recs: list[dict]) -> dict:
    """Summary statistics derived only from the per-event records.

    Distance to localize is the first event's true distance when ground
    truth was available, its odometry distance otherwise.
    """
    pos = [r["position_error"] for r in event_recs if r["position_error"] is not None]
    ori = [r["orientation_error"] for r in event_recs if r["orientation_error"] is not None]
    first = event_recs[0] if event_recs else None
    distance_to_localize = None
    if first is not None:
        distance_to_localize = first["true_distance"]
        if distance_to_localize is None:
            distance_to_localize = first["distance_traveled"]
    return {
        "localized": first is not None,
        "event_count": len(event_recs),
        "global_events": sum(r["mode"] == "global" for r in event_recs),
        "guided_events": sum(r["mode"] == "guided" for r in event_recs),
        "position_error": _stats(pos),
        "orientation_error": _stats(ori),
        "distance_to_localize": distance_to_localize,
        "objects_to_localize": first["map_size"] if first is not None else None,
    }


def build_report(cfg: PipelineConfig, events, metrics: RunMetrics | None = None, *,
                 source: dict | None = None, project_2d: bool = False, ablation: bool = False) -> dict:
    """Assemble the report dictionary. ``metrics`` is None when there is no
    ground truth; the report then carries events and counts only."""
    recs = event_records(events, metrics)
    report = {
        "kind": REPORT_KIND,
        "version": REPORT_VERSION,
        "config": cfg.as_dict(),
        "source": source or {},
        "ground_truth": metrics is not None,
        "project_2d": project_2d,
        "events": recs,
        "summary": summarize(recs),
    }
    if metrics is not None:
        traj = {
            "mean_post_localization_error": metrics.mean_post_localization_error,
            "final_error": metrics.error_series[-1][2] if metrics.error_series else None,
        }
        if ablation:
            traj["mean_global_only_error"] = metrics.mean_global_only_error
            traj["final_global_only_error"] = metrics.global_only_series[-1][2] if metrics.global_only_series else None
        report["trajectory"] = traj
    return _clean(report)


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(path, report: dict) -> None:
    Path(path).write_text(dumps(report))


def read_report(path) -> dict:
    with open(path) as fh:
        report = json.load(fh)
    if report.get("kind") != REPORT_KIND:
        raise ValueError(f"{path}: not a {REPORT_KIND} file")
    return report


def check_self_consistent(report: dict) -> bool:
    """True iff the stored summary equals the one recomputed from the events."""
    return _clean(summarize(report["events"])) == report["summary"]


def write_plot_series(out_dir, metrics: RunMetrics, ablation: bool = False) -> list[Path]:
    """Tab-separated series: error vs distance (one column per variant) and
    per-event errors."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / "error_vs_distance.tsv"
    header = ["step", "distance", "error"] + (["error_global_only"] if ablation else [])
    lines = ["\t".join(header)]
    replay = {k: e for k, _, e in metrics.global_only_series}
    for k, d, e in metrics.error_series:
        row = [str(k), repr(d), repr(e)] + ([repr(replay[k])] if ablation else [])
        lines.append("\t".join(row))
    path.write_text("\n".join(lines) + "\n")
    written.append(path)
    path = out / "event_errors.tsv"
    lines = ["step\tmode\tposition_error\torientation_error"]
    lines += [f"{e.step}\t{e.mode}\t{e.position_error!r}\t{e.orientation_error!r}" for e in metrics.event_errors]
    path.write_text("\n".join(lines) + "\n")
    written.append(path)
    return written

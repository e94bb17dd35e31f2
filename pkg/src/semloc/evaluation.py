"""Error metrics of a localization run against ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import RigidTransform, compose, rotation_angle_deg, yaw_of
from .pipeline import global_only_estimates


@dataclass(frozen=True)
class EventError:
    step: int
    timestamp: float
    mode: str
    position_error: float
    orientation_error: float  # degrees
    distance: float  # true distance traveled at the event


@dataclass(frozen=True)
class RunMetrics:
    """``error_series`` / ``global_only_series`` hold ``(step, true distance,
    position error)`` rows for every step with an estimate."""

    localized: bool
    event_errors: tuple[EventError, ...]
    mean_post_localization_error: float | None
    distance_to_localize: float | None
    objects_to_localize: int | None
    error_series: tuple[tuple[int, float, float], ...]
    global_only_series: tuple[tuple[int, float, float], ...]

    @property
    def final_errors(self) -> tuple[float, float] | None:
        """(with relocalization, global-only) position error at the last step."""
        if not self.error_series:
            return None
        return self.error_series[-1][2], self.global_only_series[-1][2]

    @property
    def mean_global_only_error(self) -> float | None:
        if not self.global_only_series:
            return None
        return float(np.mean([e for _, _, e in self.global_only_series]))


def pose_error(est: RigidTransform, truth: RigidTransform, project_2d: bool = False) -> tuple[float, float]:
    """(position error in meters, orientation error in degrees). In 2D mode z
    is dropped and orientation is the wrapped yaw difference."""
    if project_2d:
        dp = float(np.linalg.norm(est.translation[:2] - truth.translation[:2]))
        dyaw = (yaw_of(est.rotation) - yaw_of(truth.rotation) + math.pi) % (2 * math.pi) - math.pi
        return dp, abs(math.degrees(dyaw))
    dp = float(np.linalg.norm(est.translation - truth.translation))
    return dp, rotation_angle_deg(est.rotation.T @ truth.rotation)


def cumulative_distance(poses) -> np.ndarray:
    pos = np.array([p.translation for p in poses]).reshape(-1, 3)
    if len(pos) < 2:
        return np.zeros(len(pos))
    return np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pos, axis=0), axis=1))])


def _series(estimates, truth, dist, project_2d):
    return tuple(
        (k, float(dist[k]), pose_error(est, truth[k], project_2d)[0])
        for k, est in enumerate(estimates)
        if est is not None
    )


def estimates_from_events(event_log, odometry) -> list[RigidTransform | None]:
    """Per-step pose estimates implied by an event log: the latest transform
    accepted at or before each step, applied to that step's odometry pose."""
    out: list[RigidTransform | None] = []
    events = sorted(event_log, key=lambda e: e.step)
    j = -1
    for k, pose in enumerate(odometry):
        while j + 1 < len(events) and events[j + 1].step <= k:
            j += 1
        out.append(None if j < 0 else compose(events[j].transform, pose))
    return out


def evaluate_run(run, event_log, estimated_poses=None, project_2d: bool = False) -> RunMetrics:
    """Compare a session's output to the ground truth of ``run``.

    ``run`` needs ``ground_truth_poses`` and ``odometry`` aligned with the
    session's steps; ``estimated_poses[k]`` is the reference-frame pose
    estimate at step ``k`` (None before localization), rebuilt from the
    events when omitted. Event errors are the pose errors at the step each
    event was accepted. The global-only series replays the odometry with the
    first accepted transform only.
    """
    truth = list(run.ground_truth_poses)
    odometry = list(run.odometry)
    if estimated_poses is None:
        estimated_poses = estimates_from_events(event_log, odometry)
    if not (len(truth) == len(odometry) == len(estimated_poses)):
        raise ValueError("ground truth, odometry and estimates must have one entry per step")
    if not event_log:
        return RunMetrics(False, (), None, None, None, (), ())

    dist = cumulative_distance(truth)
    events = []
    for e in event_log:
        est = compose(e.transform, odometry[e.step])
        dp, dr = pose_error(est, truth[e.step], project_2d)
        events.append(EventError(e.step, e.timestamp, e.mode, dp, dr, float(dist[e.step])))
    series = _series(estimated_poses, truth, dist, project_2d)
    replay = _series(global_only_estimates(event_log, odometry), truth, dist, project_2d)
    first = event_log[0]
    return RunMetrics(
        localized=True,
        event_errors=tuple(events),
        mean_post_localization_error=float(np.mean([e for _, _, e in series])) if series else None,
        distance_to_localize=float(dist[first.step]),
        objects_to_localize=int(first.map_size),
        error_series=series,
        global_only_series=replay,
    )

"""Acceptance logic for global localization and guided relocalization.

The state is an immutable value: every decision returns a new
:class:`LocalizerState`, and a rejection returns the input state object
untouched.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import NotLocalizedError, PipelineConfig, RigidTransform, compose, transform_distance
from .registration import CandidateRegistration


class Mode(str, enum.Enum):
    GLOBAL_SEARCH = "global_search"
    GUIDED = "guided"


@dataclass(frozen=True)
class LocalizationEvent:
    """One accepted registration."""

    timestamp: float
    transform: RigidTransform
    inlier_count: int
    rmse: float
    mode: str  # "global" or "guided": the branch that accepted it
    submap_id: int = 0
    step: int = -1
    distance_traveled: float = 0.0
    map_size: int = 0


@dataclass(frozen=True)
class LocalizerState:
    """``last_inliers`` holds the accepted clique as (reference id, vehicle id)
    pairs, so it can be re-indexed against later windows."""

    mode: Mode = Mode.GLOBAL_SEARCH
    t_cur: RigidTransform | None = None
    last_inliers: tuple[tuple[int, int], ...] = ()
    distance_at_last_accept: float = 0.0
    event_log: tuple[LocalizationEvent, ...] = ()

    def __post_init__(self):
        if self.mode is Mode.GUIDED and self.t_cur is None:
            raise ValueError("guided mode requires a current transform")

    @property
    def localized(self) -> bool:
        return self.mode is Mode.GUIDED


def tau_rmse_at(cfg: PipelineConfig, distance_traveled: float) -> float:
    if distance_traveled < 0:
        raise ValueError("distance traveled must be >= 0")
    return cfg.tau_rmse_base + cfg.tau_rmse_growth * distance_traveled


def global_localize(candidates, cfg: PipelineConfig, distance_traveled: float) -> CandidateRegistration | None:
    """Pick the accepted candidate among one-per-submap registrations, or None.

    Valid candidates have at least ``tau_in`` inliers and a transform. If the
    best valid RMSE exceeds the distance-dependent threshold nothing is
    accepted; otherwise the winner is the candidate with the most inliers
    among those within ``(1 + alpha)`` of the best RMSE. Ties: lower RMSE,
    then lower submap id.
    """
    valid = [c for c in candidates if c.usable and c.inlier_count >= cfg.tau_in]
    if not valid:
        return None
    e_min = min(c.rmse for c in valid)
    if e_min > tau_rmse_at(cfg, distance_traveled):
        return None
    band = [c for c in valid if c.rmse <= (1.0 + cfg.alpha) * e_min]
    return min(band, key=lambda c: (-c.inlier_count, c.rmse, c.submap_id))


def accept(state: LocalizerState, candidate: CandidateRegistration, *, mode: str, timestamp: float,
           distance_traveled: float, step: int = -1, map_size: int = 0) -> LocalizerState:
    event = LocalizationEvent(
        timestamp=float(timestamp),
        transform=candidate.transform,
        inlier_count=candidate.inlier_count,
        rmse=float(candidate.rmse),
        mode=mode,
        submap_id=candidate.submap_id,
        step=step,
        distance_traveled=float(distance_traveled),
        map_size=map_size,
    )
    if state.event_log and event.timestamp < state.event_log[-1].timestamp:
        raise ValueError("events must be accepted in chronological order")
    return LocalizerState(
        mode=Mode.GUIDED,
        t_cur=candidate.transform,
        last_inliers=candidate.inlier_ids,
        distance_at_last_accept=float(distance_traveled),
        event_log=state.event_log + (event,),
    )


def similarity_bounds(cfg: PipelineConfig, distance_since_accept: float) -> tuple[float, float]:
    """(translation bound in meters, rotation bound in degrees), loosened
    linearly with the distance driven since the last accepted registration."""
    d = max(0.0, distance_since_accept)
    return (
        cfg.translation_similarity_base + cfg.translation_similarity_growth * d,
        cfg.rotation_similarity_base + cfg.rotation_similarity_growth * d,
    )


@dataclass(frozen=True)
class GuidedDecision:
    accepted: bool
    state: LocalizerState
    reason: str


def transform_gap(t_cand: RigidTransform, t_cur: RigidTransform, anchor=None) -> tuple[float, float]:
    """(meters, degrees) between two alignments. With an ``anchor`` point (in
    the vehicle frame) the translational part is the distance between where
    the two transforms put that point, which does not depend on where the
    odometry origin happens to be."""
    if anchor is None:
        return transform_distance(t_cand, t_cur)
    a = np.asarray(anchor, dtype=float).reshape(1, 3)
    dt = float(np.linalg.norm(t_cand.apply_points(a) - t_cur.apply_points(a)))
    return dt, transform_distance(t_cand, t_cur)[1]


def guided_relocalize(candidate: CandidateRegistration, state: LocalizerState, cfg: PipelineConfig,
                      e_cur: float, distance_traveled: float, *, timestamp: float = 0.0,
                      step: int = -1, map_size: int = 0, anchor=None) -> GuidedDecision:
    """Accept ``candidate`` iff its RMSE differs from ``e_cur`` by more than
    ``delta``, is no worse than ``(1 + alpha) * e_cur``, and its transform is
    within the drift-loosened similarity bounds of the current one.

    Both RMSE values must come from the same evaluation window. ``anchor``
    is forwarded to :func:`transform_gap`; the session passes the current
    odometry position.
    """
    if state.mode is not Mode.GUIDED:
        raise NotLocalizedError("guided relocalization requires a prior global localization")
    if not candidate.usable:
        return GuidedDecision(False, state, "unusable")
    e_cand = candidate.rmse
    if not abs(e_cand - e_cur) > cfg.delta:
        return GuidedDecision(False, state, "rmse_difference")
    if not e_cand <= (1.0 + cfg.alpha) * e_cur:
        return GuidedDecision(False, state, "rmse_band")
    dt, dr = transform_gap(candidate.transform, state.t_cur, anchor)
    bound_t, bound_r = similarity_bounds(cfg, distance_traveled - state.distance_at_last_accept)
    if not (dt <= bound_t and dr <= bound_r):
        return GuidedDecision(False, state, "similarity")
    new = accept(state, candidate, mode="guided", timestamp=timestamp,
                 distance_traveled=distance_traveled, step=step, map_size=map_size)
    return GuidedDecision(True, new, "accepted")


def current_global_pose(state: LocalizerState, local_pose: RigidTransform) -> RigidTransform:
    """Vehicle pose in the reference frame: ``t_cur`` composed with the
    odometry-frame pose."""
    if state.mode is not Mode.GUIDED:
        raise NotLocalizedError("vehicle has not been globally localized yet")
    return compose(state.t_cur, local_pose)


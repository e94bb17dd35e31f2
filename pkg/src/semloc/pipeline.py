"""Online driver: ingest observations step by step, register periodically,
and run the localizer state machine."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .core import FRAME_REFERENCE, NoScoreableObjectsError, ObjectMap, PipelineConfig, RigidTransform, compose
from .localizer import LocalizerState, Mode, accept, global_localize, guided_relocalize
from .map_manager import VehicleMapState, fuse_observations, recent_window, restrict_reference, split_submaps
from .registration import CandidateRegistration, compute_rmse, register_submap

log = logging.getLogger(__name__)


@dataclass
class RegistrationAttempt:
    step: int
    mode: str
    accepted: bool
    reason: str
    candidates: list[CandidateRegistration] = field(default_factory=list)


def _ids_to_indices(id_pairs, ref_map: ObjectMap, veh_map: ObjectMap) -> list[tuple[int, int]]:
    ri, vi = ref_map.index_of_id, veh_map.index_of_id
    return [(ri[a], vi[b]) for a, b in id_pairs if a in ri and b in vi]


class LocalizationSession:
    """Feeds timestep batches through fusion, registration and acceptance.

    Observations are given in the vehicle body frame together with the
    odometry pose of that timestep; they are moved into the odometry frame
    before fusion. ``estimates[t]`` is the reference-frame pose at step ``t``
    (None before global localization).
    """

    def __init__(self, ref_map: ObjectMap, cfg: PipelineConfig):
        if ref_map.frame != FRAME_REFERENCE:
            ref_map = ref_map.with_centroids(ref_map.centroids, frame=FRAME_REFERENCE)
        self.ref_map = ref_map
        self.cfg = cfg
        self.submaps = split_submaps(ref_map, cfg.k, cfg.submap_overlap_fraction)
        self.vehicle = VehicleMapState()
        self.state = LocalizerState()
        self.step = 0
        self.estimates: list[RigidTransform | None] = []
        self.attempts: list[RegistrationAttempt] = []
        self._pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @property
    def events(self):
        return self.state.event_log

    def process(self, timestamp: float, odom_pose: RigidTransform, observations: ObjectMap) -> None:
        self.vehicle.record_pose(timestamp, odom_pose)
        if len(observations):
            local = odom_pose.apply_points(observations.centroids)
            batch = [(tuple(u), int(c), int(i)) for u, c, i in zip(local, observations.class_ids, observations.ids)]
            fuse_observations(self.vehicle, batch, self.cfg.fusion_radius)
        if (self.step + 1) % self.cfg.registration_interval == 0:
            self._register(timestamp)
        est = compose(self.state.t_cur, odom_pose) if self.state.localized else None
        self.estimates.append(est)
        self.step += 1

    def _map(self, fn, items):
        if self._pool is None:
            return [fn(x) for x in items]
        return list(self._pool.map(fn, items))

    def _register(self, timestamp: float) -> None:
        if self.state.mode is Mode.GLOBAL_SEARCH:
            self._register_global(timestamp)
        else:
            self._register_guided(timestamp)

    def _register_global(self, timestamp: float) -> None:
        cfg = self.cfg
        window = recent_window(self.vehicle, cfg.r)
        if len(window) < cfg.tau_in:
            return
        full = self.vehicle.snapshot()
        jobs = [(i, s) for i, s in enumerate(self.submaps) if len(s)]

        def run(job):
            i, sub = job
            return register_submap(sub, window, cfg, eval_window=full, score_map=self.ref_map, submap_id=i)

        candidates = self._map(run, jobs)
        dist = self.vehicle.distance_traveled
        winner = global_localize(candidates, cfg, dist)
        if winner is None:
            self.attempts.append(RegistrationAttempt(self.step, "global", False, "no_candidate", candidates))
            return
        self.state = accept(self.state, winner, mode="global", timestamp=timestamp, distance_traveled=dist,
                            step=self.step, map_size=len(full))
        self.attempts.append(RegistrationAttempt(self.step, "global", True, "accepted", candidates))
        log.info("global localization at step %d: %d inliers, rmse %.3f", self.step,
                 winner.inlier_count, winner.rmse)

    def _register_guided(self, timestamp: float) -> None:
        cfg = self.cfg
        window = recent_window(self.vehicle, cfg.r)
        if len(window) < 3:
            return
        eval_window = recent_window(self.vehicle, cfg.r_prime)
        restricted = restrict_reference(self.ref_map, self.state.t_cur, window, cfg.restrict_margin)
        if len(restricted) == 0:
            self.attempts.append(RegistrationAttempt(self.step, "guided", False, "empty_reference"))
            return
        prior = _ids_to_indices(self.state.last_inliers, restricted, window)
        cand = register_submap(restricted, window, cfg, prior, eval_window=eval_window,
                               score_map=self.ref_map, submap_id=-1)
        try:
            e_cur = compute_rmse(self.state.t_cur, eval_window, self.ref_map, cfg.class_filter)
        except NoScoreableObjectsError:
            return
        decision = guided_relocalize(cand, self.state, cfg, e_cur, self.vehicle.distance_traveled,
                                     timestamp=timestamp, step=self.step, map_size=len(self.vehicle),
                                     anchor=self.vehicle.odometry_trail[-1][1].translation)
        self.state = decision.state
        self.attempts.append(RegistrationAttempt(self.step, "guided", decision.accepted, decision.reason, [cand]))


def run_session(ref_map: ObjectMap, cfg: PipelineConfig, timestamps, odometry, batches) -> LocalizationSession:
    """Run a whole observation stream through a fresh session."""
    with LocalizationSession(ref_map, cfg) as session:
        for ts, pose, batch in zip(timestamps, odometry, batches):
            session.process(float(ts), pose, batch)
    return session


def global_only_estimates(events, odometry) -> list[RigidTransform | None]:
    """Replay keeping only the first accepted transform (no relocalization)."""
    if not events:
        return [None] * len(odometry)
    first = events[0]
    return [None if k < first.step else compose(first.transform, pose) for k, pose in enumerate(odometry)]


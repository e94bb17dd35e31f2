"""Global localization of a vehicle in a semantic object map by maximum-clique
data association, with guided relocalization to absorb odometry drift."""

from .clique_solver import BitGraph, CliqueResult, max_clique
from .consistency_graph import ConsistencyGraph, build_candidate_associations, build_graph
from .core import (
    PROFILES,
    Association,
    ObjectMap,
    PipelineConfig,
    RigidTransform,
    SemanticObject,
    SemlocError,
    profile_config,
    transform_distance,
)
from .localizer import LocalizerState, global_localize, guided_relocalize
from .pipeline import LocalizationSession, run_session
from .registration import CandidateRegistration, compute_rmse, fit_rigid, register_submap
from .simulator import ScenarioSpec, generate

__all__ = [
    "PROFILES",
    "Association",
    "BitGraph",
    "CandidateRegistration",
    "CliqueResult",
    "ConsistencyGraph",
    "LocalizationSession",
    "LocalizerState",
    "ObjectMap",
    "PipelineConfig",
    "RigidTransform",
    "ScenarioSpec",
    "SemanticObject",
    "SemlocError",
    "build_candidate_associations",
    "build_graph",
    "compute_rmse",
    "fit_rigid",
    "generate",
    "global_localize",
    "guided_relocalize",
    "max_clique",
    "profile_config",
    "register_submap",
    "run_session",
    "transform_distance",
]

__version__ = "0.1.0"

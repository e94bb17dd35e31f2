"""INI configuration files for the pipeline and for simulated scenarios.

Pipeline file::

    [pipeline]
    profile = kitti        # optional, preloads a named profile
    epsilon = 2.0          # any PipelineConfig field overrides it
    r = inf
    class_filter = 0, 2

Scenario file::

    [scenario]
    seed = 7
    area = 300, 200
    class_distribution = 0.5, 0.5
    class_names = car, sign
    trajectory = loop      # or waypoints "0,0; 100,0; 100,50"
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math

from .core import PROFILES, PipelineConfig, SemlocError, profile_config
from .simulator import ScenarioSpec

PIPELINE_SECTION = "pipeline"
SCENARIO_SECTION = "scenario"
_NONE = ("none", "null", "")


class ConfigError(SemlocError):
    pass


def _read(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parser


def _number(text: str, key: str, integral: bool = False):
    t = text.strip().lower()
    try:
        v = float(t)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, found {text!r}") from None
    if integral and not math.isinf(v):
        if v != int(v):
            raise ConfigError(f"{key}: expected an integer, found {text!r}")
        return int(v)
    return v


def _list(text: str, key: str, conv=float) -> tuple:
    items = [s.strip() for s in text.split(",") if s.strip()]
    try:
        return tuple(conv(s) for s in items)
    except ValueError:
        raise ConfigError(f"{key}: could not parse list {text!r}") from None


_BOOL = {"true": True, "yes": True, "1": True, "on": True, "false": False, "no": False, "0": False, "off": False}


def _bool(text: str, key: str) -> bool:
    try:
        return _BOOL[text.strip().lower()]
    except KeyError:
        raise ConfigError(f"{key}: expected a boolean, found {text!r}") from None


# field name -> parser for the values that are not plain floats
_PIPELINE_INT = {"tau_in", "k", "registration_interval", "workers", "clique_node_budget"}
_PIPELINE_OPTIONAL = {"class_filter", "clique_node_budget", "clique_time_budget"}


def pipeline_from_mapping(values: dict, profile: str | None = None) -> PipelineConfig:
    """Build a :class:`PipelineConfig` from string values (profile first,
    then field overrides)."""
    names = {f.name for f in dataclasses.fields(PipelineConfig)}
    values = dict(values)
    prof = values.pop("profile", None)
    if profile is not None:
        prof = profile
    kwargs = {}
    for key, text in values.items():
        if key not in names:
            raise ConfigError(f"unknown pipeline setting {key!r}")
        if key in _PIPELINE_OPTIONAL and text.strip().lower() in _NONE:
            kwargs[key] = None
        elif key == "class_filter":
            kwargs[key] = _list(text, key, int)
        else:
            kwargs[key] = _number(text, key, integral=key in _PIPELINE_INT)
    try:
        if prof:
            if prof not in PROFILES:
                raise ConfigError(f"unknown profile {prof!r}; choose from {sorted(PROFILES)}")
            return profile_config(prof, **kwargs)
        return PipelineConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_pipeline_config(path=None, profile: str | None = None, **overrides) -> PipelineConfig:
    """Config from an INI file's ``[pipeline]`` section (or defaults), with
    an optional profile override and keyword overrides applied last."""
    values: dict = {}
    if path is not None:
        parser = _read(path)
        if parser.has_section(PIPELINE_SECTION):
            values = dict(parser[PIPELINE_SECTION])
    cfg = pipeline_from_mapping(values, profile)
    if overrides:
        try:
            cfg = cfg.replace(**overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return cfg


def pipeline_to_ini(cfg: PipelineConfig) -> str:
    parser = configparser.ConfigParser()
    section = {}
    for key, v in cfg.as_dict().items():
        if v is None:
            section[key] = "none"
        elif isinstance(v, list):
            section[key] = ", ".join(str(x) for x in v)
        else:
            section[key] = repr(v) if isinstance(v, float) else str(v)
    parser[PIPELINE_SECTION] = section
    return _dump(parser)


# --------------------------------------------------------------------------
# scenarios
# --------------------------------------------------------------------------

_SCENARIO_INT = {"seed", "ref_object_count", "max_steps"}
_SCENARIO_OPTIONAL = {"corridor_width", "max_steps", "class_names"}


def _trajectory(text: str):
    t = text.strip()
    if ";" not in t:
        return t
    pts = []
    for chunk in t.split(";"):
        if chunk.strip():
            pts.append(_list(chunk, "trajectory"))
    return tuple(pts)


def scenario_from_mapping(values: dict) -> ScenarioSpec:
    names = {f.name for f in dataclasses.fields(ScenarioSpec)}
    kwargs = {}
    for key, text in values.items():
        if key not in names:
            raise ConfigError(f"unknown scenario setting {key!r}")
        if key in _SCENARIO_OPTIONAL and text.strip().lower() in _NONE:
            kwargs[key] = None
        elif key in ("area", "class_distribution"):
            kwargs[key] = _list(text, key)
        elif key == "class_names":
            kwargs[key] = _list(text, key, str)
        elif key == "trajectory":
            kwargs[key] = _trajectory(text)
        elif key == "viewpoint_mode":
            kwargs[key] = text.strip()
        elif key == "random_frame":
            kwargs[key] = _bool(text, key)
        else:
            kwargs[key] = _number(text, key, integral=key in _SCENARIO_INT)
    try:
        return ScenarioSpec(**kwargs)
    except SemlocError as exc:
        raise ConfigError(str(exc)) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from None


def load_scenario_spec(path, seed: int | None = None) -> ScenarioSpec:
    parser = _read(path)
    if not parser.has_section(SCENARIO_SECTION):
        raise ConfigError(f"{path}: missing [{SCENARIO_SECTION}] section")
    values = dict(parser[SCENARIO_SECTION])
    if seed is not None:
        values["seed"] = str(seed)
    return scenario_from_mapping(values)


def scenario_to_ini(spec: ScenarioSpec) -> str:
    section = {}
    for f in dataclasses.fields(ScenarioSpec):
        v = getattr(spec, f.name)
        if v is None:
            section[f.name] = "none"
        elif f.name == "trajectory" and not isinstance(v, str):
            section[f.name] = "; ".join(", ".join(repr(c) for c in p) for p in v)
        elif isinstance(v, tuple):
            section[f.name] = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, float):
            section[f.name] = repr(v)
        else:
            section[f.name] = str(v)
    parser = configparser.ConfigParser()
    parser[SCENARIO_SECTION] = section
    return _dump(parser)


def _dump(parser: configparser.ConfigParser) -> str:
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()

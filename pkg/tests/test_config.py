import math

import pytest

from semloc.config import (
    ConfigError,
    load_pipeline_config,
    load_scenario_spec,
    pipeline_from_mapping,
    pipeline_to_ini,
    scenario_to_ini,
)
from semloc.core import PipelineConfig, profile_config
from semloc.simulator import ScenarioSpec


def test_profile_and_overrides(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[pipeline]\nprofile = kitti  # preload\nepsilon = 1.0\nr = 150\nr_prime = 300\n"
                 "class_filter = 0, 2\n")
    cfg = load_pipeline_config(p)
    assert cfg == profile_config("kitti", epsilon=1.0, r=150, r_prime=300, class_filter=(0, 2))
    assert load_pipeline_config(p, profile="katwijk").tau_in == 8
    assert load_pipeline_config(p, workers=3).workers == 3
    assert load_pipeline_config() == PipelineConfig()


def test_inf_and_none_values():
    cfg = pipeline_from_mapping({"r": "inf", "r_prime": "inf", "clique_node_budget": "none"})
    assert math.isinf(cfg.r) and cfg.clique_node_budget is None


@pytest.mark.parametrize("values, fragment", [
    ({"epsilon": "wide"}, "expected a number"),
    ({"tau_in": "12.5"}, "expected an integer"),
    ({"colour": "red"}, "unknown pipeline setting"),
    ({"profile": "mars"}, "unknown profile"),
    ({"epsilon": "-1"}, "epsilon"),
])
def test_pipeline_errors(values, fragment):
    with pytest.raises(ConfigError, match=fragment):
        pipeline_from_mapping(values)


def test_pipeline_ini_round_trip(tmp_path):
    for cfg in (PipelineConfig(), profile_config("katwijk"), profile_config("kitti", class_filter=(1,))):
        p = tmp_path / "c.ini"
        p.write_text(pipeline_to_ini(cfg))
        assert load_pipeline_config(p) == cfg


def test_scenario_ini_round_trip(tmp_path):
    specs = [
        ScenarioSpec(),
        ScenarioSpec(seed=4, trajectory=((0, 0), (50.5, 0), (50.5, 20)), class_names=("car", "sign", "pole"),
                     corridor_width=20.0, random_frame=True, max_steps=9),
        ScenarioSpec(trajectory="out_and_back", viewpoint_mode="reversed", class_distribution=(1.0,)),
    ]
    for spec in specs:
        p = tmp_path / "s.ini"
        p.write_text(scenario_to_ini(spec))
        assert load_scenario_spec(p) == spec
    assert load_scenario_spec(p, seed=11).seed == 11


def test_scenario_errors(tmp_path):
    p = tmp_path / "s.ini"
    p.write_text("[scenario]\noutlier_fraction = 2\n")
    with pytest.raises(ConfigError, match="outlier_fraction"):
        load_scenario_spec(p)
    p.write_text("[other]\nseed = 1\n")
    with pytest.raises(ConfigError, match="missing"):
        load_scenario_spec(p)
    p.write_text("[scenario]\nrandom_frame = maybe\n")
    with pytest.raises(ConfigError, match="boolean"):
        load_scenario_spec(p)
    p.write_text("not an ini")
    with pytest.raises(ConfigError):
        load_scenario_spec(p)
    with pytest.raises(ConfigError, match="cannot read"):
        load_scenario_spec(tmp_path / "nope.ini")

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from krigeclass.config import ConfigError, RunConfig, config_from_dict, load_config, validate
from krigeclass.pipeline import window_sample_counts


def test_defaults_are_valid():
    cfg = config_from_dict({})
    assert cfg.combine == "product" and cfg.alpha == 0.05
    assert cfg.scene.coarse_pixel_size == 188.0


def test_relative_paths_resolve_against_config_dir(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "cfg.json").write_text(json.dumps({"out_dir": "results", "image": "/abs/img.raw"}))
    cfg = load_config(tmp_path / "sub" / "cfg.json")
    assert cfg.out_dir == tmp_path / "sub" / "results"
    assert str(cfg.image) == "/abs/img.raw"


@pytest.mark.parametrize(
    "raw,field",
    [
        ({"alpha": 1.5}, "alpha"),
        ({"df_mode": "pixels"}, "df_mode"),
        ({"combine": "sum"}, "combine"),
        ({"variogram": {"family": "cubic"}}, "variogram.family"),
        ({"variogram": {"n_bins": 1}}, "variogram.n_bins"),
        ({"kriging": {"out_pixel_size": -1}}, "kriging.out_pixel_size"),
        ({"kriging": {"max_neighbors": 0}}, "kriging.max_neighbors"),
        ({"harden_threshold": 2}, "harden_threshold"),
        ({"assess": {"eps": 0}}, "assess.eps"),
        ({"benchmark": {"methods": ["kbsc", "svm"]}}, "benchmark.methods"),
        ({"benchmark": {"seeds": []}}, "benchmark.seeds"),
        ({"kriging": {"radius": 3}}, "kriging"),
        ({"colour": "red"}, "unknown config keys"),
    ],
)
def test_invalid_fields_are_named(raw, field):
    with pytest.raises(ConfigError, match=field):
        config_from_dict(raw)


def test_invalid_scene_fraction_names_field():
    scene = RunConfig().scene.to_dict()
    scene["classes"][0]["target_fraction"] = 0.9
    with pytest.raises(ConfigError, match="target_fraction"):
        config_from_dict({"scene": scene})


def test_missing_inputs_fail_validation(tmp_path):
    cfg = config_from_dict({"image": "nope.raw"}, tmp_path)
    with pytest.raises(ConfigError, match="image"):
        validate(cfg, require_inputs=True)


def test_manifest_needs_calibration(tmp_path):
    (tmp_path / "m.csv").write_text("file,class\n")
    cfg = config_from_dict({"spectra_manifest": "m.csv"}, tmp_path)
    with pytest.raises(ConfigError, match="calibration"):
        validate(cfg, require_inputs=True)


def test_bad_json(tmp_path):
    (tmp_path / "c.json").write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(tmp_path / "c.json")


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.5), st.sampled_from(["bands", "samples"]), st.sampled_from(["eq5", "product"]))
def test_dict_roundtrip(alpha, df_mode, combine):
    cfg = config_from_dict({"alpha": alpha, "df_mode": df_mode, "combine": combine, "calibration": {
        "gain": [1.0], "bias": [0.0], "esun": [1500.0], "sun_elevation_deg": 40.0, "earth_sun_distance_au": 1.0}})
    assert config_from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_window_sample_counts():
    assert window_sample_counts([(620.0, 680.0), (770.0, 860.0)], 5.0) == (13, 19)
    assert window_sample_counts([(620.0, 680.0), (770.0, 860.0)], 1.0) == (61, 91)
    assert window_sample_counts([(0.0, 0.3)], 1.0) == (1,)

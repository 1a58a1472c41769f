import json

import numpy as np
import pytest
from PIL import Image

from polwater.config import ConfigError, PipelineConfig, RoiConfig
from polwater.dataset import (DRY, IGNORE, WATER, CameraConstants, DatasetManifest, FrameEntry,
                              ManifestError, import_field_dataset, read_bool_png, with_split,
                              write_bool_png, write_png)
from polwater.fixtures import SpecError, specs_from_document
from polwater.stereo import StereoParams


def test_config_round_trip(tmp_path):
    cfg = PipelineConfig(stereo=StereoParams(max_disparity=40, paths=8), roi=RoiConfig(horizon_row=120.5),
                         feature_set="without-azimuth", threshold=2.5, seed=9, covariance="diag")
    again = PipelineConfig.from_dict(json.loads(cfg.to_json()))
    assert again == cfg
    cfg.save(tmp_path / "c.json")
    assert PipelineConfig.load(tmp_path / "c.json") == cfg
    assert again.digest() == cfg.digest()
    assert PipelineConfig(seed=1).digest() != cfg.digest()


def test_config_defaults():
    cfg = PipelineConfig()
    assert cfg.gmm_clusters == 5 and cfg.threshold == 1.0 and cfg.cauchy_scale == 1.0
    assert cfg.features.descriptor == "with-azimuth"
    edges = cfg.range_edges()
    assert edges[0] == 0 and edges[-1] == 105 and len(edges) == 22


@pytest.mark.parametrize("doc,path", [
    ({"gmm_clusters": 0}, "gmm_clusters"),
    ({"gmm_clusters": "five"}, "gmm_clusters"),
    ({"feature_set": "colour"}, "feature_set"),
    ({"bogus": 1}, "bogus"),
    ({"roi": {"apex_offset": 1.5}}, "roi.apex_offset"),
    ({"roi": {"vertex": 1}}, "roi.vertex"),
    ({"stereo": {"p1": 1.5}}, "stereo.p1"),
    ({"stereo": {"paths": 6}}, "stereo"),
    ({"stereo": 3}, "stereo"),
    ({"seed": True}, "seed"),
])
def test_config_errors_name_field(doc, path):
    with pytest.raises(ConfigError) as info:
        PipelineConfig.from_dict(doc)
    assert info.value.path == path


def test_config_invalid_json(tmp_path):
    (tmp_path / "c.json").write_text("{nope")
    with pytest.raises(ConfigError):
        PipelineConfig.load(tmp_path / "c.json")


def _manifest(tmp_path, shape=(12, 16), mask_shape=None):
    img = np.zeros((shape[0], 2 * shape[1], 3), np.uint8)
    write_png(tmp_path / "f.png", img)
    mask = np.zeros(mask_shape or shape, np.uint8)
    mask[0, 0] = 255
    mask[0, 1] = 128
    write_png(tmp_path / "m.png", mask)
    m = DatasetManifest([FrameEntry("f", image="f.png", mask="m.png", split="train")],
                        CameraConstants(720.0, 0.12, 1.77, (7.5, 5.5)), root=tmp_path)
    m.save(tmp_path / "manifest.json")
    return m


def test_manifest_round_trip(tmp_path):
    m = _manifest(tmp_path)
    loaded = DatasetManifest.load(tmp_path / "manifest.json")
    assert loaded == m
    assert DatasetManifest.from_dict(loaded.to_dict(), tmp_path) == loaded
    frame = loaded.load_frame(loaded.frames[0])
    assert frame.left.shape == (12, 16, 3) and frame.principal_point == (7.5, 5.5)
    labels = loaded.load_mask(loaded.frames[0], (12, 16))
    assert labels[0, 0] == WATER and labels[0, 1] == IGNORE and labels[1, 1] == DRY
    loaded.validate()


def test_mask_dimension_mismatch_names_frame(tmp_path):
    m = _manifest(tmp_path, mask_shape=(12, 15))
    with pytest.raises(ManifestError, match="frame f"):
        m.load_mask(m.frames[0], (12, 16))
    with pytest.raises(ManifestError, match="frame f"):
        m.validate()


def test_manifest_errors(tmp_path):
    with pytest.raises(ManifestError):
        DatasetManifest.from_dict({"format": "other"})
    with pytest.raises(ManifestError):
        FrameEntry("x", split="train")
    with pytest.raises(ManifestError):
        FrameEntry("x", image="a.png", split="validation")
    with pytest.raises(ManifestError):
        DatasetManifest([FrameEntry("x", image="a"), FrameEntry("x", image="b")])
    with pytest.raises(ManifestError):
        DatasetManifest.load(tmp_path / "missing.json")
    m = DatasetManifest([FrameEntry("x", image="a.png")], root=tmp_path)
    with pytest.raises(ManifestError, match="missing file"):
        m.validate()


def test_bool_png_round_trip(tmp_path):
    mask = np.random.default_rng(0).random((9, 13)) < 0.5
    write_bool_png(tmp_path / "b.png", mask)
    np.testing.assert_array_equal(read_bool_png(tmp_path / "b.png"), mask)
    assert not list(tmp_path.glob("*.tmp"))


def test_import_field_dataset(tmp_path):
    src = tmp_path / "field"
    src.mkdir()
    for i in range(5):
        Image.fromarray(np.zeros((6, 20, 3), np.uint8)).save(src / f"{i:03d}.png")
        if i != 2:
            Image.fromarray(np.zeros((6, 10), np.uint8)).save(src / f"{i:03d}_mask.png")
    m = import_field_dataset(src, tmp_path / "manifest.json", test_every=2)
    splits = {f.id: f.split for f in m.frames}
    assert splits == {"000": "test", "001": "train", "002": "none", "003": "test", "004": "train"}
    loaded = DatasetManifest.load(tmp_path / "manifest.json")
    loaded.validate()
    assert loaded.load_frame(loaded.frames[0]).width == 10
    m2 = with_split(loaded, {"002": "test"})
    assert m2.frames[2].split == "test" and loaded.frames[2].split == "none"
    with pytest.raises(ManifestError):
        import_field_dataset(tmp_path / "empty_dir_missing", tmp_path / "x.json")


@pytest.mark.parametrize("doc,path", [
    ({"kind": "cube"}, "kind"),
    ({"kind": "frames"}, "frames"),
    ({"kind": "frames", "frames": [{"puddles": [{"x": 0, "z": 5, "semi_x": 1}]}]}, "frames[0].puddles[0]"),
    ({"kind": "frames", "frames": [{"camera": {"width": 4}}]}, "frames[0].camera"),
    ({"kind": "frames", "frames": [{"split": "dev"}]}, "frames[0].split"),
    ({"kind": "frames", "frames": [{"colour": 1}]}, "frames[0].colour"),
    ({"kind": "reference", "n_test": 2, "n_negative": 3}, "n_negative"),
    ({"kind": "approach", "n": 0}, "n"),
    ({"seed": -1}, "seed"),
    ({"extra": 1}, "extra"),
])
def test_spec_errors_name_field(doc, path):
    with pytest.raises(SpecError) as info:
        specs_from_document(doc)
    assert info.value.path == path


def test_spec_frames_override_base():
    doc = {"kind": "frames", "seed": 3, "base": {"camera": {"width": 160, "height": 90}},
           "frames": [{"split": "train", "puddles": [{"x": 0, "z": 5, "semi_x": 1, "semi_z": 1}]},
                      {"camera": {"pitch_deg": 4.0}}]}
    specs, splits = specs_from_document(doc)
    assert splits == ["train", "test"]
    assert specs[0].camera.width == 160 and len(specs[0].puddles) == 1
    assert specs[1].camera.width == 160 and specs[1].camera.pitch_deg == 4.0
    assert [s.seed for s in specs] == [3, 4]


def test_reference_spec_counts():
    specs, splits = specs_from_document({"kind": "reference"})
    assert splits.count("train") == 54 and splits.count("test") == 65
    assert all(s.puddles for s, sp in zip(specs, splits) if sp == "train")
    assert sum(1 for s, sp in zip(specs, splits) if sp == "test" and not s.puddles) == 5

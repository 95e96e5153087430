import json

import pytest

from lotqsm.config import PipelineConfig, load_config
from lotqsm.errors import StructuralError


def test_defaults_and_hash_stable():
    a, b = load_config(), load_config({})
    assert a.hash() == b.hash()
    assert a.tkd_threshold == 0.2 and a.resharp.smv_radius == 3
    assert a.train.lr == (1e-3, 1e-4, 1e-5)


def test_file_and_overrides(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 4, "resharp": {"smv_radius": 2}}))
    cfg = load_config(path, {"train.epochs": 7, "unet.depth": 2})
    assert (cfg.seed, cfg.resharp.smv_radius, cfg.train.epochs, cfg.unet.depth) == (4, 2, 7, 2)
    assert cfg.train.batch == 4
    assert cfg.hash() != load_config(path).hash()
    assert cfg.dataset_config(3).n_samples == 3


def test_reports_every_problem():
    with pytest.raises(StructuralError) as info:
        load_config({"sede": 1, "resharp": {"smv_radius": "x", "bogus": 1}, "dataset": {"dtype": "int8"}})
    msg = str(info.value)
    for expected in ("sede: unknown key", "resharp.bogus: unknown key", "resharp.smv_radius", "dataset.dtype"):
        assert expected in msg


def test_domain_checks_surface_as_structural():
    with pytest.raises(StructuralError, match="hemorrhage_prob"):
        load_config({"pathology": {"hemorrhage_prob": 2.0}})


def test_bad_json(tmp_path):
    (tmp_path / "c.json").write_text("{not json")
    with pytest.raises(StructuralError):
        load_config(tmp_path / "c.json")


def test_round_trip_through_dict():
    cfg = load_config({"seed": 9})
    assert PipelineConfig.model_validate(cfg.to_dict()).hash() == cfg.hash()

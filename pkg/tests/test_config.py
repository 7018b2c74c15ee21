import json

import pytest

from akd.config import load_run_config, parse_run_config
from akd.errors import ConfigError


def base_doc(**overrides):
    doc = {
        "vit_teacher": {"image_size": 32, "patch_size": 8, "layers": 6,
                        "heads": 4, "head_dim": 8},
        "vit_student": {"image_size": 32, "patch_size": 16, "layers": 4,
                        "heads": 2, "head_dim": 8},
    }
    doc.update(overrides)
    return doc


def test_minimal_config_parses():
    cfg = parse_run_config(base_doc())
    assert cfg.vit_teacher.layers == 6
    assert cfg.vit_student.heads == 2
    assert cfg.distill.lam == 0.1
    assert cfg.projector_depth == 4


def test_unknown_section_rejected():
    with pytest.raises(ConfigError, match="optimizer"):
        parse_run_config(base_doc(optimizer={}))


def test_unknown_key_names_full_path():
    doc = base_doc()
    doc["distill"] = {"lamda": 0.1}
    with pytest.raises(ConfigError, match=r"distill\.lamda"):
        parse_run_config(doc)


def test_type_error_names_path_and_types():
    doc = base_doc()
    doc["train"] = {"batch_size": "64"}
    with pytest.raises(ConfigError, match=r"train\.batch_size"):
        parse_run_config(doc)


def test_bool_is_not_int():
    doc = base_doc()
    doc["train"] = {"batch_size": True}
    with pytest.raises(ConfigError, match=r"train\.batch_size"):
        parse_run_config(doc)


def test_int_accepted_for_float():
    doc = base_doc()
    doc["distill"] = {"temperature": 10}
    assert parse_run_config(doc).distill.temperature == 10.0


def test_lambda_alias():
    doc = base_doc()
    doc["distill"] = {"lambda": 0.5}
    assert parse_run_config(doc).distill.lam == 0.5


def test_projector_depth_in_distill_section():
    doc = base_doc()
    doc["distill"] = {"projector_depth": 2}
    cfg = parse_run_config(doc)
    assert cfg.projector_depth == 2


def test_missing_required_section():
    with pytest.raises(ConfigError, match="vit_student"):
        parse_run_config({"vit_teacher": base_doc()["vit_teacher"]})


def test_invalid_architecture_propagates():
    doc = base_doc()
    doc["vit_teacher"]["patch_size"] = 7   # does not divide 32
    with pytest.raises(ConfigError):
        parse_run_config(doc)


def test_train_section_round_trip():
    doc = base_doc()
    doc["train"] = {"batch_size": 16, "total_epochs": 20, "seed": 5,
                    "augment": False, "base_lr": 0.001}
    cfg = parse_run_config(doc)
    assert cfg.train.batch_size == 16
    assert cfg.train.seed == 5
    assert cfg.train.augment is False


def test_load_from_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(base_doc()))
    cfg = load_run_config(path)
    assert cfg.vit_teacher.patch_size == 8


def test_load_rejects_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="JSON"):
        load_run_config(path)


def test_non_object_document():
    with pytest.raises(ConfigError):
        parse_run_config([1, 2, 3])
    with pytest.raises(ConfigError):
        parse_run_config(base_doc(distill=[1]))

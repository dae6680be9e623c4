"""Model file round-trips and validation."""
import numpy as np
import pytest

from spanmatch.checks import toy_setting
from spanmatch.evaluation import evaluate
from spanmatch.decoder import DecoderConfig
from spanmatch.model_io import ModelFormatError, load_model, save_model
from spanmatch.nn import Parameters
from spanmatch.spans import PipelineConfig


def test_byte_exact_roundtrip(tmp_path, rng):
    cfg = PipelineConfig(d_w=5, d=4, max_span_len=6)
    params = Parameters.init(5, 4, cfg.d_ff, rng)
    path = tmp_path / "model.bin"
    save_model(path, params, cfg)
    loaded, loaded_cfg = load_model(path)
    assert loaded_cfg == cfg
    for name in params.arrays:
        np.testing.assert_array_equal(loaded.arrays[name], params.arrays[name])
    # saving the loaded model reproduces the file byte for byte
    path2 = tmp_path / "model2.bin"
    save_model(path2, loaded, loaded_cfg)
    assert path.read_bytes() == path2.read_bytes()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "model.bin"
    path.write_bytes(b"NOTIT" + b"\x00" * 32)
    with pytest.raises(ModelFormatError, match="magic"):
        load_model(path)


def test_truncated_file_rejected(tmp_path, rng):
    cfg = PipelineConfig(d_w=3, d=2)
    params = Parameters.init(3, 2, cfg.d_ff, rng)
    path = tmp_path / "model.bin"
    save_model(path, params, cfg)
    blob = path.read_bytes()
    path.write_bytes(blob[:-16])
    with pytest.raises(ModelFormatError, match="truncated"):
        load_model(path)


def test_trailing_garbage_rejected(tmp_path, rng):
    cfg = PipelineConfig(d_w=3, d=2)
    params = Parameters.init(3, 2, cfg.d_ff, rng)
    path = tmp_path / "model.bin"
    save_model(path, params, cfg)
    path.write_bytes(path.read_bytes() + b"x")
    with pytest.raises(ModelFormatError, match="trailing"):
        load_model(path)


def test_save_load_evaluate_identity(tmp_path):
    """Evaluating a reloaded model reproduces the pre-save report exactly."""
    episode, store, params, cfg = toy_setting(seed=9)
    before = evaluate([episode], store, params, cfg, DecoderConfig())
    path = tmp_path / "model.bin"
    save_model(path, params, cfg)
    loaded, loaded_cfg = load_model(path)
    after = evaluate([episode], store, loaded, loaded_cfg, DecoderConfig())
    assert before.to_dict() == after.to_dict()

"""Checkpoint format: byte-stable round trips and corruption rejection."""

import numpy as np
import pytest
from helpers import tiny_run_config

from voicesep.checkpoint import (
    CheckpointFormatError,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
)
from voicesep.config import SAMPLE_RATE, RunConfig
from voicesep.model import init_model_params
from voicesep.signal import AudioClip
from voicesep.training import _checkpoint_blob, separate


def _fresh(cfg, seed=0):
    return init_model_params(cfg.low_bands, cfg.n_bins, np.random.default_rng(seed))


def _blob(cfg, epoch=1):
    return _checkpoint_blob(cfg, epoch, np.random.default_rng(cfg.seed))


def test_save_load_save_is_byte_identical(tmp_path):
    cfg = tiny_run_config()
    params = _fresh(cfg)
    first = tmp_path / "a.ckpt"
    second = tmp_path / "b.ckpt"
    save_checkpoint(first, params, _blob(cfg))
    ckpt = load_checkpoint(first)
    save_checkpoint(second, model_from_checkpoint(ckpt, cfg), _blob(cfg))
    assert first.read_bytes() == second.read_bytes()


def test_round_trip_preserves_tensors_at_float32(tmp_path):
    cfg = tiny_run_config()
    params = _fresh(cfg, seed=1)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, _blob(cfg))
    ckpt = load_checkpoint(path)
    named = dict(params.named_parameters())
    assert set(ckpt.tensors) == set(named)
    for name, tensor in ckpt.tensors.items():
        assert tensor.shape == named[name].values.shape
        assert np.array_equal(tensor, named[name].values.astype(np.float32))


def test_config_blob_round_trip(tmp_path):
    cfg = tiny_run_config()
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, _fresh(cfg), _checkpoint_blob(cfg, 7, np.random.default_rng(3)))
    ckpt = load_checkpoint(path)
    assert ckpt.epoch == 7
    assert ckpt.run_config() == cfg
    assert "rng.state" in ckpt.config


def test_flipped_magic_rejected(tmp_path):
    cfg = tiny_run_config()
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, _fresh(cfg), _blob(cfg))
    data = bytearray(path.read_bytes())
    data[0] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointFormatError, match="magic"):
        load_checkpoint(path)


def test_truncated_file_rejected_with_offset(tmp_path):
    cfg = tiny_run_config()
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, _fresh(cfg), _blob(cfg))
    data = path.read_bytes()
    path.write_bytes(data[:len(data) // 2])
    with pytest.raises(CheckpointFormatError, match="offset"):
        load_checkpoint(path)


def test_wrong_version_rejected(tmp_path):
    cfg = tiny_run_config()
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, _fresh(cfg), _blob(cfg))
    data = bytearray(path.read_bytes())
    data[4] = 99
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointFormatError, match="version"):
        load_checkpoint(path)


def test_dimension_mismatch_rejected(tmp_path):
    cfg = tiny_run_config()
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, _fresh(cfg), _blob(cfg))
    ckpt = load_checkpoint(path)
    other = tiny_run_config(low_bands=16)
    with pytest.raises(CheckpointFormatError, match="shape"):
        model_from_checkpoint(ckpt, other)


def test_missing_tensor_rejected(tmp_path):
    cfg = tiny_run_config()
    params = _fresh(cfg)
    params.masker.w_mask.name = "masker.w_mask_renamed"
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, _blob(cfg))
    with pytest.raises(CheckpointFormatError, match="missing"):
        model_from_checkpoint(load_checkpoint(path), cfg)


def test_checkpoint_round_trip_preserves_separation_bitwise(tmp_path):
    cfg = tiny_run_config()
    params = _fresh(cfg, seed=5)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, _blob(cfg))
    loaded = model_from_checkpoint(load_checkpoint(path), cfg)
    again = tmp_path / "m2.ckpt"
    save_checkpoint(again, loaded, _blob(cfg))
    reloaded = model_from_checkpoint(load_checkpoint(again), cfg)
    mixture = AudioClip(np.random.default_rng(6).uniform(-0.5, 0.5, 2000), SAMPLE_RATE)
    first = separate(mixture, loaded, cfg)
    second = separate(mixture, reloaded, cfg)
    assert np.array_equal(first.voice.samples, second.voice.samples)
    assert first.ri_iterations == second.ri_iterations

import struct

import numpy as np
import pytest

from drumscribe.baselines import CnnConfig, init_cnn
from drumscribe.checkpoint import CheckpointError, checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint
from drumscribe.config import ConfigError, PipelineConfig, load_config, parse_pairs
from drumscribe.model import VitConfig, init_vit
from drumscribe.train import build_model


def test_defaults_round_trip_through_lines():
    cfg = PipelineConfig()
    lines = cfg.to_lines()
    assert "dsp.n_fft=2048" in lines and "train.lr=0.0003" in lines and "cnn.channels=8,16,32" in lines
    assert PipelineConfig().with_overrides(parse_pairs("\n".join(lines))) == cfg


def test_file_then_overrides(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\ntrain.epochs = 12   # trailing\n\nvit.depth=2\ntrain.val_fraction = 1/4\ncnn.channels = 4, 8\n")
    cfg = load_config(p, {"train.epochs": "5", "train.augment": "true"})
    assert cfg.train.epochs == 5 and cfg.train.augment is True
    assert cfg.vit.depth == 2 and cfg.train.val_fraction == 0.25
    assert cfg.cnn.channels == (4, 8)


@pytest.mark.parametrize("pairs", [{"train.epoch": "3"}, {"trian.epochs": "3"}, {"epochs": "3"}])
def test_unknown_keys_rejected(pairs):
    with pytest.raises(ConfigError, match="unknown config key"):
        PipelineConfig().with_overrides(pairs)


@pytest.mark.parametrize("pairs", [{"train.epochs": "many"}, {"train.augment": "maybe"}, {"dsp.n_fft": "1000"}, {"train.arch": "svm"}])
def test_bad_values_rejected(pairs):
    with pytest.raises(ConfigError):
        PipelineConfig().with_overrides(pairs)


def test_line_without_equals():
    with pytest.raises(ConfigError, match=":2:"):
        parse_pairs("train.lr=1\nnonsense\n", "x.cfg")


# ------------------------------------------------------------- DRTR1


@pytest.mark.parametrize("model", [init_vit(VitConfig(depth=1), seed=1), init_cnn(CnnConfig(channels=(2, 4)), seed=2), build_model("rnn", seed=3)])
def test_round_trip_is_byte_stable(tmp_path, model):
    p = tmp_path / "m.bin"
    save_checkpoint(model, p)
    loaded, cfg = load_checkpoint(p)
    assert type(loaded) is type(model) and loaded.config == model.config
    assert cfg.model_config(model.arch) == model.config
    for k, v in model.params.items():
        assert loaded.params[k].data.tobytes() == v.data.tobytes()
    assert checkpoint_bytes(loaded, cfg) == p.read_bytes()


def test_header_layout():
    raw = checkpoint_bytes(build_model("cnn"))
    assert raw[:4] == b"DRTR" and raw[4] == 1 and raw[5] == 2
    (blob_len,) = struct.unpack_from("<I", raw, 6)
    blob = raw[10 : 10 + blob_len].decode("utf-8")
    assert "cnn.channels=8,16,32" in blob.splitlines()
    (count,) = struct.unpack_from("<I", raw, 10 + blob_len)
    assert count == 8
    pos = 14 + blob_len
    (nlen,) = struct.unpack_from("<H", raw, pos)
    assert raw[pos + 2 : pos + 2 + nlen] == b"conv0.w"
    assert raw[pos + 2 + nlen] == 4
    assert struct.unpack_from("<4I", raw, pos + 3 + nlen) == (8, 1, 3, 3)


def test_config_is_embedded():
    cfg = load_config(overrides={"train.epochs": "7", "dsp.top_db": "60"})
    _, back = parse_checkpoint(checkpoint_bytes(build_model("rnn"), cfg))
    assert back.train.epochs == 7 and back.dsp.top_db == 60.0


def _with_arch_id(raw, arch_id):
    return raw[:5] + bytes([arch_id]) + raw[6:]


@pytest.mark.parametrize("mutate,msg", [
    (lambda r: b"XXXX" + r[4:], "not a DRTR"),
    (lambda r: r[:4] + b"\x02" + r[5:], "version"),
    (lambda r: _with_arch_id(r, 0), "architecture id"),
    (lambda r: _with_arch_id(r, 9), "architecture id"),
    (lambda r: r[:-3], "past end|truncated"),
    (lambda r: r + b"\x00", "trailing"),
])
def test_corruption_detected(mutate, msg):
    raw = checkpoint_bytes(build_model("rnn"))
    with pytest.raises(CheckpointError, match=msg):
        parse_checkpoint(mutate(raw))


def test_mismatched_architecture_rejected():
    raw = checkpoint_bytes(build_model("rnn"))
    with pytest.raises(CheckpointError):
        parse_checkpoint(_with_arch_id(raw, 2))


def test_load_in_float64_for_analysis():
    model = build_model("vit", VitConfig(depth=1), seed=4)
    loaded, _ = parse_checkpoint(checkpoint_bytes(model), dtype=np.float64)
    assert loaded.dtype == np.float64
    np.testing.assert_array_equal(loaded.params["head.w"].data, model.params["head.w"].data.astype(np.float64))

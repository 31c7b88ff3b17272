import json
import struct

import numpy as np
import pytest

from orientnet import nn, zoo
from orientnet.checkpoint import MAGIC, decode_checkpoint, encode_checkpoint, load_checkpoint, load_params, save_checkpoint
from orientnet.errors import ConfigMismatchError, FormatError


@pytest.fixture
def saved(tmp_path, rng):
    cfg = zoo.build_model("tiny-orient", 32)
    params = nn.init_params(cfg, "fresh", rng)
    path = tmp_path / "m.onck"
    save_checkpoint(params, cfg, path)
    return cfg, params, path


def test_round_trip_bit_exact(saved):
    cfg, params, path = saved
    cfg2, loaded = load_params(path, cfg)
    assert cfg2 == cfg
    assert list(loaded) == list(params)
    for k in params:
        assert loaded[k].dtype == np.float32 and loaded[k].tobytes() == params[k].tobytes()


def test_byte_layout(saved):
    cfg, params, path = saved
    buf = path.read_bytes()
    assert buf[:4] == b"ONCK"
    version, echo_len = struct.unpack_from("<II", buf, 4)
    assert version == 1
    echo = json.loads(buf[12:12 + echo_len].decode("utf-8"))
    assert echo == cfg.to_dict()
    pos = 12 + echo_len
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    assert count == len(params)
    (name_len,) = struct.unpack_from("<H", buf, pos)
    name = buf[pos + 2:pos + 2 + name_len].decode()
    assert name == "conv0.weight"
    pos += 2 + name_len
    assert buf[pos] == 4
    assert struct.unpack_from("<4I", buf, pos + 1) == (16, 3, 3, 3)
    first = np.frombuffer(buf, "<f4", count=1, offset=pos + 17)[0]
    assert first == params["conv0.weight"].reshape(-1)[0]
    expected_len = 16 + echo_len + sum(2 + len(n) + 1 + 4 * len(s) + 4 * int(np.prod(s))
                                       for n, s in cfg.param_shapes())
    assert len(buf) == expected_len


def test_truncated_file(saved):
    _, _, path = saved
    buf = path.read_bytes()
    for cut in (2, 10, len(buf) // 2, len(buf) - 1):
        with pytest.raises(FormatError, match="offset"):
            decode_checkpoint(buf[:cut])


def test_bad_magic(saved):
    _, _, path = saved
    with pytest.raises(FormatError, match="bad magic"):
        decode_checkpoint(b"XXXX" + path.read_bytes()[4:])


def test_bad_version(saved):
    _, _, path = saved
    buf = bytearray(path.read_bytes())
    buf[4:8] = struct.pack("<I", 2)
    with pytest.raises(FormatError, match="version"):
        decode_checkpoint(bytes(buf))


def test_trailing_bytes(saved):
    _, _, path = saved
    with pytest.raises(FormatError, match="trailing"):
        decode_checkpoint(path.read_bytes() + b"\0")


def test_config_echo_checked_on_load(saved):
    _, _, path = saved
    with pytest.raises(ConfigMismatchError):
        load_params(path, zoo.build_model("tiny-orient", 64))


def test_failed_save_leaves_no_file(tmp_path, rng):
    cfg = zoo.build_model("tiny-orient", 32)
    params = nn.init_params(cfg, "zeros")
    params["conv0.weight"] = np.zeros((1, 1))
    with pytest.raises(ConfigMismatchError):
        save_checkpoint(params, cfg, tmp_path / "x.onck")
    assert not list(tmp_path.iterdir())


def test_encode_is_deterministic(saved):
    cfg, params, path = saved
    assert encode_checkpoint(params, cfg) == path.read_bytes()
    assert load_checkpoint(path).config_json == cfg.to_json()

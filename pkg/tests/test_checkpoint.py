import struct

import numpy as np
import pytest

from miaprune import admm, checkpoint
from miaprune.admm import PruneSpec
from miaprune.attack import build_attack_model
from miaprune.checkpoint import Checkpoint, decode, encode, load_checkpoint, save_checkpoint
from miaprune.errors import ConsistencyError, FormatError, LengthError
from miaprune.nn import mlp


def params_equal(a, b):
    return all(np.array_equal(p, q) and p.tobytes() == q.tobytes() for p, q in zip(a.params(), b.params()))


def test_fresh_net_round_trip(tmp_path, rng):
    net = mlp((5, 7, 3), rng)
    save_checkpoint(tmp_path / "a.miap", Checkpoint.of_classifier(net, seed=42))
    back = load_checkpoint(tmp_path / "a.miap")
    assert back.kind == "classifier" and back.seed == 42
    assert params_equal(net, back.net)
    assert back.net.describe() == net.describe()


def test_masks_and_admm_state_round_trip(rng):
    net = mlp((5, 7, 3), rng)
    state = admm.init_admm(net, PruneSpec(keep_ratios=[0.3, 0.5]), lam=0.02)
    state.U[0] += 0.5
    admm.admm_u_step(state, net)
    admm.hard_prune(net, PruneSpec(keep_ratios=[0.3, 0.5]))
    back = decode(encode(Checkpoint.of_classifier(net, 1, state, spec="x")))
    assert params_equal(net, back.net)
    for a, b in zip(net.dense_layers(), back.net.dense_layers()):
        assert np.array_equal(a.mask, b.mask)
    st = back.admm
    assert st.k == 1 and st.lam == state.lam and st.n == state.n and st.residuals == state.residuals
    assert all(np.array_equal(a, b) for a, b in zip(st.Z + st.U, state.Z + state.U))
    assert back.meta == {"spec": "x"}


def test_special_floats_survive(rng):
    net = mlp((2, 2), rng)
    net.dense_layers()[0].W[...] = [[-0.0, 1e-308], [5e-324, -1.7976931348623157e308]]
    back = decode(encode(Checkpoint.of_classifier(net)))
    assert back.net.dense_layers()[0].W.tobytes() == net.dense_layers()[0].W.tobytes()


def test_attacker_round_trip():
    fa = build_attack_model(4, np.random.default_rng(0))
    back = decode(encode(Checkpoint.of_attacker(fa, 3))).attacker()
    assert back.k == 4
    assert all(np.array_equal(p, q) for p, q in zip(fa.params(), back.params()))


def test_header_layout(rng):
    raw = encode(Checkpoint.of_classifier(mlp((2, 3), rng), seed=2 ** 64 - 1))
    assert raw[:4] == b"MIAP"
    version, dlen = struct.unpack("<II", raw[4:12])
    assert version == 1
    assert raw[12:12 + dlen].decode("utf-8").startswith("{")
    assert struct.unpack("<Q", raw[12 + dlen:20 + dlen])[0] == 2 ** 64 - 1
    assert struct.unpack("<I", raw[20 + dlen:24 + dlen])[0] == 2  # rank of W


def test_ten_element_mask_takes_two_bytes():
    from miaprune.nn import Dense, Network
    net = Network([Dense(np.ones((2, 5)), np.zeros(2))])
    raw = encode(Checkpoint.of_classifier(net))
    # ... b tensor | 2 mask bytes | admm flag
    assert raw[-3:] == bytes([0xFF, 0xC0, 0x00])
    assert len(checkpoint._mask_bytes(np.ones(10))) == 2


def test_bad_magic_and_version(rng):
    raw = encode(Checkpoint.of_classifier(mlp((2, 3), rng)))
    with pytest.raises(FormatError, match="magic"):
        decode(b"NOPE" + raw[4:])
    with pytest.raises(FormatError, match="version"):
        decode(raw[:4] + struct.pack("<I", 9) + raw[8:])


def test_truncation_names_layer(rng):
    net = mlp((3, 4, 2), rng)
    raw = encode(Checkpoint.of_classifier(net))
    # drop the flag, layer 1's mask and bias, and half of its weights
    cut = len(raw) - 1 - 1 - (4 + 4 + 2 * 8) - 32
    with pytest.raises(LengthError, match="dense layer 1"):
        decode(raw[:cut])
    with pytest.raises(LengthError):
        decode(raw[:6])


def test_shape_mismatch_is_consistency_error(rng):
    net = mlp((3, 4, 2), rng)
    raw = bytearray(encode(Checkpoint.of_classifier(net)))
    dlen = struct.unpack("<I", raw[8:12])[0]
    off = 12 + dlen + 8 + 4
    raw[off:off + 4] = struct.pack("<I", 5)
    with pytest.raises(ConsistencyError):
        decode(bytes(raw))


def test_trailing_bytes_rejected(rng):
    raw = encode(Checkpoint.of_classifier(mlp((2, 3), rng)))
    with pytest.raises(ConsistencyError):
        decode(raw + b"\x00")


def test_encoding_is_deterministic(rng):
    net = mlp((4, 4, 2), rng)
    assert encode(Checkpoint.of_classifier(net, 5)) == encode(Checkpoint.of_classifier(net.copy(), 5))

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crchain.sortition import (
    SortitionMsg,
    build_msg,
    evaluate,
    expand_bytes,
    hash256,
    is_elected,
    keygen,
    lagged_seed,
    verify,
)

D_HALF = 2 ** 255


def test_keygen_is_deterministic():
    a = keygen(7)
    b = keygen(7)
    c = keygen(8)
    assert a.pk == b.pk and a.sk == b.sk
    assert a.pk != c.pk


def test_evaluate_roundtrip():
    kp = keygen(b"\x01" * 32)
    out = evaluate(kp.sk, b"hello world")
    assert verify(kp.pk, b"hello world", out.y, out.proof)
    assert 0 <= out.y < 2 ** 256


def test_evaluate_is_deterministic_per_key_and_message():
    kp = keygen(3)
    a = evaluate(kp.sk, b"m")
    b = evaluate(kp.sk, b"m")
    assert (a.y, a.proof) == (b.y, b.proof)
    assert evaluate(kp.sk, b"n").y != a.y


def test_verify_rejects_wrong_key():
    kp, other = keygen(1), keygen(2)
    out = evaluate(kp.sk, b"msg")
    assert not verify(other.pk, b"msg", out.y, out.proof)


def test_verify_rejects_wrong_message():
    kp = keygen(1)
    out = evaluate(kp.sk, b"msg")
    assert not verify(kp.pk, b"msg2", out.y, out.proof)


def test_verify_rejects_tampered_output_value():
    kp = keygen(1)
    out = evaluate(kp.sk, b"msg")
    assert not verify(kp.pk, b"msg", out.y ^ 1, out.proof)


def test_verify_rejects_garbage_proof():
    kp = keygen(1)
    assert not verify(kp.pk, b"msg", 0, b"\x00" * 64)
    assert not verify(kp.pk, b"msg", 0, b"short")


@given(bit=st.integers(min_value=0, max_value=511))
@settings(max_examples=64, deadline=None)
def test_verify_rejects_any_single_bit_flip_in_proof(bit):
    kp = keygen(11)
    out = evaluate(kp.sk, b"flip me")
    mutated = bytearray(out.proof)
    mutated[bit // 8] ^= 1 << (bit % 8)
    assert not verify(kp.pk, b"flip me", out.y, bytes(mutated))


def test_is_elected_threshold_inclusive():
    assert is_elected(5, 5)
    assert is_elected(0, 5)
    assert not is_elected(6, 5)


@given(seed=st.integers(min_value=0, max_value=2 ** 64 - 1), msg=st.binary(min_size=0, max_size=64))
@settings(max_examples=50, deadline=None)
def test_roundtrip_property(seed, msg):
    kp = keygen(seed)
    out = evaluate(kp.sk, msg)
    assert verify(kp.pk, msg, out.y, out.proof)


def test_election_rate_tracks_difficulty():
    kp = keygen(99)
    n = 2000
    hits = sum(
        is_elected(evaluate(kp.sk, i.to_bytes(8, "big")).y, D_HALF) for i in range(n)
    )
    # 99.9% binomial interval around p=0.5
    assert abs(hits / n - 0.5) < 3.29 * (0.25 / n) ** 0.5


def test_lagged_seed_picks_f_back():
    ring = [b"a" * 32, b"b" * 32, b"c" * 32]
    assert lagged_seed(ring, 0) == b"c" * 32
    assert lagged_seed(ring, 2) == b"a" * 32
    # underfull ring clamps to the oldest entry
    assert lagged_seed(ring, 7) == b"a" * 32


def test_build_msg_fields_and_encoding():
    ring = [bytes([i]) * 32 for i in range(4)]
    digest = hash256(b"req")
    msg = build_msg(digest, ring, 2, h=25, epoch_len=8)
    assert msg.request_digest == digest
    assert msg.seed == ring[1]
    assert msg.epoch_index == 3
    raw = msg.to_bytes()
    assert len(raw) == 32 + 32 + 8
    assert raw == digest + ring[1] + (3).to_bytes(8, "big")


def test_build_msg_rejects_empty_ring():
    with pytest.raises(ValueError):
        build_msg(hash256(b"x"), [], 2, 0, 8)


def test_msg_epoch_changes_election():
    ring = [hash256(b"seed")]
    kp = keygen(4)
    m1 = build_msg(hash256(b"r"), ring, 2, 0, 8)
    m2 = build_msg(hash256(b"r"), ring, 2, 8, 8)
    assert m1.to_bytes() != m2.to_bytes()
    assert evaluate(kp.sk, m1.to_bytes()).y != evaluate(kp.sk, m2.to_bytes()).y


def test_expand_bytes_lengths_and_determinism():
    seed = hash256(b"s")
    assert expand_bytes(seed, 0) == b""
    assert len(expand_bytes(seed, 100)) == 100
    assert expand_bytes(seed, 100) == expand_bytes(seed, 100)
    assert expand_bytes(seed, 100)[:32] == expand_bytes(seed, 32)


def test_sortition_msg_is_frozen():
    msg = SortitionMsg(hash256(b"a"), hash256(b"b"), 1)
    with pytest.raises(AttributeError):
        msg.epoch_index = 2

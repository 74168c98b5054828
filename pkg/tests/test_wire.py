import hashlib
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmuckle import suite, wire
from vmuckle.errors import AeadAuthFailure, MalformedMessage, MissingPrefix
from vmuckle.wire import HandshakeMessage

SHA384_EMPTY = ("38b060a751ac96384cd9327eb1b1e36a21fdb71114be07434c0cc7bf63f6e1da"
                "274edebfe76f65fbd51ad2f14898b95b")


def test_encode_m1_layout():
    m = HandshakeMessage.make(1, pk_c=b"", pk_pq=b"AB", n_i=bytes(16))
    expect = b"\x01" + b"\x00\x00\x00" + b"\x00\x00\x02AB" + b"\x00\x00\x10" + bytes(16)
    assert wire.encode(m) == expect


def random_message(rng):
    index = rng.randint(1, 8)
    return HandshakeMessage(index, tuple(rng.randbytes(rng.randint(0, 40))
                                         for _ in wire.FIELDS[index]))


def test_round_trip_1000():
    rng = random.Random(3)
    for _ in range(1000):
        m = random_message(rng)
        assert wire.decode(wire.encode(m)) == m


@settings(max_examples=300)
@given(st.integers(1, 8), st.data())
def test_encode_injective(index, data):
    alphabet = st.binary(min_size=0, max_size=2)
    n = len(wire.FIELDS[index])
    a = data.draw(st.tuples(*[alphabet] * n))
    b = data.draw(st.tuples(*[alphabet] * n))
    ea = wire.encode(HandshakeMessage(index, a))
    eb = wire.encode(HandshakeMessage(index, b))
    assert (ea == eb) == (a == b)


def test_decode_errors():
    good = wire.encode(HandshakeMessage.make(4, sig=b"xyz"))
    for bad in (b"", good[:2], good[:-1], good + b"\x00", b"\x09" + good[1:]):
        with pytest.raises(MalformedMessage):
            wire.decode(bad)


def test_contexts():
    tr = wire.Transcript()
    assert tr.context("He") == b""
    assert tr.context("H0").hex() == SHA384_EMPTY
    with pytest.raises(MissingPrefix):
        tr.context("H1")
    tr.append(b"m1")
    tr.append(b"m2")
    assert tr.context("H1") == hashlib.sha384(b"m1m2").digest()
    with pytest.raises(MissingPrefix):
        tr.context("H2")
    assert len(tr.context("He")) == 0 and len(tr.context("H0")) == 48


def test_seal_open():
    key = bytes(range(32))
    ct = wire.seal_message(key, 3, b"payload")
    assert wire.open_message(key, 3, ct) == b"payload"
    with pytest.raises(AeadAuthFailure):
        wire.open_message(key, 4, ct)
    assert wire.associated_data(7) == b"Message 7"
    assert wire.nonce(5) == bytes(11) + b"\x05"


def test_transcript_ignores_sealing():
    msgs = [wire.encode(HandshakeMessage.make(i, **{f: b"v%d" % i for f in wire.FIELDS[i]}))
            for i in (1, 2, 3)]
    plain = wire.Transcript()
    sealed = wire.Transcript()
    for m in msgs:
        plain.append(m)
        # the receiver opens before recording, so the transcript sees plaintext either way
        blob = wire.seal_message(b"k" * 32, 3, m)
        sealed.append(suite.aead_open(b"k" * 32, wire.nonce(3), b"Message 3", blob))
    assert plain.context("H2") == sealed.context("H2")

"""Handshake message encoding, transcript contexts and message protection.

Layout of every message (plaintext form)::

    type (1 byte, 1..8) || for each field: len (3 bytes, big endian) || bytes

Field order per type:

    1: pk_c, pk_pq, n_I        5: tau_R
    2: ct_c, ct_pq, n_R        6: cert_I
    3: cert_R                  7: sig_I
    4: sig_R                   8: tau_I

Messages 3..8 travel sealed with AES-256-GCM.  The nonce is the message
index as a 96-bit big-endian integer and the associated data is the ASCII
string ``"Message N"``.  Transcript hashes are always computed over the
plaintext encodings above, never over the sealed bytes.
"""
from __future__ import annotations

from dataclasses import dataclass

from . import suite
from .errors import FieldTooLong, MalformedMessage, MissingPrefix

MAX_FIELD = (1 << 24) - 1

FIELDS = {
    1: ("pk_c", "pk_pq", "n_i"),
    2: ("ct_c", "ct_pq", "n_r"),
    3: ("cert",),
    4: ("sig",),
    5: ("tag",),
    6: ("cert",),
    7: ("sig",),
    8: ("tag",),
}

CONTEXTS = ("He", "H0", "H1", "H2", "H3", "H4", "H5", "H6")


@dataclass(frozen=True)
class HandshakeMessage:
    index: int
    fields: tuple

    def __post_init__(self):
        if self.index not in FIELDS:
            raise MalformedMessage(f"unknown message type {self.index}")
        if len(self.fields) != len(FIELDS[self.index]):
            raise MalformedMessage(f"m{self.index} takes {len(FIELDS[self.index])} fields")

    def __getitem__(self, name):
        return self.fields[FIELDS[self.index].index(name)]

    @classmethod
    def make(cls, index, **values):
        return cls(index, tuple(bytes(values[n]) for n in FIELDS[index]))


def encode(msg):
    out = bytearray([msg.index])
    for value in msg.fields:
        if len(value) > MAX_FIELD:
            raise FieldTooLong(f"field of {len(value)} bytes exceeds {MAX_FIELD}")
        out += len(value).to_bytes(3, "big")
        out += value
    return bytes(out)


def decode(data):
    if not data:
        raise MalformedMessage("empty message")
    index = data[0]
    if index not in FIELDS:
        raise MalformedMessage(f"wrong type tag {index}")
    pos = 1
    values = []
    for _ in FIELDS[index]:
        if pos + 3 > len(data):
            raise MalformedMessage("truncated length prefix")
        n = int.from_bytes(data[pos:pos + 3], "big")
        pos += 3
        if pos + n > len(data):
            raise MalformedMessage("truncated field")
        values.append(bytes(data[pos:pos + n]))
        pos += n
    if pos != len(data):
        raise MalformedMessage(f"{len(data) - pos} trailing bytes")
    return HandshakeMessage(index, tuple(values))


class Transcript:
    """Plaintext encodings of m1..m8 for one stage, in order."""

    def __init__(self, hash_name="SHA-384"):
        self.hash_name = hash_name
        self.messages = []

    def __len__(self):
        return len(self.messages)

    def append(self, raw):
        self.messages.append(bytes(raw))

    def context(self, which):
        """Return the context value named ``He``, ``H0`` .. ``H6``."""
        if which == "He":
            return b""
        if which == "H0":
            return suite.digest(b"", self.hash_name)
        if which not in CONTEXTS:
            raise ValueError(f"unknown context {which!r}")
        need = int(which[1:]) + 1
        if len(self.messages) < need:
            raise MissingPrefix(f"{which} needs m1..m{need}, transcript holds {len(self.messages)}")
        return suite.digest(b"".join(self.messages[:need]), self.hash_name)


def associated_data(index):
    return f"Message {index}".encode("ascii")


def nonce(index):
    return index.to_bytes(12, "big")


def seal_message(key, index, plaintext):
    if not 3 <= index <= 8:
        raise ValueError("only messages 3..8 are sealed")
    return suite.aead_seal(key, nonce(index), associated_data(index), plaintext)


def open_message(key, index, wire_bytes):
    if not 3 <= index <= 8:
        raise ValueError("only messages 3..8 are sealed")
    return suite.aead_open(key, nonce(index), associated_data(index), wire_bytes)

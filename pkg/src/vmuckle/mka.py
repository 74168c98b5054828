"""MACsec key hierarchy rooted in a handshake master secret.

All derivations are HMAC-SHA-256 (not the AES-CMAC KDF of 802.1X):

    CAK = HMAC(MSK, CKN)
    KEK = HMAC(CAK, "IEEE8021 KEK" || CKN)
    ICK = HMAC(CAK, "IEEE8021 ICK" || CKN)
    SAK = HMAC(CAK, SCI || key_number (4 bytes) || nonce)

SAK distribution frame (our own layout, modelled on an MKPDU)::

    offset  size  field
    0       12    member_id
    12      1     key_server_priority
    13      4     key_number (big endian)
    17      8     sci
    25      8     ciphersuite_id
    33      12    gcm_nonce
    45      2     wrapped_len (big endian)
    47      n     wrapped = AES-256-GCM(KEK, gcm_nonce, SAK || nonce, aad=bytes[0:33])
    47+n    16    icv = HMAC-SHA-256(ICK, bytes[0:47+n])[:16]

The ICV is checked before any decryption is attempted.
"""
from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass

from . import suite
from .errors import BadLength, EmptyMembership, IcvMismatch

KEK_LABEL = b"IEEE8021 KEK"
ICK_LABEL = b"IEEE8021 ICK"
DEFAULT_CKN = b"VMUCKLE-CA-01"
GCM_AES_256 = bytes.fromhex("0080C20001000002")
ICV_LEN = 16


def _hmac(key, msg):
    return hmac.new(key, msg, hashlib.sha256).digest()


@dataclass(frozen=True)
class MkaHierarchy:
    msk: bytes
    ckn: bytes
    cak: bytes
    kek: bytes
    ick: bytes

    def fingerprints(self):
        return {name: getattr(self, name).hex()[:8] for name in ("msk", "cak", "kek", "ick")}


def derive_hierarchy(msk, ckn=DEFAULT_CKN):
    if len(msk) != 48:
        raise BadLength(f"MSK must be 48 bytes, got {len(msk)}")
    if not 1 <= len(ckn) <= 32:
        raise BadLength(f"CKN must be 1..32 bytes, got {len(ckn)}")
    cak = _hmac(msk, ckn)
    return MkaHierarchy(msk, ckn, cak, _hmac(cak, KEK_LABEL + ckn), _hmac(cak, ICK_LABEL + ckn))


def elect_key_server(members):
    """Highest priority wins; ties go to the lowest member id."""
    if not members:
        raise EmptyMembership("no members to elect from")
    return min(members, key=lambda m: (-m[1], m[0]))[0]


@dataclass(frozen=True)
class SakRecord:
    sak: bytes
    sci: bytes
    key_number: int
    nonce: bytes


def generate_sak(h, sci, key_number, rng=None):
    if len(sci) != 8:
        raise BadLength(f"SCI must be 8 bytes, got {len(sci)}")
    nonce = (rng or suite.default_rng()).randbytes(32)
    sak = _hmac(h.cak, sci + key_number.to_bytes(4, "big") + nonce)
    return SakRecord(sak, sci, key_number, nonce)


@dataclass(frozen=True)
class MkpduFrame:
    member_id: bytes
    key_server_priority: int
    key_number: int
    sci: bytes
    ciphersuite_id: bytes
    gcm_nonce: bytes
    wrapped_sak: bytes
    icv: bytes

    def header(self):
        return (self.member_id + bytes([self.key_server_priority])
                + self.key_number.to_bytes(4, "big") + self.sci)

    def protected(self):
        return (self.header() + self.ciphersuite_id + self.gcm_nonce
                + len(self.wrapped_sak).to_bytes(2, "big") + self.wrapped_sak)

    def to_bytes(self):
        return self.protected() + self.icv

    @classmethod
    def from_bytes(cls, data):
        if len(data) < 47 + ICV_LEN:
            raise BadLength("frame too short")
        n = int.from_bytes(data[45:47], "big")
        if len(data) != 47 + n + ICV_LEN:
            raise BadLength("frame length does not match wrapped_len")
        return cls(data[0:12], data[12], int.from_bytes(data[13:17], "big"), data[17:25],
                   data[25:33], data[33:45], data[47:47 + n], data[47 + n:])


def icv(h, protected):
    return _hmac(h.ick, protected)[:ICV_LEN]


def wrap_sak(h, rec, member_id=bytes(12), priority=0, rng=None):
    if len(member_id) != 12:
        raise BadLength("member id must be 12 bytes")
    gcm_nonce = (rng or suite.default_rng()).randbytes(12)
    partial = MkpduFrame(member_id, priority, rec.key_number, rec.sci, GCM_AES_256,
                         gcm_nonce, b"", b"")
    wrapped = suite.aead_seal(h.kek, gcm_nonce, partial.header() + GCM_AES_256,
                              rec.sak + rec.nonce)
    frame = MkpduFrame(member_id, priority, rec.key_number, rec.sci, GCM_AES_256,
                       gcm_nonce, wrapped, b"")
    return MkpduFrame(**{**frame.__dict__, "icv": icv(h, frame.protected())})


def unwrap_sak(h, frame):
    if isinstance(frame, (bytes, bytearray)):
        frame = MkpduFrame.from_bytes(bytes(frame))
    if not hmac.compare_digest(icv(h, frame.protected()), frame.icv):
        raise IcvMismatch("integrity check value does not verify")
    plain = suite.aead_open(h.kek, frame.gcm_nonce, frame.header() + frame.ciphersuite_id,
                            frame.wrapped_sak)
    if len(plain) != 64:
        raise BadLength("unwrapped SAK record has the wrong size")
    return SakRecord(plain[:32], frame.sci, frame.key_number, plain[32:])


@dataclass
class MkaNode:
    """One station of the two-node demo flow."""

    name: str
    member_id: bytes
    priority: int
    sci: bytes
    hierarchy: MkaHierarchy = None
    sak: SakRecord = None

    def install_msk(self, msk, ckn=DEFAULT_CKN):
        self.hierarchy = derive_hierarchy(msk, ckn)
        return self.hierarchy


def distribute_sak(nodes, key_number=1, rng=None):
    """Elect a key server among ``nodes``, generate a SAK and hand it out.

    Returns ``(server, frames)`` where ``frames`` maps receiver name to the
    frame bytes it was given.
    """
    by_id = {n.member_id: n for n in nodes}
    server = by_id[elect_key_server([(n.member_id, n.priority) for n in nodes])]
    rec = generate_sak(server.hierarchy, server.sci, key_number, rng)
    server.sak = rec
    frames = {}
    for node in nodes:
        if node is server:
            continue
        raw = wrap_sak(server.hierarchy, rec, server.member_id, server.priority, rng).to_bytes()
        node.sak = unwrap_sak(node.hierarchy, raw)
        frames[node.name] = raw
    return server, frames

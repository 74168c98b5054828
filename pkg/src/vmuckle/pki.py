"""Minimal hybrid certificate infrastructure.

Certificates carry a post-quantum and a classical public key and are signed
by the issuer with both of its keys.  The hierarchy is root -> intermediate
-> leaf; the root is the trust anchor and is never sent on the wire.

Certificate file layout (all length prefixes are 3-byte big endian)::

    "VMC1" || len || tbs || len || sig_pq || len || sig_classical

    tbs = len||subject || len||issuer || len||pq_alg || len||pk_pq
          || len||classical_alg || len||pk_classical
          || not_before (8 bytes) || not_after (8 bytes)

A certificate therefore costs 4 + 9 + 6*3 + 16 bytes of framing plus its
names, keys and signatures.  Key files use the magic ``"VMK1"`` followed by
length-prefixed name, pq_alg, pq_sk, pq_pk, classical_alg, classical_sk and
classical_pk.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from . import suite
from .errors import MalformedMessage, MissingKey

CERT_MAGIC = b"VMC1"
KEY_MAGIC = b"VMK1"
CA_PQ_ALG = "ML-DSA-87"
CA_CLASSICAL_ALG = "Ed25519"
YEAR = 365 * 24 * 3600


def _lp(data):
    return len(data).to_bytes(3, "big") + data


class _Reader:
    def __init__(self, data, what):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n):
        if self.pos + n > len(self.data):
            raise MalformedMessage(f"truncated {self.what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return bytes(out)

    def field(self):
        return self.take(int.from_bytes(self.take(3), "big"))

    def done(self):
        if self.pos != len(self.data):
            raise MalformedMessage(f"trailing bytes in {self.what}")


@dataclass
class SigningKeys:
    """A subject's two key pairs.  Secret halves may be empty."""

    name: str
    pq_alg: str
    pq_pk: bytes
    classical_alg: str
    classical_pk: bytes
    pq_sk: bytes = field(default=b"", repr=False)
    classical_sk: bytes = field(default=b"", repr=False)

    def to_bytes(self):
        parts = [self.name.encode(), self.pq_alg.encode(), self.pq_sk, self.pq_pk,
                 self.classical_alg.encode(), self.classical_sk, self.classical_pk]
        return KEY_MAGIC + b"".join(_lp(p) for p in parts)

    @classmethod
    def from_bytes(cls, data):
        if data[:4] != KEY_MAGIC:
            raise MalformedMessage("not a key file")
        r = _Reader(data[4:], "key file")
        name, pq_alg, pq_sk, pq_pk, c_alg, c_sk, c_pk = (r.field() for _ in range(7))
        r.done()
        return cls(name.decode(), pq_alg.decode(), pq_pk, c_alg.decode(), c_pk, pq_sk, c_sk)


def generate_keys(name, pq_alg, classical_alg=CA_CLASSICAL_ALG, rng=None):
    pq_pk, pq_sk = suite.dss_keygen(pq_alg, rng)
    c_pk, c_sk = suite.dss_keygen(classical_alg, rng)
    return SigningKeys(name, pq_alg, pq_pk, classical_alg, c_pk, pq_sk, c_sk)


@dataclass(frozen=True)
class HybridCertificate:
    subject: str
    issuer: str
    pq_alg: str
    pk_pq: bytes
    classical_alg: str
    pk_classical: bytes
    not_before: int
    not_after: int
    sig_pq: bytes = b""
    sig_classical: bytes = b""

    @property
    def raw_tbs(self):
        return (_lp(self.subject.encode()) + _lp(self.issuer.encode())
                + _lp(self.pq_alg.encode()) + _lp(self.pk_pq)
                + _lp(self.classical_alg.encode()) + _lp(self.pk_classical)
                + self.not_before.to_bytes(8, "big") + self.not_after.to_bytes(8, "big"))

    def to_bytes(self):
        return CERT_MAGIC + _lp(self.raw_tbs) + _lp(self.sig_pq) + _lp(self.sig_classical)

    @classmethod
    def from_bytes(cls, data):
        if data[:4] != CERT_MAGIC:
            raise MalformedMessage("not a certificate")
        r = _Reader(data[4:], "certificate")
        tbs, sig_pq, sig_c = r.field(), r.field(), r.field()
        r.done()
        t = _Reader(tbs, "certificate body")
        subject, issuer, pq_alg, pk_pq, c_alg, pk_c = (t.field() for _ in range(6))
        nb = int.from_bytes(t.take(8), "big")
        na = int.from_bytes(t.take(8), "big")
        t.done()
        try:
            return cls(subject.decode(), issuer.decode(), pq_alg.decode(), pk_pq,
                       c_alg.decode(), pk_c, nb, na, sig_pq, sig_c)
        except UnicodeDecodeError as exc:
            raise MalformedMessage(f"certificate names: {exc}") from exc

    def subject_keys(self):
        return SigningKeys(self.subject, self.pq_alg, self.pk_pq,
                           self.classical_alg, self.pk_classical)


def issue(ca_keys, subject_keys, validity=None, rng=None):
    """Issue a certificate for ``subject_keys`` signed with both CA keys."""
    if not ca_keys.pq_sk or not ca_keys.classical_sk:
        raise MissingKey(f"CA {ca_keys.name!r} must hold both signing keys")
    if validity is None:
        now = int(time.time())
        validity = (now - 3600, now + YEAR)
    cert = HybridCertificate(subject_keys.name, ca_keys.name, subject_keys.pq_alg,
                             subject_keys.pq_pk, subject_keys.classical_alg,
                             subject_keys.classical_pk, int(validity[0]), int(validity[1]))
    tbs = cert.raw_tbs
    return HybridCertificate(
        **{**cert.__dict__,
           "sig_pq": suite.sign(ca_keys.pq_alg, ca_keys.pq_sk, tbs, rng),
           "sig_classical": suite.sign(ca_keys.classical_alg, ca_keys.classical_sk, tbs, rng)})


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    reason: str = "Ok"
    detail: str = ""

    def __bool__(self):
        return self.ok


def _check_link(cert, parent, now):
    if cert.issuer != parent.subject:
        return VerifyResult(False, "IssuerMismatch", f"{cert.subject} names issuer {cert.issuer}")
    if not cert.sig_pq or not cert.sig_classical:
        return VerifyResult(False, "MissingSignature", cert.subject)
    tbs = cert.raw_tbs
    try:
        pq_ok = suite.verify(parent.pq_alg, parent.pk_pq, tbs, cert.sig_pq)
        c_ok = suite.verify(parent.classical_alg, parent.pk_classical, tbs, cert.sig_classical)
    except Exception as exc:  # unknown algorithm names in a received certificate
        return VerifyResult(False, "BadSignature", f"{cert.subject}: {exc}")
    if not (pq_ok and c_ok):
        return VerifyResult(False, "BadSignature", cert.subject)
    if now < cert.not_before:
        return VerifyResult(False, "NotYetValid", cert.subject)
    if now > cert.not_after:
        return VerifyResult(False, "Expired", cert.subject)
    return VerifyResult(True)


def verify_chain(chain, trust_anchor, now=None):
    """Check leaf -> intermediate -> root against ``trust_anchor``.

    ``chain`` may omit the root, in which case the anchor is used.  Both
    signatures of every link must verify.
    """
    now = int(time.time()) if now is None else now
    chain = list(chain)
    if len(chain) == 2:
        chain.append(trust_anchor)
    if len(chain) != 3:
        return VerifyResult(False, "BadLength", f"chain of {len(chain)} certificates")
    leaf, inter, root = chain
    if root.to_bytes() != trust_anchor.to_bytes():
        return VerifyResult(False, "UntrustedRoot", root.subject)
    for cert, parent in ((root, root), (inter, root), (leaf, inter)):
        result = _check_link(cert, parent, now)
        if not result:
            return result
    return VerifyResult(True)


def encode_chain(certs):
    return b"".join(_lp(c.to_bytes()) for c in certs)


def decode_chain(data):
    r = _Reader(data, "certificate chain")
    certs = []
    while r.pos < len(data):
        certs.append(HybridCertificate.from_bytes(r.field()))
    return certs


@dataclass
class Hierarchy:
    """Root and intermediate CA plus the leaves issued under them."""

    root: HybridCertificate
    root_keys: SigningKeys
    intermediate: HybridCertificate
    intermediate_keys: SigningKeys
    leaves: dict = field(default_factory=dict)

    def add_leaf(self, name, pq_alg, classical_alg=CA_CLASSICAL_ALG, validity=None, rng=None):
        keys = generate_keys(name, pq_alg, classical_alg, rng)
        cert = issue(self.intermediate_keys, keys, validity, rng)
        self.leaves[name] = (cert, keys)
        return cert, keys

    def chain(self, name):
        """The certificates a leaf sends: leaf and intermediate."""
        return [self.leaves[name][0], self.intermediate]


def build_hierarchy(ca_pq_alg=CA_PQ_ALG, ca_classical_alg=CA_CLASSICAL_ALG,
                    validity=None, rng=None, root_name="VMuckle Root CA",
                    intermediate_name="VMuckle Intermediate CA"):
    root_keys = generate_keys(root_name, ca_pq_alg, ca_classical_alg, rng)
    root = issue(root_keys, root_keys, validity, rng)
    inter_keys = generate_keys(intermediate_name, ca_pq_alg, ca_classical_alg, rng)
    inter = issue(root_keys, inter_keys, validity, rng)
    return Hierarchy(root, root_keys, inter, inter_keys)

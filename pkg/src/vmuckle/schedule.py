"""Key schedule of a single stage.

Every derivation is one PRF call ``F(key, label || context)``, with the label
bytes followed directly by the context bytes.  Conventions the derivation
graph leaves open:

* the traffic keys are ``F(HTS, "tk")`` truncated to the AEAD key length;
* the master secret is ``F(dHS, 0x00)``;
* ⊥ and empty keys are replaced by the all-zero key of hash length.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

from . import suite
from .errors import WrongLength

L0 = b"derive k c"
L1 = b"derive k pq"
L2 = b"first ck"
L3 = b"second ck"
L4 = b"third ck"
L5 = b"fourth ck"
L6 = b"derived"
L7 = b"c hs traffic"
L8 = b"s hs traffic"
L9 = b"finished"
L10 = b"c ap traffic"
L11 = b"s ap traffic"
L12 = b"secstate"
L13 = b"TLS 1.3, server CertificateVerify"
L14 = b"TLS 1.3, client CertificateVerify"

LABELS = (L0, L1, L2, L3, L4, L5, L6, L7, L8, L9, L10, L11, L12, L13, L14)

TK_LABEL = b"tk"
MS_INPUT = b"\x00"

STEP_NAMES = (
    "k_c", "k_pq", "k0", "k1", "k2", "k3", "CHTS", "SHTS", "dHS",
    "tk_chs", "tk_shs", "fk_C", "fk_S", "MS", "CATS", "SATS", "SecState",
)


@dataclass
class StageInputs:
    ss_c: bytes
    ss_pq: bytes
    k_q: bytes
    sec_state: bytes
    transcript: object
    security_param: int = 256

    def check(self):
        if not self.ss_pq:
            raise WrongLength("ss_pq must be non-empty")
        if len(self.k_q) != self.security_param // 8:
            raise WrongLength(f"QKD key must be {self.security_param // 8} bytes, got {len(self.k_q)}")


@dataclass
class StageKeys:
    k_c: bytes = None
    k_pq: bytes = None
    k0: bytes = None
    k1: bytes = None
    k2: bytes = None
    k3: bytes = None
    CHTS: bytes = None
    SHTS: bytes = None
    dHS: bytes = None
    tk_chs: bytes = None
    tk_shs: bytes = None
    fk_C: bytes = None
    fk_S: bytes = None
    MS: bytes = None
    CATS: bytes = None
    SATS: bytes = None
    sec_state_next: bytes = None

    @property
    def complete(self):
        return self.sec_state_next is not None

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class Step:
    name: str
    key: bytes
    input: bytes
    output: bytes

    def kat_line(self):
        return f"{self.name} {self.key.hex()} {self.input.hex()} {self.output.hex()}"


class _Deriver:
    def __init__(self, hash_name, trace):
        self.hash_name = hash_name
        self.trace = trace

    def __call__(self, name, key, data, length=None):
        out = suite.prf(key, data, self.hash_name)
        if length is not None:
            out = out[:length]
        if self.trace is not None:
            self.trace.append(Step(name, key, data, out))
        return out


def derive_handshake_secrets(inputs, hash_name="SHA-384", aead_key_len=32, trace=None):
    """Run the chain from the KEM/QKD secrets up to the finished keys."""
    inputs.check()
    tr = inputs.transcript
    h1 = tr.context("H1")
    h0 = tr.context("H0")
    he = tr.context("He")
    F = _Deriver(hash_name, trace)
    k = StageKeys()
    k.k_c = F("k_c", inputs.ss_c, L0 + h1)
    k.k_pq = F("k_pq", inputs.ss_pq, L1 + h1)
    k.k0 = F("k0", k.k_pq, L2 + h1)
    k.k1 = F("k1", k.k_c, L3 + k.k0)
    k.k2 = F("k2", inputs.k_q, L4 + k.k1)
    k.k3 = F("k3", inputs.sec_state, L5 + k.k2)
    k.CHTS = F("CHTS", k.k3, L7 + h1)
    k.SHTS = F("SHTS", k.k3, L8 + h1)
    k.dHS = F("dHS", k.k3, L6 + h0)
    k.tk_chs = F("tk_chs", k.CHTS, TK_LABEL + he, aead_key_len)
    k.tk_shs = F("tk_shs", k.SHTS, TK_LABEL + he, aead_key_len)
    k.fk_C = F("fk_C", k.CHTS, L9 + he)
    k.fk_S = F("fk_S", k.SHTS, L9 + he)
    return k


def derive_application_secrets(k, transcript, hash_name="SHA-384", trace=None):
    """Complete ``k`` in place with MS, CATS, SATS and the next SecState."""
    h4 = transcript.context("H4")
    F = _Deriver(hash_name, trace)
    k.MS = F("MS", k.dHS, MS_INPUT)
    k.CATS = F("CATS", k.MS, L10 + h4)
    k.SATS = F("SATS", k.MS, L11 + h4)
    k.sec_state_next = F("SecState", k.MS, L12 + h4)
    return k


def mac_key(psk, finished_key, hash_name="SHA-384"):
    return suite.prf(psk or b"", finished_key, hash_name)


def run_stage_schedule(inputs, transcript=None, hash_name="SHA-384", aead_key_len=32):
    """Both halves of the schedule; returns ``(keys, steps)``.

    ``transcript`` must hold m1..m5; defaults to ``inputs.transcript``.
    """
    steps = []
    k = derive_handshake_secrets(inputs, hash_name, aead_key_len, steps)
    derive_application_secrets(k, transcript or inputs.transcript, hash_name, steps)
    return k, steps

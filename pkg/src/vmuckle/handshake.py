"""Initiator and responder state machines.

One stage is eight messages::

    I -> R  m1  pk_c, pk_pq, n_I
    R -> I  m2  ct_c, ct_pq, n_R
    R -> I  m3..m5  {cert_R}, {sig_R}, {tau_R}   sealed under tk_shs
    I -> R  m6..m8  {cert_I}, {sig_I}, {tau_I}   sealed under tk_chs

Authentication methods are configured explicitly and every configured
method must verify.  In PSK-only mode m3/m4 (m6/m7) are still sent with
empty payloads so that contexts line up across modes.  The MAC tag is
always sent; without a PSK it is keyed from the zero key and only confirms
the key.

A session is driven either through the named steps (``initiator_start``,
``responder_handle_m1`` ...) or through :meth:`Session.handle`, which takes
one incoming wire message and returns the messages to send back.
"""
from __future__ import annotations

import enum
import logging
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

from . import pki, schedule, suite, wire
from .errors import HandshakeRejected, MalformedMessage, VMuckleError, WrongLength
from .schedule import L13, L14, StageInputs

log = logging.getLogger(__name__)

PSK = "PSK"
DSS = "DSS"


class Role(enum.Enum):
    INIT = "init"
    RESP = "resp"


class Status(enum.Enum):
    UNSET = "⊥"
    ACTIVE = "active"
    ACCEPT = "accept"
    REJECT = "reject"


@dataclass
class AuthConfig:
    """Long-term authentication material of one party.

    ``cert_chain`` is what the party sends (leaf, intermediate) and
    ``sign_key`` the post-quantum secret key matching the leaf.  The peer is
    expected to use the same methods.
    """

    psk: bytes = None
    psk_id: str = None
    cert_chain: list = None
    sign_key: bytes = field(default=None, repr=False)
    trust_anchor: pki.HybridCertificate = None
    peer_name: str = None

    def __post_init__(self):
        if bool(self.sign_key) != bool(self.cert_chain):
            raise ValueError("a signing key needs a certificate chain and vice versa")
        if not self.methods:
            raise ValueError("at least one of PSK or certificate authentication is required")
        if DSS in self.methods and self.trust_anchor is None:
            raise ValueError("certificate authentication needs a trust anchor")

    @property
    def methods(self):
        m = set()
        if self.psk:
            m.add(PSK)
        if self.sign_key:
            m.add(DSS)
        return frozenset(m)


@dataclass(frozen=True)
class HandshakeOutput:
    ms: bytes
    cats: bytes
    sats: bytes
    sec_state: bytes
    stage: int
    peer_auth: frozenset

    def msk_hex(self):
        return self.ms.hex()


class Session:
    """One party's protocol instance across any number of stages."""

    def __init__(self, role, suite_, auth, qkd, pid=None, rng=None,
                 qkd_base=0, clock=time.time):
        self.role = Role(role)
        self.suite = suite_
        self.auth = auth
        self.qkd = qkd
        self.pid = pid
        self.rng = rng or suite.default_rng()
        self.qkd_base = qkd_base
        self.clock = clock

        self.stid = 1
        self.status = Status.UNSET
        self.stage_status = {}
        self.sent = {}
        self.received = {}
        self.stage_keys = {}
        self.outputs = {}
        self.sec_state = b""
        self.sec_state_in = {}
        self.ephemeral = {}
        self.reject_reason = None

        self._tr = None
        self._keys = None
        self._eph = None
        self._pending = []
        self._expect = None

    # ------------------------------------------------------------------ state

    @property
    def hash_name(self):
        return self.suite.hash_name

    def _begin_stage(self):
        if self.status == Status.REJECT:
            raise HandshakeRejected("UnexpectedMessage", "session has rejected")
        if self.status == Status.ACTIVE:
            raise HandshakeRejected("UnexpectedMessage", "stage already in progress")
        if self.status == Status.ACCEPT:
            self.stid += 1
        self.status = Status.ACTIVE
        self.stage_status[self.stid] = Status.ACTIVE
        self.sent[self.stid] = []
        self.received[self.stid] = []
        self.sec_state_in[self.stid] = self.sec_state
        self.ephemeral[self.stid] = {}
        self._tr = wire.Transcript(self.hash_name)
        self._keys = None
        self._eph = {}
        self._pending = []

    def _reject(self, reason, detail=""):
        self.status = Status.REJECT
        self.stage_status[self.stid] = Status.REJECT
        self.reject_reason = reason
        log.debug("%s stage %d rejected: %s %s", self.role.value, self.stid, reason, detail)
        raise HandshakeRejected(reason, detail)

    def _require_active(self):
        if self.status != Status.ACTIVE:
            raise HandshakeRejected("UnexpectedMessage", f"session is {self.status.value}")

    def _accept(self, peer_auth):
        if not peer_auth:
            self._reject("ModeMismatch", "no authentication method verified")
        k = self._keys
        self.stage_keys[self.stid] = k
        self.outputs[self.stid] = HandshakeOutput(
            k.MS, k.CATS, k.SATS, k.sec_state_next, self.stid, frozenset(peer_auth))
        self.sec_state = k.sec_state_next
        self.status = Status.ACCEPT
        self.stage_status[self.stid] = Status.ACCEPT
        self._expect = None

    def output(self, stage=None):
        return self.outputs[stage or self.stid]

    def _send(self, raw):
        self.sent[self.stid].append(raw)
        return raw

    def _recv(self, raw):
        self.received[self.stid].append(raw)

    def _decode(self, raw, index):
        try:
            msg = wire.decode(raw)
        except MalformedMessage as exc:
            self._reject("MalformedMessage", exc.reason)
        if msg.index != index:
            self._reject("UnexpectedMessage", f"expected m{index}, got m{msg.index}")
        return msg

    def _open(self, key, index, raw):
        self._recv(raw)
        try:
            plain = wire.open_message(key, index, raw)
        except VMuckleError as exc:
            self._reject("AeadAuthFailure", f"m{index}: {exc}")
        msg = self._decode(plain, index)
        self._tr.append(plain)
        return msg

    def _seal(self, key, msg):
        plain = wire.encode(msg)
        self._tr.append(plain)
        return self._send(wire.seal_message(key, msg.index, plain))

    # ------------------------------------------------------- ephemeral phase

    def initiator_start(self):
        if self.role != Role.INIT:
            raise HandshakeRejected("UnexpectedMessage", "responder cannot start a stage")
        self._begin_stage()
        s = self.suite
        n_i = self.rng.randbytes(s.security_param // 8)
        kp_c = suite.kem_keygen(s.kem_c, s.security_param, self.rng)
        kp_pq = suite.kem_keygen(s.kem_pq, s.security_param, self.rng)
        self._eph = {"sk_c": kp_c.secret_key, "sk_pq": kp_pq.secret_key,
                     "pk_c": kp_c.public_key}
        self.ephemeral[self.stid].update(c=kp_c.secret_key, q=kp_pq.secret_key)
        raw = wire.encode(wire.HandshakeMessage.make(
            1, pk_c=kp_c.public_key, pk_pq=kp_pq.public_key, n_i=n_i))
        self._tr.append(raw)
        self._expect = 2
        return self._send(raw)

    def responder_handle_m1(self, raw):
        if self.role != Role.RESP:
            raise HandshakeRejected("UnexpectedMessage", "initiator cannot receive m1")
        self._begin_stage()
        self._recv(raw)
        m1 = self._decode(raw, 1)
        s = self.suite
        if (s.kem_c.name == suite.NONE) != (not m1["pk_c"]):
            self._reject("MalformedMessage", "classical public key presence does not match suite")
        try:
            ct_c, ss_c = suite.kem_encaps(s.kem_c, m1["pk_c"], self.rng)
            ct_pq, ss_pq = suite.kem_encaps(s.kem_pq, m1["pk_pq"], self.rng)
        except VMuckleError as exc:
            self._reject("MalformedMessage", str(exc))
        n_r = self.rng.randbytes(s.security_param // 8)
        self.ephemeral[self.stid].update(c=ss_c, q=ss_pq)
        raw2 = wire.encode(wire.HandshakeMessage.make(2, ct_c=ct_c, ct_pq=ct_pq, n_r=n_r))
        self._tr.append(raw)
        self._tr.append(raw2)
        self._send(raw2)
        self.fetch_qkd_and_schedule(ss_c, ss_pq)
        return raw2

    def initiator_handle_m2(self, raw):
        self._require_active()
        self._recv(raw)
        m2 = self._decode(raw, 2)
        s = self.suite
        if bool(m2["ct_c"]) != bool(self._eph["pk_c"]):
            self._reject("MalformedMessage", "classical ciphertext presence does not match m1")
        try:
            ss_pq = suite.kem_decaps(s.kem_pq, self._eph["sk_pq"], m2["ct_pq"])
            ss_c = suite.kem_decaps(s.kem_c, self._eph["sk_c"], m2["ct_c"])
        except VMuckleError as exc:
            self._reject("DecapsFailure", str(exc))
        self._tr.append(raw)
        self.fetch_qkd_and_schedule(ss_c, ss_pq)
        self._expect = 3

    def qkd_index(self, stage=None):
        return self.qkd_base + (stage or self.stid)

    def fetch_qkd_and_schedule(self, ss_c, ss_pq):
        lam = self.suite.security_param
        try:
            k_q = self.qkd.get_key(self.qkd_index(), lam)
        except VMuckleError as exc:
            self._reject("QkdUnavailable", str(exc))
        self.ephemeral[self.stid]["s"] = k_q
        inputs = StageInputs(ss_c, ss_pq, k_q, self.sec_state, self._tr, lam)
        try:
            self._keys = schedule.derive_handshake_secrets(
                inputs, self.hash_name, self.suite.aead_key_len)
        except WrongLength as exc:
            self._reject("QkdUnavailable", str(exc))
        return self._keys

    # ---------------------------------------------------------- authentication

    def _auth_messages(self, first, key, label, sig_ctx, mac_ctx, finished_key):
        a = self.auth
        s = self.suite
        use_dss = DSS in a.methods
        chain = pki.encode_chain(a.cert_chain) if use_dss else b""
        out = [self._seal(key, wire.HandshakeMessage.make(first, cert=chain))]
        sig = b""
        if use_dss:
            sig = suite.sign(s.dss, a.sign_key, label + self._tr.context(sig_ctx), self.rng)
        out.append(self._seal(key, wire.HandshakeMessage.make(first + 1, sig=sig)))
        tag = suite.mac_auth(schedule.mac_key(a.psk, finished_key, self.hash_name),
                             self._tr.context(mac_ctx), self.hash_name)
        out.append(self._seal(key, wire.HandshakeMessage.make(first + 2, tag=tag)))
        return tuple(out)

    def _verify_peer(self, first, key, raws, label, sig_ctx, mac_ctx, finished_key):
        if len(raws) != 3:
            self._reject("UnexpectedMessage", "authentication needs three messages")
        a = self.auth
        s = self.suite
        use_dss = DSS in a.methods
        verified = set()

        m_cert = self._open(key, first, raws[0])
        leaf = None
        if use_dss:
            try:
                chain = pki.decode_chain(m_cert["cert"])
            except MalformedMessage as exc:
                self._reject("CertInvalid", exc.reason)
            if not chain:
                self._reject("CertInvalid", "no certificate sent")
            result = pki.verify_chain(chain, a.trust_anchor, int(self.clock()))
            if not result:
                self._reject("CertInvalid", f"{result.reason} {result.detail}")
            leaf = chain[0]
            if leaf.pq_alg != s.dss.name:
                self._reject("CertInvalid", f"leaf key is {leaf.pq_alg}, suite uses {s.dss.name}")
            if a.peer_name is not None and leaf.subject != a.peer_name:
                self._reject("CertInvalid", f"expected {a.peer_name}, got {leaf.subject}")
        elif m_cert["cert"]:
            self._reject("ModeMismatch", "certificate sent but not expected")

        sig_input = label + self._tr.context(sig_ctx)
        m_sig = self._open(key, first + 1, raws[1])
        if use_dss:
            if not suite.verify(s.dss, leaf.pk_pq, sig_input, m_sig["sig"]):
                self._reject("SignatureInvalid", f"m{first + 1}")
            verified.add(DSS)
        elif m_sig["sig"]:
            self._reject("ModeMismatch", "signature sent but not expected")

        mac_input = self._tr.context(mac_ctx)
        m_tag = self._open(key, first + 2, raws[2])
        mk = schedule.mac_key(a.psk, finished_key, self.hash_name)
        if not suite.mac_verify(mk, mac_input, m_tag["tag"], self.hash_name):
            self._reject("MacInvalid", f"m{first + 2}")
        if PSK in a.methods:
            verified.add(PSK)
        return verified

    def responder_auth_messages(self):
        self._require_active()
        k = self._keys
        msgs = self._auth_messages(3, k.tk_shs, L13, "H2", "H3", k.fk_S)
        schedule.derive_application_secrets(k, self._tr, self.hash_name)
        self._expect = 6
        return msgs

    def initiator_verify_responder(self, m3, m4, m5):
        self._require_active()
        k = self._keys
        self._peer_auth = self._verify_peer(3, k.tk_shs, (m3, m4, m5), L13, "H2", "H3", k.fk_S)
        schedule.derive_application_secrets(k, self._tr, self.hash_name)
        return True

    def initiator_auth_messages(self):
        self._require_active()
        k = self._keys
        msgs = self._auth_messages(6, k.tk_chs, L14, "H5", "H6", k.fk_C)
        self._accept(self._peer_auth)
        return msgs

    def responder_verify_initiator(self, m6, m7, m8):
        self._require_active()
        k = self._keys
        verified = self._verify_peer(6, k.tk_chs, (m6, m7, m8), L14, "H5", "H6", k.fk_C)
        self._accept(verified)
        return True

    # -------------------------------------------------------------- driving

    def handle(self, raw=None):
        """Feed one wire message (``None`` starts a stage at the initiator).

        Returns the list of wire messages to send in response.
        """
        if self.role == Role.INIT:
            if raw is None:
                return [self.initiator_start()]
            self._require_active()
            if self._expect == 2:
                self.initiator_handle_m2(raw)
                return []
            if self._expect == 3:
                self._pending.append(raw)
                if len(self._pending) < 3:
                    return []
                pending, self._pending = self._pending, []
                self.initiator_verify_responder(*pending)
                return list(self.initiator_auth_messages())
            raise HandshakeRejected("UnexpectedMessage", "initiator not expecting input")
        if raw is None:
            raise HandshakeRejected("UnexpectedMessage", "responder cannot start a stage")
        if self.status != Status.ACTIVE:
            return [self.responder_handle_m1(raw), *self.responder_auth_messages()]
        if self._expect == 6:
            self._pending.append(raw)
            if len(self._pending) < 3:
                return []
            pending, self._pending = self._pending, []
            self.responder_verify_initiator(*pending)
            return []
        raise HandshakeRejected("UnexpectedMessage", "responder not expecting input")


# ---------------------------------------------------------------- transports

FRAME = 4


class MemoryLink:
    """In-process link that counts framed bytes and can tamper in transit."""

    def __init__(self, tamper=None):
        self.tamper = tamper
        self.bytes_i2r = 0
        self.bytes_r2i = 0
        self.log = []

    def carry(self, index, data, to_responder):
        if self.tamper is not None:
            data = self.tamper(index, data)
        if to_responder:
            self.bytes_i2r += FRAME + len(data)
        else:
            self.bytes_r2i += FRAME + len(data)
        self.log.append((index, data))
        return data

    @property
    def bytes_total(self):
        return self.bytes_i2r + self.bytes_r2i


def run_stage(initiator, responder, link=None):
    """Run one full stage between two in-process sessions."""
    link = link or MemoryLink()
    m1 = link.carry(1, initiator.initiator_start(), True)
    m2 = link.carry(2, responder.responder_handle_m1(m1), False)
    initiator.initiator_handle_m2(m2)
    r_msgs = [link.carry(i, m, False) for i, m in zip((3, 4, 5), responder.responder_auth_messages())]
    initiator.initiator_verify_responder(*r_msgs)
    i_msgs = [link.carry(i, m, True) for i, m in zip((6, 7, 8), initiator.initiator_auth_messages())]
    responder.responder_verify_initiator(*i_msgs)
    return initiator.output(), responder.output()


class FramedChannel:
    """Socket wrapper sending each message with a 4-byte length prefix."""

    def __init__(self, sock):
        self.sock = sock
        self.bytes_sent = 0
        self.bytes_received = 0

    def send(self, data):
        self.sock.sendall(struct.pack(">I", len(data)) + data)
        self.bytes_sent += FRAME + len(data)

    def _exact(self, n):
        buf = bytearray()
        while len(buf) < n:
            chunk = self.sock.recv(n - len(buf))
            if not chunk:
                raise ConnectionError("peer closed the connection")
            buf += chunk
        return bytes(buf)

    def recv(self):
        (n,) = struct.unpack(">I", self._exact(FRAME))
        data = self._exact(n)
        self.bytes_received += FRAME + n
        return data

    def close(self):
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def drive(session, channel):
    """Run one stage of ``session`` over ``channel`` until it accepts."""
    first = None if session.role == Role.INIT else channel.recv()
    for out in session.handle(first):
        channel.send(out)
    while session.status == Status.ACTIVE:
        for out in session.handle(channel.recv()):
            channel.send(out)
    return session.output()


class SessionStore:
    """Thread-safe registry of live sessions keyed by an integer id."""

    def __init__(self):
        self._lock = threading.Lock()
        self._sessions = {}
        self._next = 1

    def add(self, session):
        with self._lock:
            sid = self._next
            self._next += 1
            self._sessions[sid] = session
            return sid

    def get(self, sid):
        with self._lock:
            return self._sessions[sid]

    def remove(self, sid):
        with self._lock:
            return self._sessions.pop(sid, None)

    def __len__(self):
        with self._lock:
            return len(self._sessions)

import random

import pytest

from vmuckle import qkd, suite, testbed, wire
from vmuckle.errors import HandshakeRejected
from vmuckle.handshake import DSS, PSK, MemoryLink, Session, Status, run_stage
from vmuckle.suite import CipherSuite

TS = suite.TEST_SUITE


def pair(mode="both", h=None, seed=1, s=TS, **kw):
    return testbed.make_pair(s, mode, hierarchy=h, seed=seed, **kw)


def assert_equal_outputs(a, b):
    assert (a.ms, a.cats, a.sats, a.sec_state) == (b.ms, b.cats, b.sats, b.sec_state)


@pytest.mark.parametrize("mode,methods", [("psk", {PSK}), ("cert", {DSS}), ("both", {PSK, DSS})])
def test_modes(mode, methods, test_hierarchy):
    i, r = pair(mode, test_hierarchy)
    a, b = run_stage(i, r)
    assert_equal_outputs(a, b)
    assert a.peer_auth == b.peer_auth == methods
    assert i.status == r.status == Status.ACCEPT


def test_kem_c_none_empty_fields(test_hierarchy):
    s = CipherSuite.from_names(kem_c="none", kem_pq="TestKEM-32", dss="TestDSS", security_param=128)
    i, r = pair("both", test_hierarchy, s=s)
    link = MemoryLink()
    a, b = run_stage(i, r, link)
    assert_equal_outputs(a, b)
    m1 = wire.decode(link.log[0][1])
    m2 = wire.decode(link.log[1][1])
    assert m1["pk_c"] == b"" and m2["ct_c"] == b""


def test_seeded_m1_reproducible_and_nonces_fresh(test_hierarchy):
    m1a = pair("psk", seed=5)[0].initiator_start()
    m1b = pair("psk", seed=5)[0].initiator_start()
    assert m1a == m1b
    i, r = pair("psk", seed=6)
    run_stage(i, r)
    first = wire.decode(i.sent[1][0])["n_i"]
    run_stage(i, r)
    assert wire.decode(i.sent[2][0])["n_i"] != first


def test_psk_only_payloads_empty():
    i, r = pair("psk")
    i.handle(None)
    out = r.handle(i.sent[1][0])
    k = r._keys
    m3 = wire.decode(wire.open_message(k.tk_shs, 3, out[1]))
    m4 = wire.decode(wire.open_message(k.tk_shs, 4, out[2]))
    m5 = wire.decode(wire.open_message(k.tk_shs, 5, out[3]))
    assert m3["cert"] == b"" and m4["sig"] == b"" and len(m5["tag"]) == 48


def test_malformed_m1_rejected():
    _, r = pair("psk")
    with pytest.raises(HandshakeRejected) as e:
        r.handle(b"\x01\x00")
    assert e.value.reason == "MalformedMessage"
    assert r.status == Status.REJECT


def test_mismatched_psk():
    i, _ = pair("psk", psk=b"a" * 32)
    _, r = pair("psk", psk=b"b" * 32)
    with pytest.raises(HandshakeRejected) as e:
        run_stage(i, r)
    assert e.value.reason == "MacInvalid"


def test_mismatched_qkd_handles():
    i, r = pair("psk")
    r.qkd_base = 7
    with pytest.raises(HandshakeRejected) as e:
        run_stage(i, r)
    assert e.value.reason == "AeadAuthFailure"


def test_qkd_unavailable_rejects(tmp_path):
    i, r = pair("psk")
    f = tmp_path / "empty.hex"
    f.write_text("")
    r.qkd = qkd.FileProvider(str(f))
    with pytest.raises(HandshakeRejected) as e:
        run_stage(i, r)
    assert e.value.reason == "QkdUnavailable"


def test_wrong_length_qkd_key_rejects(tmp_path):
    i, r = pair("psk")
    f = tmp_path / "k.hex"
    f.write_text("aa" * 32 + "\n" + "bb" * 8 + "\n")
    r.qkd = qkd.FileProvider(str(f))
    with pytest.raises(HandshakeRejected):
        run_stage(i, r)


def test_signature_flip_rejected(test_hierarchy):
    i, r = pair("cert", test_hierarchy)
    i.handle(None)
    out = r.handle(i.sent[1][0])
    k = r._keys
    m4 = wire.decode(wire.open_message(k.tk_shs, 4, out[2]))
    sig = bytearray(m4["sig"])
    sig[0] ^= 1
    forged = wire.seal_message(k.tk_shs, 4, wire.encode(wire.HandshakeMessage.make(4, sig=bytes(sig))))
    i.handle(out[0])
    i.handle(out[1])
    with pytest.raises(HandshakeRejected) as e:
        i.handle(forged)
        i.handle(out[3])
    assert e.value.reason == "SignatureInvalid"


def test_unknown_ca_rejected(test_hierarchy):
    other = testbed.make_hierarchy("TestDSS", ca_pq_alg="TestDSS", rng=random.Random(3))
    i, _ = pair("cert", other)
    _, r = pair("cert", test_hierarchy)
    with pytest.raises(HandshakeRejected) as e:
        run_stage(i, r)
    assert e.value.reason == "CertInvalid"
    # the responder's chain is rejected by the initiator first; swap roles too
    i, _ = pair("cert", test_hierarchy)
    _, r = pair("cert", other)
    r.auth.trust_anchor = test_hierarchy.root
    r.auth.cert_chain = other.chain("responder")
    with pytest.raises(HandshakeRejected) as e:
        run_stage(i, r)
    assert e.value.reason == "CertInvalid"


def test_unknown_ca_for_initiator_rejected_by_responder(test_hierarchy):
    other = testbed.make_hierarchy("TestDSS", ca_pq_alg="TestDSS", rng=random.Random(4))
    i, r = pair("cert", test_hierarchy)
    _, keys = other.leaves["initiator"]
    i.auth.cert_chain = other.chain("initiator")
    i.auth.sign_key = keys.pq_sk
    with pytest.raises(HandshakeRejected) as e:
        run_stage(i, r)
    assert e.value.reason == "CertInvalid"
    assert r.status == Status.REJECT and i.status == Status.ACCEPT


def test_mode_mismatch(test_hierarchy):
    i, _ = pair("psk", psk=b"p" * 32)
    _, r = pair("both", test_hierarchy, psk=b"p" * 32)
    with pytest.raises(HandshakeRejected) as e:
        run_stage(i, r)
    assert e.value.reason == "ModeMismatch"


def test_replayed_m7_rejected(test_hierarchy):
    i, r = pair("both", test_hierarchy)
    run_stage(i, r)
    old_m7 = i.sent[1][2]
    link = MemoryLink(tamper=lambda idx, data: old_m7 if idx == 7 else data)
    with pytest.raises(HandshakeRejected):
        run_stage(i, r, link)
    assert r.status == Status.REJECT


def test_chaining_three_stages(test_hierarchy):
    i, r = pair("both", test_hierarchy)
    outs = [run_stage(i, r) for _ in range(3)]
    for a, b in outs:
        assert_equal_outputs(a, b)
    assert len({a.ms for a, _ in outs}) == 3
    assert i.sec_state == outs[-1][0].sec_state
    assert i.sec_state_in[2] == outs[0][0].sec_state


def test_sec_state_tamper_rejects_next_stage():
    i, r = pair("psk")
    run_stage(i, r)
    r.sec_state = bytes(48)
    with pytest.raises(HandshakeRejected):
        run_stage(i, r)


def test_reject_is_terminal():
    i, r = pair("psk")
    with pytest.raises(HandshakeRejected):
        r.handle(b"junk")
    with pytest.raises(HandshakeRejected):
        r.handle(b"junk")
    assert r.status == Status.REJECT


def test_real_suite_both_mode():
    s = CipherSuite.from_names(kem_pq="ML-KEM-768", kem_c="X25519", dss="ML-DSA-44")
    i, r = pair("both", s=s)
    link = MemoryLink()
    a, b = run_stage(i, r, link)
    assert_equal_outputs(a, b)
    assert link.bytes_total == link.bytes_i2r + link.bytes_r2i


def test_same_seed_same_bytes():
    s = CipherSuite.from_names(kem_pq="ML-KEM-512", dss="Falcon-512")
    totals = []
    for _ in range(2):
        i, r = pair("cert", s=s, seed=42)
        link = MemoryLink()
        run_stage(i, r, link)
        totals.append(link.bytes_total)
    assert totals[0] == totals[1]


def test_monotone_in_kem_size(test_hierarchy):
    kems = ["ML-KEM-512", "ML-KEM-768", "ML-KEM-1024"]
    totals = []
    for k in kems:
        s = CipherSuite.from_names(kem_pq=k, kem_c="ECDH-P521", dss="TestDSS")
        link = MemoryLink()
        run_stage(*pair("both", test_hierarchy, s=s), link)
        totals.append(link.bytes_total)
    assert totals == sorted(totals)


def test_session_rejects_without_auth():
    with pytest.raises(ValueError):
        Session("init", TS, testbed.auth_for("psk", "a", "b", b""), qkd.simulator_new(bytes(16)))

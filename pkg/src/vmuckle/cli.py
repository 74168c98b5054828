"""Command-line entry point ``vmuckle``."""
from __future__ import annotations

import argparse
import logging
import os
import random
import socket
import sys
import threading
import time

from . import bench, hakelab, mka, pki, qkd, schedule, testbed, wire
from .errors import HandshakeRejected, VMuckleError
from .handshake import AuthConfig, FramedChannel, MemoryLink, Session, drive, run_stage
from .suite import CipherSuite

DEFAULT_QKD = "sim:" + b"vmuckle-qkd-simulator-seed".hex() + ":link"
TABLE_KEMS = ["ML-KEM-512", "ML-KEM-768", "ML-KEM-1024"]
TABLE_SIGS = ["ML-DSA-44", "ML-DSA-65", "ML-DSA-87", "Falcon-512", "Falcon-1024"]


def env_seed():
    raw = os.environ.get("VMUCKLE_SEED")
    return int(raw, 0) if raw else None


def _rng(seed):
    return random.Random(seed) if seed is not None else None


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def _write(path, data):
    with open(path, "wb") as fh:
        fh.write(data)


def read_psk(path):
    """PSK files hold hex text; anything that is not hex is used raw."""
    data = _read(path)
    try:
        return bytes.fromhex(data.decode().strip())
    except (UnicodeDecodeError, ValueError):
        return data


def _suite(args):
    return CipherSuite.from_names(kem_c=args.kem_c, kem_pq=args.kem_pq, dss=args.sig)


def _host_port(text):
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def _add_suite_flags(p):
    p.add_argument("--kem-pq", default="ML-KEM-1024")
    p.add_argument("--kem-c", default="ECDH-P521", help="classical KEM or 'none'")
    p.add_argument("--sig", default="ML-DSA-87")
    p.add_argument("--auth", choices=testbed.MODES, default="both")


# ---------------------------------------------------------------- handshake


def _file_auth(args, mode):
    psk = read_psk(args.psk_file) if args.psk_file else None
    kwargs = {"psk": psk} if mode in ("psk", "both") else {}
    if mode in ("cert", "both"):
        if not (args.cert_chain and args.key and args.trust_anchor):
            raise SystemExit("cert auth over TCP needs --cert-chain, --key and --trust-anchor")
        keys = pki.SigningKeys.from_bytes(_read(args.key))
        kwargs.update(cert_chain=pki.decode_chain(_read(args.cert_chain)), sign_key=keys.pq_sk,
                      trust_anchor=pki.HybridCertificate.from_bytes(_read(args.trust_anchor)),
                      peer_name=args.peer_name)
    return AuthConfig(**kwargs)


def _print_output(role, out):
    print(f"{role} stage {out.stage}: accept auth={','.join(sorted(out.peer_auth))}")
    print(f"  MSK {out.msk_hex()}")


def _loopback(args, s, seed):
    psk = read_psk(args.psk_file) if args.psk_file else None
    init, resp = testbed.make_pair(s, args.auth, psk=psk, seed=seed)
    init.qkd = qkd.parse_source(args.qkd_source)
    resp.qkd = qkd.parse_source(args.qkd_source)
    print(f"# {s.describe()} auth={args.auth}; {bench.HEADER_NOTE}")
    for _ in range(args.stages):
        link = MemoryLink()
        t0 = time.perf_counter()
        out_i, out_r = run_stage(init, resp, link)
        elapsed = time.perf_counter() - t0
        _print_output("init", out_i)
        if out_i.ms != out_r.ms:
            print("error: initiator and responder disagree on MS", file=sys.stderr)
            return 1
        if args.bench:
            print(f"  bytes init->resp {link.bytes_i2r}  resp->init {link.bytes_r2i}  "
                  f"total {link.bytes_total}  time {elapsed * 1000:.2f} ms")
    return 0


def _connect(addr, timeout):
    """Retry until the listener is up or ``timeout`` seconds pass."""
    deadline = time.monotonic() + timeout
    while True:
        try:
            return socket.create_connection(addr)
        except ConnectionRefusedError:
            if time.monotonic() > deadline:
                raise
            time.sleep(0.05)


def _network(args, s, seed):
    role = args.role
    sess = Session(role, s, _file_auth(args, args.auth), qkd.parse_source(args.qkd_source),
                   pid=args.peer_name, rng=_rng(seed))
    if args.listen:
        srv = socket.create_server(_host_port(args.listen))
        sock, _ = srv.accept()
        srv.close()
    else:
        sock = _connect(_host_port(args.connect), args.connect_timeout)
    chan = FramedChannel(sock)
    try:
        for _ in range(args.stages):
            t0 = time.perf_counter()
            out = drive(sess, chan)
            _print_output(role, out)
            if args.bench:
                print(f"  bytes sent {chan.bytes_sent} received {chan.bytes_received} "
                      f"time {(time.perf_counter() - t0) * 1000:.2f} ms")
    finally:
        chan.close()
    return 0


def cmd_handshake(args):
    s = _suite(args)
    seed = env_seed()
    try:
        if args.listen or args.connect:
            if args.role == "loopback":
                raise SystemExit("--listen/--connect need --role init or resp")
            return _network(args, s, seed)
        return _loopback(args, s, seed)
    except HandshakeRejected as exc:
        print(f"reject: {exc.reason} {exc.detail}", file=sys.stderr)
        return 2


# -------------------------------------------------------------------- bench


def cmd_bench(args):
    records = bench.bench_matrix(args.kems.split(","), args.sigs.split(","),
                                 args.auth.split(","), args.repetitions, args.kem_c,
                                 env_seed(), args.parallel)
    print(bench.to_markdown(records))
    if args.csv:
        bench.to_csv(records, args.csv)
    return 1 if any(r.error for r in records) else 0


# --------------------------------------------------------------- demo-macsec


def _macsec_side(name, sess, chan, ckn, member_id, priority, sci, rng, result):
    try:
        out = drive(sess, chan)
        node = mka.MkaNode(name, member_id, priority, sci)
        node.install_msk(out.ms, ckn)
        chan.send(member_id + bytes([priority]))
        peer = chan.recv()
        winner = mka.elect_key_server([(member_id, priority), (peer[:12], peer[12])])
        if winner == member_id:
            rec = mka.generate_sak(node.hierarchy, sci, 1, rng)
            node.sak = rec
            chan.send(mka.wrap_sak(node.hierarchy, rec, member_id, priority, rng).to_bytes())
        else:
            node.sak = mka.unwrap_sak(node.hierarchy, chan.recv())
        result[name] = (node, winner)
    except Exception as exc:  # reported by the main thread
        result[name] = exc
        chan.close()


def _fingerprints(node):
    fp = node.hierarchy.fingerprints()
    fp["sak"] = node.sak.sak.hex()[:8]
    return fp


def cmd_demo_macsec(args):
    s = _suite(args)
    seed = env_seed()
    rng = random.Random(seed)
    psk_i = read_psk(args.psk_file) if args.psk_file else rng.randbytes(32)
    psk_r = read_psk(args.peer_psk_file) if args.peer_psk_file else psk_i
    h = None
    if args.auth in ("cert", "both"):
        h = testbed.make_hierarchy(s.dss.name, rng=rng)
    src = qkd.parse_source(args.qkd_source)
    init = Session("init", s, testbed.auth_for(args.auth, "initiator", "responder", psk_i, h),
                   src, pid="responder", rng=random.Random(rng.random()))
    resp = Session("resp", s, testbed.auth_for(args.auth, "responder", "initiator", psk_r, h),
                   qkd.parse_source(args.qkd_source), pid="initiator",
                   rng=random.Random(rng.random()))
    a, b = socket.socketpair()
    result = {}
    ckn = args.ckn.encode()
    sides = [
        ("initiator", init, FramedChannel(a), ckn, bytes.fromhex("11" * 12), 16,
         bytes.fromhex("0000000000000001"), random.Random(rng.random()), result),
        ("responder", resp, FramedChannel(b), ckn, bytes.fromhex("22" * 12), 32,
         bytes.fromhex("0000000000000002"), random.Random(rng.random()), result),
    ]
    threads = [threading.Thread(target=_macsec_side, args=side) for side in sides]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=60)
    for name in ("initiator", "responder"):
        val = result.get(name)
        if isinstance(val, HandshakeRejected):
            print(f"{name}: reject {val.reason} {val.detail}", file=sys.stderr)
            return 2
    for name in ("initiator", "responder"):
        val = result.get(name)
        if not isinstance(val, tuple):
            print(f"{name}: failed {val!r}", file=sys.stderr)
            return 2
    prints = {}
    for name in ("initiator", "responder"):
        node, winner = result[name]
        prints[name] = _fingerprints(node)
        fields = " ".join(f"{k}={v}" for k, v in prints[name].items())
        print(f"{name}: key_server={winner.hex()} {fields}")
    if prints["initiator"] != prints["responder"]:
        print("error: fingerprints differ", file=sys.stderr)
        return 3
    print("fingerprints match")
    return 0


# --------------------------------------------------------------------- pki


def cmd_pki(args):
    rng = _rng(env_seed())
    if args.pki_cmd == "gen-root":
        keys = pki.generate_keys(args.name, args.alg, args.classical_alg, rng)
        cert = pki.issue(keys, keys, args.validity, rng)
    elif args.pki_cmd in ("gen-intermediate", "gen-leaf"):
        ca_keys = pki.SigningKeys.from_bytes(_read(args.ca_key))
        keys = pki.generate_keys(args.name, args.alg, args.classical_alg, rng)
        cert = pki.issue(ca_keys, keys, args.validity, rng)
        if args.chain_out:
            parent = pki.HybridCertificate.from_bytes(_read(args.ca_cert))
            _write(args.chain_out, pki.encode_chain([cert, parent]))
    elif args.pki_cmd == "show":
        data = _read(args.file)
        if data[:4] == pki.KEY_MAGIC:
            k = pki.SigningKeys.from_bytes(data)
            print(f"key {k.name}: {k.pq_alg} + {k.classical_alg}")
            return 0
        certs = (pki.decode_chain(data) if data[:4] != pki.CERT_MAGIC
                 else [pki.HybridCertificate.from_bytes(data)])
        for c in certs:
            print(f"subject={c.subject} issuer={c.issuer} algs={c.pq_alg}+{c.classical_alg} "
                  f"valid={c.not_before}..{c.not_after} size={len(c.to_bytes())}")
        return 0
    else:
        chain = pki.decode_chain(_read(args.chain))
        anchor = pki.HybridCertificate.from_bytes(_read(args.anchor))
        res = pki.verify_chain(chain, anchor)
        print("ok" if res else f"invalid: {res.reason} {res.detail}")
        return 0 if res else 1
    _write(args.out_cert, cert.to_bytes())
    _write(args.out_key, keys.to_bytes())
    print(f"wrote {args.out_cert} ({len(cert.to_bytes())} bytes) and {args.out_key}")
    return 0


# -------------------------------------------------------------- schedule-kat


def kat_inputs(seed):
    """Inputs for the KAT dump: all-zero for seed None, random otherwise."""
    if seed is None:
        ss_c, ss_pq, k_q, sec, msgs = bytes(66), bytes(32), bytes(32), b"", [b""] * 5
    else:
        r = random.Random(seed)
        ss_c, ss_pq, k_q, sec = r.randbytes(66), r.randbytes(32), r.randbytes(32), r.randbytes(48)
        msgs = [r.randbytes(r.randint(1, 200)) for _ in range(5)]
    tr = wire.Transcript("SHA-384")
    for m in msgs:
        tr.append(m)
    return schedule.StageInputs(ss_c, ss_pq, k_q, sec, tr)


def cmd_schedule_kat(args):
    inputs = kat_inputs(args.seed if args.seed is not None else env_seed())
    _, steps = schedule.run_stage_schedule(inputs)
    text = "\n".join(step.kat_line() for step in steps) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# ------------------------------------------------------------ hakelab-replay


def cmd_hakelab_replay(args):
    with open(args.trace) as fh:
        actions = hakelab.parse_trace(fh.read())
    seed = args.seed if args.seed is not None else env_seed()
    result = hakelab.replay(actions, n_parties=args.parties, n_sessions=args.sessions,
                            n_stages=args.stages, mode=args.auth, seed=seed)
    print(f"# {len(result.experiment.log)} queries, test bit b={result.experiment.b}")
    for v in hakelab.verdicts(result.experiment):
        print(v)
    for v in result.expectations:
        print("expect", v)
    return 0 if result.ok else 1


# ------------------------------------------------------------------ parser


def build_parser():
    p = argparse.ArgumentParser(prog="vmuckle", description="Hybrid PQ/QKD handshake toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    h = sub.add_parser("handshake", help="run handshake stages in-memory or over TCP")
    _add_suite_flags(h)
    h.add_argument("--role", choices=("loopback", "init", "resp"), default="loopback")
    h.add_argument("--psk-file")
    h.add_argument("--cert-chain")
    h.add_argument("--key")
    h.add_argument("--trust-anchor")
    h.add_argument("--peer-name")
    h.add_argument("--qkd-source", default=DEFAULT_QKD)
    h.add_argument("--stages", type=int, default=1)
    g = h.add_mutually_exclusive_group()
    g.add_argument("--listen", metavar="HOST:PORT")
    g.add_argument("--connect", metavar="HOST:PORT")
    h.add_argument("--connect-timeout", type=float, default=10.0)
    h.add_argument("--bench", action="store_true", help="print byte counts and timings")
    h.set_defaults(func=cmd_handshake)

    b = sub.add_parser("bench", help="byte/time table over KEM x signature x auth mode")
    b.add_argument("--kems", default=",".join(TABLE_KEMS))
    b.add_argument("--sigs", default=",".join(TABLE_SIGS))
    b.add_argument("--auth", default="psk,cert", help="comma list of auth modes")
    b.add_argument("--kem-c", default="ECDH-P521")
    b.add_argument("--repetitions", type=int, default=3)
    b.add_argument("--parallel", type=int, default=1)
    b.add_argument("--csv")
    b.set_defaults(func=cmd_bench)

    d = sub.add_parser("demo-macsec", help="handshake, then MKA key hierarchy and SAK transfer")
    _add_suite_flags(d)
    d.add_argument("--psk-file")
    d.add_argument("--peer-psk-file", help="responder PSK (defaults to --psk-file)")
    d.add_argument("--qkd-source", default=DEFAULT_QKD)
    d.add_argument("--ckn", default=mka.DEFAULT_CKN.decode())
    d.set_defaults(func=cmd_demo_macsec)

    k = sub.add_parser("pki", help="minimal hybrid certificate tool")
    ksub = k.add_subparsers(dest="pki_cmd", required=True)
    for name in ("gen-root", "gen-intermediate", "gen-leaf"):
        kp = ksub.add_parser(name)
        kp.add_argument("--name", required=True)
        kp.add_argument("--alg", default=pki.CA_PQ_ALG)
        kp.add_argument("--classical-alg", default=pki.CA_CLASSICAL_ALG)
        kp.add_argument("--validity", type=int, default=None, help="seconds")
        kp.add_argument("--out-cert", required=True)
        kp.add_argument("--out-key", required=True)
        if name != "gen-root":
            kp.add_argument("--ca-cert", required=True)
            kp.add_argument("--ca-key", required=True)
            kp.add_argument("--chain-out", help="write [new cert, CA cert] chain here")
    show = ksub.add_parser("show")
    show.add_argument("file")
    ver = ksub.add_parser("verify")
    ver.add_argument("--chain", required=True)
    ver.add_argument("--anchor", required=True)
    k.set_defaults(func=cmd_pki)

    s = sub.add_parser("schedule-kat", help="dump the 17 key-schedule steps")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_schedule_kat)

    r = sub.add_parser("hakelab-replay", help="replay an adversarial trace")
    r.add_argument("trace")
    r.add_argument("--parties", type=int, default=2)
    r.add_argument("--sessions", type=int, default=4)
    r.add_argument("--stages", type=int, default=4)
    r.add_argument("--auth", choices=testbed.MODES, default="both")
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_hakelab_replay)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except VMuckleError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

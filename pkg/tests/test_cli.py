import pathlib
import socket
import subprocess
import sys

import pytest

from vmuckle import bench, cli, pki

TRACES = pathlib.Path(__file__).parent / "fixtures" / "traces"
FAST = ["--kem-pq", "TestKEM-32", "--kem-c", "X25519", "--sig", "TestDSS"]


@pytest.fixture(autouse=True)
def seeded(monkeypatch):
    monkeypatch.setenv("VMUCKLE_SEED", "17")


def test_handshake_loopback(capsys):
    assert cli.main(["handshake", "--stages", "2", "--bench", "--sig", "ML-DSA-44"]) == 0
    out = capsys.readouterr().out
    assert out.count("accept auth=DSS,PSK") == 2
    assert "no TCP/IP overhead" in out


def test_handshake_kem_c_none(capsys):
    assert cli.main(["handshake", "--kem-c", "none", "--auth", "psk"]) == 0


def test_schedule_kat(tmp_path):
    out = tmp_path / "kat.txt"
    assert cli.main(["schedule-kat", "--seed", "5", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 17
    assert all(len(line.split(" ")) == 4 for line in lines)
    assert lines[0].startswith("k_c ")


def test_bench_csv(tmp_path, capsys):
    path = tmp_path / "b.csv"
    rc = cli.main(["bench", "--kems", "ML-KEM-512", "--sigs", "Falcon-512", "--repetitions", "1",
                   "--csv", str(path)])
    assert rc == 0
    text = path.read_text()
    assert text.startswith("kem_pq,kem_c,sig,auth")
    assert "PSK" in text and "Falcon-512" in text
    assert "| ML-KEM-512 |" in capsys.readouterr().out


def test_bench_records_failures():
    recs = bench.bench_matrix(["ML-KEM-512", "NoSuchKEM"], ["ML-DSA-44"], ("psk",))
    assert not recs[0].error and recs[1].error
    assert recs[0].bytes_total == recs[0].bytes_sent_initiator + recs[0].bytes_sent_responder


def test_bench_reproducible_bytes():
    a = bench.bench_one("ML-KEM-768", "Falcon-1024", "cert", seed=3)
    b = bench.bench_one("ML-KEM-768", "Falcon-1024", "cert", seed=3)
    assert a.bytes_total == b.bytes_total and not a.error


def test_demo_macsec(capsys):
    assert cli.main(["demo-macsec"] + FAST) == 0
    out = capsys.readouterr().out
    lines = [l for l in out.splitlines() if l.startswith(("initiator:", "responder:"))]
    assert len(lines) == 2
    assert lines[0].split(":", 1)[1] == lines[1].split(":", 1)[1]
    assert "fingerprints match" in out


def test_demo_macsec_kem_c_none():
    assert cli.main(["demo-macsec", "--kem-c", "none", "--kem-pq", "ML-KEM-512", "--sig", "TestDSS"]) == 0


def test_demo_macsec_mismatched_psk(tmp_path, capsys):
    a, b = tmp_path / "a.psk", tmp_path / "b.psk"
    a.write_text("00" * 32)
    b.write_text("11" * 32)
    rc = cli.main(["demo-macsec", "--auth", "psk", "--psk-file", str(a), "--peer-psk-file", str(b)] + FAST)
    assert rc != 0
    assert "MacInvalid" in capsys.readouterr().err


def test_pki_tool(tmp_path, capsys):
    d = tmp_path
    def run(*args):
        return cli.main(["pki", *args])
    assert run("gen-root", "--name", "R", "--out-cert", f"{d}/r.crt", "--out-key", f"{d}/r.key") == 0
    assert run("gen-intermediate", "--name", "I", "--ca-cert", f"{d}/r.crt", "--ca-key", f"{d}/r.key",
               "--out-cert", f"{d}/i.crt", "--out-key", f"{d}/i.key") == 0
    assert run("gen-leaf", "--name", "L", "--alg", "ML-DSA-44", "--ca-cert", f"{d}/i.crt",
               "--ca-key", f"{d}/i.key", "--out-cert", f"{d}/l.crt", "--out-key", f"{d}/l.key",
               "--chain-out", f"{d}/l.chain") == 0
    assert run("verify", "--chain", f"{d}/l.chain", "--anchor", f"{d}/r.crt") == 0
    assert run("verify", "--chain", f"{d}/l.chain", "--anchor", f"{d}/i.crt") == 1
    assert run("show", f"{d}/l.chain") == 0
    out = capsys.readouterr().out
    assert "subject=L issuer=I" in out
    assert pki.HybridCertificate.from_bytes((d / "l.crt").read_bytes()).pq_alg == "ML-DSA-44"


def test_hakelab_replay(capsys, tmp_path):
    assert cli.main(["hakelab-replay", str(TRACES / "07_pq_and_qkd_chain.trace")]) == 0
    assert "clean_vm(1, 1, 2) = true" in capsys.readouterr().out
    bad = tmp_path / "bad.trace"
    bad.write_text("(Create 1 2 init 1)\n(Create 2 1 resp 1)\n(Run 1 1 2 1)\n"
                   "(Expect clean_vm 1 1 1 false)\n")
    assert cli.main(["hakelab-replay", str(bad)]) == 1


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_tcp_two_processes(tmp_path):
    d = tmp_path
    psk = d / "p.psk"
    psk.write_text("ab" * 32)
    port = free_port()
    base = [sys.executable, "-m", "vmuckle.cli", "handshake", "--auth", "psk", "--psk-file", str(psk),
            "--stages", "2"] + FAST
    resp = subprocess.Popen(base + ["--role", "resp", "--listen", f"127.0.0.1:{port}"],
                            stdout=subprocess.PIPE, text=True)
    init = subprocess.run(base + ["--role", "init", "--connect", f"127.0.0.1:{port}"],
                          capture_output=True, text=True, timeout=60)
    r_out, _ = resp.communicate(timeout=60)
    assert init.returncode == 0 and resp.returncode == 0
    msk_i = [l.split()[1] for l in init.stdout.splitlines() if l.strip().startswith("MSK")]
    msk_r = [l.split()[1] for l in r_out.splitlines() if l.strip().startswith("MSK")]
    assert len(msk_i) == 2 and msk_i == msk_r

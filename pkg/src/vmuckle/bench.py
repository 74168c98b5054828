"""Byte and time measurements over KEM x signature x auth-mode grids.

Only application-layer bytes are counted: each handshake message plus its
4-byte length frame.  TCP/IP overhead is not included.
"""
from __future__ import annotations

import csv
import io
import random
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

from . import pki, testbed
from .handshake import MemoryLink, run_stage
from .suite import CipherSuite

HEADER_NOTE = "bytes: application-layer handshake bytes incl. 4-byte framing, no TCP/IP overhead"
PSK_COLUMN = "PSK"
NOMINAL_HZ = 3.0e9


@dataclass
class BenchRecord:
    kem_pq: str
    kem_c: str
    sig: str
    auth: str
    bytes_sent_initiator: int = 0
    bytes_sent_responder: int = 0
    bytes_total: int = 0
    wall_time: float = 0.0
    cpu_cycle_estimate: float = 0.0
    cycle_source: str = "proxy"
    error: str = ""

    @property
    def per_party(self):
        return self.bytes_total / 2

    @property
    def suite_description(self):
        return f"{self.kem_pq}+{self.kem_c}/{self.sig}/{self.auth}"


def _cpu_hz():
    """Nominal clock rate from /proc/cpuinfo, else a fixed 3 GHz guess."""
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.lower().startswith("cpu mhz"):
                    return float(line.split(":")[1]) * 1e6
    except (OSError, ValueError):
        pass
    return NOMINAL_HZ


def bench_one(kem_pq, sig, mode, kem_c="ECDH-P521", repetitions=1, seed=None,
              hierarchy=None, ca_pq_alg=pki.CA_PQ_ALG):
    """Measure one combination; timings are medians over ``repetitions``."""
    label = PSK_COLUMN if mode == "psk" else sig
    rec = BenchRecord(kem_pq, kem_c, label, mode)
    try:
        s = CipherSuite.from_names(kem_pq=kem_pq, kem_c=kem_c,
                                   dss=sig if mode != "psk" else "ML-DSA-44")
        rng = random.Random(seed)
        if mode != "psk" and hierarchy is None:
            hierarchy = testbed.make_hierarchy(sig, ca_pq_alg=ca_pq_alg, rng=rng)
        walls, cpus = [], []
        for _ in range(repetitions):
            init, resp = testbed.make_pair(s, mode, hierarchy=hierarchy,
                                           seed=rng.getrandbits(64))
            link = MemoryLink()
            w0, c0 = time.perf_counter(), time.process_time()
            run_stage(init, resp, link)
            cpus.append(time.process_time() - c0)
            walls.append(time.perf_counter() - w0)
        rec.bytes_sent_initiator = link.bytes_i2r
        rec.bytes_sent_responder = link.bytes_r2i
        rec.bytes_total = link.bytes_total
        rec.wall_time = statistics.median(walls)
        rec.cpu_cycle_estimate = statistics.median(cpus) * _cpu_hz()
    except Exception as exc:  # a failed cell must not stop the matrix
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def combinations(kems, sigs, modes):
    """KEM-major ordering; PSK mode contributes one column per KEM."""
    for kem in kems:
        for mode in modes:
            if mode == "psk":
                yield kem, PSK_COLUMN, mode
            else:
                for sig in sigs:
                    yield kem, sig, mode


def bench_matrix(kems, sigs, auth_modes=("psk", "cert"), repetitions=1, kem_c="ECDH-P521",
                 seed=None, parallel=1, ca_pq_alg=pki.CA_PQ_ALG):
    combos = list(combinations(kems, sigs, auth_modes))
    hierarchies = {}
    for _, sig, mode in combos:
        if mode != "psk" and sig not in hierarchies:
            hierarchies[sig] = testbed.make_hierarchy(sig, ca_pq_alg=ca_pq_alg,
                                                      rng=random.Random(seed))

    def one(combo):
        kem, sig, mode = combo
        return bench_one(kem, sig, mode, kem_c, repetitions, seed, hierarchies.get(sig))

    if parallel > 1:
        with ThreadPoolExecutor(parallel) as pool:
            return list(pool.map(one, combos))
    return [one(c) for c in combos]


COLUMNS = ("kem_pq", "kem_c", "sig", "auth", "bytes_sent_initiator", "bytes_sent_responder",
           "bytes_total", "per_party_kb", "total_kb", "wall_ms", "cpu_cycles_g", "cycle_source",
           "error")


def _row(r):
    d = asdict(r)
    return {
        **{k: d[k] for k in ("kem_pq", "kem_c", "sig", "auth", "bytes_sent_initiator",
                             "bytes_sent_responder", "bytes_total", "cycle_source", "error")},
        "per_party_kb": f"{r.per_party / 1000:.1f}",
        "total_kb": f"{r.bytes_total / 1000:.1f}",
        "wall_ms": f"{r.wall_time * 1000:.2f}",
        "cpu_cycles_g": f"{r.cpu_cycle_estimate / 1e9:.4f}",
    }


def to_markdown(records):
    lines = [f"<!-- {HEADER_NOTE}; KB = 1000 bytes; cycles = CPU time x nominal clock (proxy) -->",
             "| " + " | ".join(COLUMNS) + " |",
             "|" + "---|" * len(COLUMNS)]
    for r in records:
        row = _row(r)
        lines.append("| " + " | ".join(str(row[c]) for c in COLUMNS) + " |")
    return "\n".join(lines)


def to_csv(records, path=None):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COLUMNS)
    w.writeheader()
    for r in records:
        w.writerow(_row(r))
    text = buf.getvalue()
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text

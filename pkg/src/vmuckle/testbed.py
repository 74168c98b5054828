"""Wiring helpers that build matched initiator/responder pairs.

Used by the CLI loopback modes, the benchmark and the test-suite so that
all of them configure parties the same way.
"""
from __future__ import annotations

import random

from . import pki, qkd
from .handshake import AuthConfig, Session

MODES = ("psk", "cert", "both")


def make_hierarchy(dss_alg, names=("initiator", "responder"), ca_pq_alg=pki.CA_PQ_ALG,
                   ca_classical_alg=pki.CA_CLASSICAL_ALG, rng=None, validity=None):
    h = pki.build_hierarchy(ca_pq_alg, ca_classical_alg, validity, rng)
    for name in names:
        h.add_leaf(name, dss_alg, ca_classical_alg, validity, rng)
    return h


def auth_for(mode, name, peer, psk=None, hierarchy=None):
    if mode not in MODES:
        raise ValueError(f"auth mode must be one of {MODES}")
    kwargs = {}
    if mode in ("psk", "both"):
        kwargs["psk"] = psk
    if mode in ("cert", "both"):
        _, keys = hierarchy.leaves[name]
        kwargs.update(cert_chain=hierarchy.chain(name), sign_key=keys.pq_sk,
                      trust_anchor=hierarchy.root, peer_name=peer)
    return AuthConfig(**kwargs)


def make_pair(suite_, mode="both", psk=None, hierarchy=None, seed=None,
              qkd_seed=b"vmuckle-qkd-simulator-seed", ca_pq_alg=pki.CA_PQ_ALG):
    """Return ``(initiator, responder)`` sessions ready to run a stage.

    ``seed`` makes every injected random choice reproducible.  When
    certificates are needed and no hierarchy is given, one is generated
    with ``ca_pq_alg`` as the CA signature scheme.
    """
    rng = random.Random(seed) if seed is not None else None
    if mode in ("psk", "both") and psk is None:
        psk = (rng or random.SystemRandom()).randbytes(32)
    if mode in ("cert", "both") and hierarchy is None:
        hierarchy = make_hierarchy(suite_.dss.name, ca_pq_alg=ca_pq_alg, rng=rng)
    init = Session("init", suite_, auth_for(mode, "initiator", "responder", psk, hierarchy),
                   qkd.SimulatorProvider(qkd_seed, "link"), pid="responder",
                   rng=random.Random(rng.random()) if rng else None)
    resp = Session("resp", suite_, auth_for(mode, "responder", "initiator", psk, hierarchy),
                   qkd.SimulatorProvider(qkd_seed, "link"), pid="initiator",
                   rng=random.Random(rng.random()) if rng else None)
    return init, resp

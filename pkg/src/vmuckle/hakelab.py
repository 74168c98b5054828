"""Bookkeeping model of the HAKE key-indistinguishability experiment.

The lab runs real sessions of the handshake and answers adversarial
queries against them.  Every query is appended to a log together with its
answer; the cleanness predicates are then evaluated retrospectively over
that log.  ``None`` plays the role of the distinguished answer ⊥.

Query kinds::

    Create(i, j, role[, s])   Send(i, s, m)        Reveal(i, s, t)
    Test(i, s, t)             CorruptSK(i)         CorruptQK(i)
    CorruptCK(i)              CompromiseQK(i, s, t)  CompromiseCK(i, s, t)
    CompromiseSK(i, s, t)     CompromiseSS(i, s, t)

QK is the post-quantum key, CK the classical key and SK the symmetric key
(the PSK for Corrupt, the QKD key for Compromise).  CompromiseSS returns
the SecState that entered stage ``t``.

Trace files hold one action per line in parenthesised form, e.g.
``(Create 1 2 init)``; ``;`` starts a comment.  Besides the queries above a
trace may use the adversary helpers ``(Run i s j r)`` (honest stage between
initiator π_i^s and responder π_j^r), ``(Forward j r i s [n])``,
``(Drop j r [n])``, ``(Tamper j r pos)`` and the assertion
``(Expect clean_vm|clean_cvm|matching|origin ...)``.
"""
from __future__ import annotations

import collections
import random
from dataclasses import dataclass, field

from . import qkd, suite, testbed
from .errors import HandshakeRejected, IndexOutOfRange
from .handshake import Role, Session, Status

BOT = None

CORRUPT = ("CorruptSK", "CorruptQK", "CorruptCK")
COMPROMISE = ("CompromiseQK", "CompromiseCK", "CompromiseSK", "CompromiseSS")
QUERY_KINDS = ("Create", "Send", "Reveal", "Test") + CORRUPT + COMPROMISE
_EPHEMERAL_SLOT = {"CompromiseQK": "q", "CompromiseCK": "c", "CompromiseSK": "s"}


@dataclass(frozen=True)
class AdversaryQuery:
    kind: str
    args: tuple

    def __post_init__(self):
        if self.kind not in QUERY_KINDS:
            raise ValueError(f"unknown query kind {self.kind!r}")

    def __str__(self):
        parts = [self.kind] + [_fmt(a) for a in self.args]
        return "(" + " ".join(parts) + ")"


def _fmt(arg):
    if arg is None:
        return "start"
    if isinstance(arg, bytes):
        return "hex:" + arg.hex()
    return str(arg)


def Q(kind, *args):
    return AdversaryQuery(kind, tuple(args))


@dataclass
class LongTermKeys:
    """Long-term material for parties ``1..n``: PSKs per pair and a PKI."""

    n_parties: int
    hierarchy: object
    psks: dict
    qkd_seed: bytes

    @classmethod
    def generate(cls, n_parties, suite_=suite.TEST_SUITE, rng=None,
                 ca_pq_alg="TestDSS"):
        rng = rng or random.Random()
        names = [f"P{i}" for i in range(1, n_parties + 1)]
        h = testbed.make_hierarchy(suite_.dss.name, names, ca_pq_alg=ca_pq_alg, rng=rng)
        psks = {frozenset((i, j)): rng.randbytes(32)
                for i in range(1, n_parties + 1) for j in range(i + 1, n_parties + 1)}
        return cls(n_parties, h, psks, rng.randbytes(32))

    def psk(self, i, j):
        return self.psks[frozenset((i, j))]


class Experiment:
    """State of one run of the experiment: parties, sessions, query log."""

    def __init__(self, n_parties=2, n_sessions=4, n_stages=4, suite_=suite.TEST_SUITE,
                 mode="both", seed=None, keys=None):
        self.rng = random.Random(seed)
        self.n_parties = n_parties
        self.n_sessions = n_sessions
        self.n_stages = n_stages
        self.suite = suite_
        self.mode = mode
        self.keys = keys or LongTermKeys.generate(n_parties, suite_, self.rng)
        self.b = self.rng.randrange(2)
        self.sessions = {}
        self.outbox = {}
        self.log = []
        self.accept_at = {}
        self.tested = None
        self._answered = set()

    # ------------------------------------------------------------ helpers

    def _party(self, i):
        if not 1 <= i <= self.n_parties:
            raise IndexOutOfRange(f"party {i} outside 1..{self.n_parties}")

    def _session(self, i, s):
        self._party(i)
        if not 1 <= s <= self.n_sessions:
            raise IndexOutOfRange(f"session {s} outside 1..{self.n_sessions}")
        return self.sessions.get((i, s))

    def _stage(self, t):
        if not 1 <= t <= self.n_stages:
            raise IndexOutOfRange(f"stage {t} outside 1..{self.n_stages}")

    def _once(self, key):
        if key in self._answered:
            return False
        self._answered.add(key)
        return True

    def _record(self, q, answer):
        self.log.append((q, answer))
        return answer

    def accepted(self, i, s, t):
        sess = self.sessions.get((i, s))
        return sess is not None and sess.stage_status.get(t) == Status.ACCEPT

    # ----------------------------------------------------------- dispatch

    def dispatch(self, q):
        handler = getattr(self, "_q_" + q.kind)
        return handler(q, *q.args)

    def _q_Create(self, q, i, j, role, s=None):
        self._party(i)
        self._party(j)
        role = Role(role)
        if s is None:
            free = [k for k in range(1, self.n_sessions + 1) if (i, k) not in self.sessions]
            if not free:
                return self._record(q, BOT)
            s = free[0]
        elif self._session(i, s) is not None:
            return self._record(q, BOT)
        mode = self.mode
        auth = testbed.auth_for(mode, f"P{i}", f"P{j}", self.keys.psk(i, j) if i != j else None,
                                self.keys.hierarchy)
        lo, hi = sorted((i, j))
        provider = qkd.SimulatorProvider(self.keys.qkd_seed, f"{lo}-{hi}")
        self.sessions[(i, s)] = Session(role, self.suite, auth, provider, pid=j,
                                        rng=random.Random(self.rng.random()))
        self.outbox[(i, s)] = collections.deque()
        return self._record(q, s)

    def _q_Send(self, q, i, s, m):
        sess = self._session(i, s)
        if sess is None or sess.status == Status.REJECT:
            return self._record(q, BOT)
        starting = (m is None) if sess.role == Role.INIT else sess.status != Status.ACTIVE
        if not starting and sess.status != Status.ACTIVE:
            return self._record(q, BOT)
        if starting and sess.status == Status.ACCEPT and sess.stid >= self.n_stages:
            return self._record(q, BOT)
        before = sess.status
        pos = len(self.log)
        try:
            out = sess.handle(m)
        except HandshakeRejected:
            return self._record(q, BOT)
        if sess.status == Status.ACCEPT and (before != Status.ACCEPT or starting):
            self.accept_at[(i, s, sess.stid)] = pos
        self.outbox[(i, s)].extend(out)
        return self._record(q, out)

    def _q_Reveal(self, q, i, s, t):
        self._session(i, s)
        self._stage(t)
        if not self.accepted(i, s, t) or not self._once(("Reveal", i, s, t)):
            return self._record(q, BOT)
        return self._record(q, self.sessions[(i, s)].stage_keys[t].MS)

    def _q_Test(self, q, i, s, t):
        self._session(i, s)
        self._stage(t)
        if self.tested is not None or not self.accepted(i, s, t):
            return self._record(q, BOT)
        self.tested = (i, s, t)
        real = self.sessions[(i, s)].stage_keys[t].MS
        key = real if self.b == 1 else self.rng.randbytes(len(real))
        return self._record(q, key)

    def _corrupt(self, q, i):
        self._party(i)
        if not self._once((q.kind, i)):
            return self._record(q, BOT)
        _, leaf_keys = self.keys.hierarchy.leaves[f"P{i}"]
        if q.kind == "CorruptSK":
            answer = {j: self.keys.psk(i, j) for j in range(1, self.n_parties + 1) if j != i}
        elif q.kind == "CorruptQK":
            answer = leaf_keys.pq_sk
        else:
            answer = leaf_keys.classical_sk
        return self._record(q, answer)

    _q_CorruptSK = _q_CorruptQK = _q_CorruptCK = _corrupt

    def _compromise(self, q, i, s, t):
        sess = self._session(i, s)
        self._stage(t)
        if sess is None or t not in sess.ephemeral:
            return self._record(q, BOT)
        if q.kind == "CompromiseSS":
            value = sess.sec_state_in[t]
        else:
            value = sess.ephemeral[t].get(_EPHEMERAL_SLOT[q.kind])
        if value is None or not self._once((q.kind, i, s, t)):
            return self._record(q, BOT)
        return self._record(q, value)

    _q_CompromiseQK = _q_CompromiseCK = _q_CompromiseSK = _q_CompromiseSS = _compromise

    # ------------------------------------------------------ adversary moves

    def forward(self, j, r, i, s, n=None):
        box = self.outbox[(j, r)]
        count = len(box) if n is None else min(n, len(box))
        answers = []
        for _ in range(count):
            answers.append(self.dispatch(Q("Send", i, s, box.popleft())))
        return answers

    def drop(self, j, r, n=1):
        box = self.outbox[(j, r)]
        for _ in range(min(n, len(box))):
            box.popleft()

    def tamper(self, j, r, pos):
        box = self.outbox[(j, r)]
        msg = bytearray(box[0])
        msg[pos % len(msg)] ^= 0x01
        box[0] = bytes(msg)

    def run(self, i, s, j, r):
        """Deliver messages honestly until neither side has anything queued."""
        self.dispatch(Q("Send", i, s, None))
        while self.outbox[(i, s)] or self.outbox[(j, r)]:
            self.forward(i, s, j, r)
            self.forward(j, r, i, s)

    # ------------------------------------------------------------ relations

    def issued(self, kind, *args):
        return any(q.kind == kind and q.args == args for q, _ in self.log)

    def _issued_before(self, kind, args, pos):
        """``pos`` of None means the event never happened: the whole log counts."""
        return any(q.kind == kind and q.args == args for q, _ in self.log[:pos])

    def _logs(self, key, t):
        sess = self.sessions[key]
        sent = [m for u in sorted(sess.sent) if u <= t for m in sess.sent[u]]
        recv = [m for u in sorted(sess.received) if u <= t for m in sess.received[u]]
        return sent, recv

    def _comparable(self, a, b, t):
        sa, sb = self.sessions.get(a), self.sessions.get(b)
        return (sa is not None and sb is not None and a != b and sa.role != sb.role
                and t in sa.sent and t in sb.sent)

    def matching(self, a, b, t):
        if not self._comparable(a, b, t):
            return False
        sent_a, recv_a = self._logs(a, t)
        sent_b, recv_b = self._logs(b, t)
        return sent_a == recv_b and sent_b == recv_a

    def prefix_matching(self, a, b, t):
        """Both directions agree once the longer log is cut to the shorter."""
        if not self._comparable(a, b, t):
            return False
        sent_a, recv_a = self._logs(a, t)
        sent_b, recv_b = self._logs(b, t)

        def agree(x, y):
            n = min(len(x), len(y))
            return x[:n] == y[:n]

        return agree(sent_a, recv_b) and agree(sent_b, recv_a)

    def origin(self, a, b, t):
        return self.matching(a, b, t) or self.prefix_matching(a, b, t)

    def partners(self, key, t, relation):
        return [other for other in self.sessions if relation(key, other, t)]

    # ----------------------------------------------------------- cleanness

    def _chain_ok(self, kind, i, s, j, r, t):
        """Alternatives (iii), (iv), (vi): an earlier clean stage t' feeds t."""
        for tp in range(1, t + 1):
            if not all(self.matching((i, s), (j, r), u) for u in range(tp, t + 1)):
                continue
            if self.issued(kind, i, s, tp) or self.issued(kind, j, r, tp):
                continue
            if any(self.issued("CompromiseSS", i, s, u) or self.issued("CompromiseSS", j, r, u)
                   for u in range(tp + 1, t + 1)):
                continue
            if any(self.issued("Reveal", i, s, u) or self.issued("Reveal", j, r, u)
                   for u in range(tp, t + 1)):
                continue
            return True
        return False

    def _condition3(self, i, s, j, r, t, classical):
        def fresh(kind):
            return not (self.issued(kind, i, s, t) or self.issued(kind, j, r, t))

        options = [
            fresh("CompromiseQK"),
            fresh("CompromiseSK"),
            self._chain_ok("CompromiseQK", i, s, j, r, t),
            self._chain_ok("CompromiseSK", i, s, j, r, t),
        ]
        if classical:
            options += [fresh("CompromiseCK"), self._chain_ok("CompromiseCK", i, s, j, r, t)]
        return any(options)

    def _long_term_ok(self, party, peer, pos):
        qk = self._issued_before("CorruptQK", (party,), pos)
        sk = (self._issued_before("CorruptSK", (party,), pos)
              or self._issued_before("CorruptSK", (peer,), pos))
        return not qk or not sk

    def _clean(self, i, s, t, classical):
        key = (i, s)
        if key not in self.sessions:
            return False
        if self.issued("Reveal", i, s, t):
            return False
        matches = self.partners(key, t, self.matching)
        if any(self.issued("Reveal", j, r, t) for j, r in matches):
            return False
        for j, r in matches:
            if not self._condition3(i, s, j, r, t, classical):
                return False
        peer = self.sessions[key].pid
        if not self._long_term_ok(i, peer, self.accept_at.get((i, s, t))):
            return False
        for j, r in self.partners(key, t, self.origin):
            if not self._long_term_ok(j, self.sessions[(j, r)].pid,
                                      self.accept_at.get((j, r, t))):
                return False
        return True

    def clean_vm(self, i, s, t):
        return self._clean(i, s, t, classical=False)

    def clean_cvm(self, i, s, t):
        return self._clean(i, s, t, classical=True)


# Module-level aliases matching the operation names.

def dispatch(state, q):
    return state.dispatch(q)


def matching_sessions(state, a, b, t):
    return state.matching(a, b, t)


def origin_session(state, a, b, t):
    return state.origin(a, b, t)


def clean_vm(state, i, s, t):
    return state.clean_vm(i, s, t)


def clean_cvm(state, i, s, t):
    return state.clean_cvm(i, s, t)


# ---------------------------------------------------------------- traces


def _atom(tok):
    if tok == "start":
        return None
    if tok.startswith("hex:"):
        return bytes.fromhex(tok[4:])
    if tok in ("true", "false"):
        return tok == "true"
    try:
        return int(tok)
    except ValueError:
        return tok


def parse_trace(text):
    """Parse trace text into ``(name, args)`` tuples."""
    actions = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split(";", 1)[0].strip()
        if not line:
            continue
        if not (line.startswith("(") and line.endswith(")")):
            raise ValueError(f"line {lineno}: expected '(Name args...)'")
        toks = line[1:-1].split()
        if not toks:
            raise ValueError(f"line {lineno}: empty action")
        actions.append((toks[0], tuple(_atom(t) for t in toks[1:])))
    return actions


def format_trace(actions):
    return "\n".join("(" + " ".join([name] + [_fmt(a) for a in args]) + ")"
                     for name, args in actions) + "\n"


@dataclass
class Verdict:
    what: str
    args: tuple
    value: bool
    expected: bool = None

    @property
    def ok(self):
        return self.expected is None or self.value == self.expected

    def __str__(self):
        line = f"{self.what}{self.args} = {str(self.value).lower()}"
        if self.expected is not None:
            line += f"  (expected {str(self.expected).lower()}: {'ok' if self.ok else 'MISMATCH'})"
        return line


@dataclass
class Replay:
    experiment: Experiment
    expectations: list = field(default_factory=list)

    @property
    def ok(self):
        return all(v.ok for v in self.expectations)


_RELATIONS = {
    "clean_vm": lambda e, a: e.clean_vm(*a),
    "clean_cvm": lambda e, a: e.clean_cvm(*a),
    "matching": lambda e, a: e.matching((a[0], a[1]), (a[2], a[3]), a[4]),
    "origin": lambda e, a: e.origin((a[0], a[1]), (a[2], a[3]), a[4]),
}


def replay(actions, experiment=None, **kwargs):
    """Execute parsed trace actions; returns a :class:`Replay`."""
    exp = experiment or Experiment(**kwargs)
    result = Replay(exp)
    for name, args in actions:
        if name in QUERY_KINDS:
            exp.dispatch(AdversaryQuery(name, args))
        elif name == "Run":
            exp.run(*args)
        elif name == "Forward":
            exp.forward(*args)
        elif name == "Drop":
            exp.drop(*args)
        elif name == "Tamper":
            exp.tamper(*args)
        elif name == "Expect":
            what, *rest = args
            *rel_args, expected = rest
            value = _RELATIONS[what](exp, tuple(rel_args))
            result.expectations.append(Verdict(what, tuple(rel_args), value, expected))
        else:
            raise ValueError(f"unknown trace action {name!r}")
    return result


def verdicts(exp):
    """Predicate verdicts for every accepted stage in ``exp``."""
    out = []
    for (i, s), sess in sorted(exp.sessions.items()):
        for t, status in sorted(sess.stage_status.items()):
            if status == Status.ACCEPT:
                out.append(Verdict("clean_vm", (i, s, t), exp.clean_vm(i, s, t)))
                out.append(Verdict("clean_cvm", (i, s, t), exp.clean_cvm(i, s, t)))
    return out


# ------------------------------------------------------- random schedules

DEFAULT_WEIGHTS = {
    "Reveal": 0.15,
    "CorruptSK": 0.1,
    "CorruptQK": 0.1,
    "CorruptCK": 0.05,
    "CompromiseQK": 0.2,
    "CompromiseCK": 0.2,
    "CompromiseSK": 0.2,
    "CompromiseSS": 0.15,
}


def random_trace(rng, n_parties=2, n_stages=3, weights=None, drop_prob=0.05):
    """Honest sessions between P1 and P2 interleaved with random queries.

    Each stage is run message by message; between deliveries every query
    kind fires independently with its weight as probability.
    """
    weights = weights or DEFAULT_WEIGHTS
    actions = [("Create", (1, 2, "init", 1)), ("Create", (2, 1, "resp", 1))]
    stages = rng.randint(1, n_stages)

    def noise(t_max):
        for kind, p in weights.items():
            if rng.random() >= p:
                continue
            if kind.startswith("Corrupt"):
                actions.append((kind, (rng.randint(1, n_parties),)))
            else:
                i = rng.randint(1, 2)
                actions.append((kind, (i, 1, rng.randint(1, t_max))))

    for t in range(1, stages + 1):
        actions.append(("Send", (1, 1, None)))
        for _ in range(5):
            noise(t)
            if rng.random() < drop_prob:
                actions.append(("Drop", (1, 1) if rng.random() < 0.5 else (2, 1)))
            actions.append(("Forward", (1, 1, 2, 1)))
            actions.append(("Forward", (2, 1, 1, 1)))
        noise(t)
    return actions


def indistinguishability_rate(runs, seed=0, keys=None):
    """Success rate of a guess-at-random adversary over ``runs`` experiments."""
    rng = random.Random(seed)
    keys = keys or LongTermKeys.generate(2, suite.TEST_SUITE, random.Random(seed))
    wins = 0
    for n in range(runs):
        exp = Experiment(seed=rng.getrandbits(64), keys=keys, mode="psk")
        exp.dispatch(Q("Create", 1, 2, "init", 1))
        exp.dispatch(Q("Create", 2, 1, "resp", 1))
        exp.run(1, 1, 2, 1)
        key = exp.dispatch(Q("Test", 1, 1, 1))
        if key is None:
            raise RuntimeError("honest run did not accept")
        guess = rng.randrange(2)
        wins += guess == exp.b
    return wins / runs

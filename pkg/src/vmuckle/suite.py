"""Primitive interfaces and the algorithm registry.

Every primitive the handshake touches is reached through a name lookup so
a cipher suite is nothing more than a bundle of registered names.  Concrete
post-quantum algorithms come from audited external builds (``pqcrypto`` for
ML-KEM, HQC, ML-DSA and SLH-DSA, ``pypqc`` for Falcon); classical ones come
from ``cryptography``.  ``TestKEM-32`` and ``TestDSS`` are home-grown,
deterministic and deliberately insecure: they exist so the whole protocol can
run under seeded randomness in tests.

Randomness is injected: any object with a ``randbytes(n)`` method works
(``random.Random(seed)`` in tests, ``random.SystemRandom()`` otherwise).
External PQ builds draw from the OS and ignore the injected generator.
"""
from __future__ import annotations

import enum
import hashlib
import hmac
import importlib
import random
import warnings
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ec, ed25519, x25519
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import (
    AeadAuthFailure,
    DecapsFailure,
    MalformedPublicKey,
    UnknownAlgorithm,
)

NONE = "none"

_system_rng = random.SystemRandom()


def default_rng():
    return _system_rng


class Kind(enum.Enum):
    KEM_CLASSICAL = "KemClassical"
    KEM_POST_QUANTUM = "KemPostQuantum"
    SIGNATURE = "Signature"
    MAC = "Mac"
    PRF = "Prf"
    AEAD = "Aead"
    HASH = "Hash"


_OPTIONAL_KINDS = {Kind.KEM_CLASSICAL, Kind.SIGNATURE}


# --------------------------------------------------------------------------
# KEMs


class NoneKem:
    """Absent classical component: every value is the empty string."""

    name = NONE
    public_key_size = 0
    ciphertext_size = 0
    deterministic = True

    def keygen(self, rng):
        return b"", b""

    def encaps(self, pk, rng):
        if pk:
            raise MalformedPublicKey("'none' KEM takes an empty public key")
        return b"", b""

    def decaps(self, sk, ct):
        if sk or ct:
            raise DecapsFailure("'none' KEM takes empty inputs")
        return b""


class TestKem:
    """Hash-based toy KEM with explicit rejection.

    Anyone holding the public key can recompute the shared secret, so this
    offers no secrecy at all.  It is correct, deterministic under a seeded
    generator and rejects any modified ciphertext, which is all the tests
    need.
    """

    name = "TestKEM-32"
    public_key_size = 32
    ciphertext_size = 48
    deterministic = True

    @staticmethod
    def _pk(sk):
        return hashlib.sha256(b"TestKEM-32 pk" + sk).digest()

    def keygen(self, rng):
        sk = rng.randbytes(32)
        return self._pk(sk), sk

    def encaps(self, pk, rng):
        if len(pk) != 32:
            raise MalformedPublicKey(f"TestKEM-32 public key must be 32 bytes, got {len(pk)}")
        r = rng.randbytes(32)
        tag = hashlib.sha256(b"TestKEM-32 tag" + pk + r).digest()[:16]
        ss = hashlib.sha256(b"TestKEM-32 ss" + pk + r).digest()
        return r + tag, ss

    def decaps(self, sk, ct):
        if len(sk) != 32 or len(ct) != 48:
            raise DecapsFailure("TestKEM-32: bad key or ciphertext length")
        pk = self._pk(sk)
        r, tag = ct[:32], ct[32:]
        expect = hashlib.sha256(b"TestKEM-32 tag" + pk + r).digest()[:16]
        if not hmac.compare_digest(tag, expect):
            raise DecapsFailure("TestKEM-32: ciphertext rejected")
        return hashlib.sha256(b"TestKEM-32 ss" + pk + r).digest()


# (curve, scalar bytes, group order bit length)
_CURVES = {
    "ECDH-P256": (ec.SECP256R1(), 32, 256),
    "ECDH-P384": (ec.SECP384R1(), 48, 384),
    "ECDH-P521": (ec.SECP521R1(), 66, 521),
}


class EcdhKem:
    """Ephemeral-static ECDH on a NIST curve, used as a KEM.

    The ciphertext is the encapsulator's ephemeral public point; both keys
    travel as uncompressed X9.62 points.
    """

    deterministic = True

    def __init__(self, name):
        self.name = name
        self.curve, self.scalar_len, self.order_bits = _CURVES[name]
        self.public_key_size = 1 + 2 * self.scalar_len
        self.ciphertext_size = self.public_key_size

    def _new_key(self, rng):
        # below 2^(bits-1), hence below the group order
        d = int.from_bytes(rng.randbytes(self.scalar_len), "big") >> (8 * self.scalar_len - self.order_bits + 1)
        d += 1
        return ec.derive_private_key(d, self.curve)

    def _point(self, key):
        return key.public_key().public_bytes(
            serialization.Encoding.X962, serialization.PublicFormat.UncompressedPoint)

    def _load(self, data):
        return ec.EllipticCurvePublicKey.from_encoded_point(self.curve, data)

    def keygen(self, rng):
        key = self._new_key(rng)
        d = key.private_numbers().private_value
        return self._point(key), d.to_bytes(self.scalar_len, "big")

    def encaps(self, pk, rng):
        try:
            peer = self._load(pk)
        except ValueError as exc:
            raise MalformedPublicKey(f"{self.name}: {exc}") from exc
        eph = self._new_key(rng)
        return self._point(eph), eph.exchange(ec.ECDH(), peer)

    def decaps(self, sk, ct):
        try:
            peer = self._load(ct)
            key = ec.derive_private_key(int.from_bytes(sk, "big"), self.curve)
        except ValueError as exc:
            raise DecapsFailure(f"{self.name}: {exc}") from exc
        return key.exchange(ec.ECDH(), peer)


class X25519Kem:
    name = "X25519"
    public_key_size = 32
    ciphertext_size = 32
    deterministic = True

    @staticmethod
    def _raw_pub(key):
        return key.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw)

    def keygen(self, rng):
        sk = rng.randbytes(32)
        return self._raw_pub(x25519.X25519PrivateKey.from_private_bytes(sk)), sk

    def encaps(self, pk, rng):
        try:
            peer = x25519.X25519PublicKey.from_public_bytes(pk)
        except ValueError as exc:
            raise MalformedPublicKey(f"X25519: {exc}") from exc
        eph = x25519.X25519PrivateKey.from_private_bytes(rng.randbytes(32))
        try:
            ss = eph.exchange(peer)
        except ValueError as exc:
            raise MalformedPublicKey(f"X25519: {exc}") from exc
        return self._raw_pub(eph), ss

    def decaps(self, sk, ct):
        try:
            peer = x25519.X25519PublicKey.from_public_bytes(ct)
            return x25519.X25519PrivateKey.from_private_bytes(sk).exchange(peer)
        except ValueError as exc:
            raise DecapsFailure(f"X25519: {exc}") from exc


class PqcryptoKem:
    """Adapter for a ``pqcrypto.kem`` submodule.

    ML-KEM uses implicit rejection: a modified ciphertext of the right length
    decapsulates to a pseudorandom secret instead of failing.
    """

    deterministic = False

    def __init__(self, name, module):
        self.name = name
        self._module_name = module
        self._mod = None

    @property
    def mod(self):
        if self._mod is None:
            self._mod = importlib.import_module(self._module_name)
        return self._mod

    @property
    def public_key_size(self):
        return self.mod.PUBLIC_KEY_SIZE

    @property
    def ciphertext_size(self):
        return self.mod.CIPHERTEXT_SIZE

    def keygen(self, rng):
        return self.mod.keygen()

    def encaps(self, pk, rng):
        try:
            return self.mod.encaps(pk)
        except ValueError as exc:
            raise MalformedPublicKey(f"{self.name}: {exc}") from exc

    def decaps(self, sk, ct):
        try:
            return self.mod.decaps(sk, ct)
        except ValueError as exc:
            raise DecapsFailure(f"{self.name}: {exc}") from exc


# --------------------------------------------------------------------------
# Signatures


class TestDss:
    """Keyed-hash stand-in for a signature scheme.

    The "public" key is the hash of the secret and is itself the MAC key, so
    whoever can verify can also forge.  Only fit for tests and benchmarks
    that exercise protocol plumbing.
    """

    name = "TestDSS"
    public_key_size = 32
    signature_size = 32
    deterministic = True

    def keygen(self, rng):
        sk = rng.randbytes(32)
        return hashlib.sha256(b"TestDSS" + sk).digest(), sk

    def sign(self, sk, message, rng):
        pk = hashlib.sha256(b"TestDSS" + sk).digest()
        return hmac.new(pk, message, hashlib.sha256).digest()

    def verify(self, pk, message, signature):
        if len(pk) != 32:
            return False
        return hmac.compare_digest(hmac.new(pk, message, hashlib.sha256).digest(), signature)


class Ed25519Dss:
    name = "Ed25519"
    public_key_size = 32
    signature_size = 64
    deterministic = True

    def keygen(self, rng):
        sk = rng.randbytes(32)
        pk = ed25519.Ed25519PrivateKey.from_private_bytes(sk).public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw)
        return pk, sk

    def sign(self, sk, message, rng):
        return ed25519.Ed25519PrivateKey.from_private_bytes(sk).sign(message)

    def verify(self, pk, message, signature):
        try:
            ed25519.Ed25519PublicKey.from_public_bytes(pk).verify(signature, message)
        except (InvalidSignature, ValueError):
            return False
        return True


class PqcryptoDss:
    deterministic = False

    def __init__(self, name, module):
        self.name = name
        self._module_name = module
        self._mod = None

    @property
    def mod(self):
        if self._mod is None:
            self._mod = importlib.import_module(self._module_name)
        return self._mod

    @property
    def public_key_size(self):
        return self.mod.PUBLIC_KEY_SIZE

    @property
    def signature_size(self):
        return self.mod.SIGNATURE_SIZE

    def keygen(self, rng):
        return self.mod.keygen()

    def sign(self, sk, message, rng):
        return self.mod.sign(sk, message)

    def verify(self, pk, message, signature):
        import pqcrypto

        try:
            self.mod.verify(pk, message, signature)
        except (pqcrypto.InvalidSignatureError, ValueError):
            return False
        return True


class FalconDss:
    """Falcon via the PQClean build shipped in ``pypqc``.

    Compressed Falcon signatures vary in length, so they are carried in a
    fixed-size envelope: 2-byte big-endian length, the signature, zero
    padding up to ``padded`` bytes.  Signatures longer than ``padded`` are
    re-drawn, as in the padded Falcon variant.
    """

    deterministic = False
    RETRIES = 64

    def __init__(self, name, module, pk_size, padded):
        self.name = name
        self._module_name = module
        self._mod = None
        self.public_key_size = pk_size
        self.padded = padded
        self.signature_size = 2 + padded

    @property
    def mod(self):
        if self._mod is None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                self._mod = importlib.import_module(self._module_name)
        return self._mod

    def keygen(self, rng):
        return self.mod.keypair()

    def sign(self, sk, message, rng):
        for _ in range(self.RETRIES):
            sig = self.mod.sign(message, sk)
            if len(sig) <= self.padded:
                return len(sig).to_bytes(2, "big") + sig.ljust(self.padded, b"\x00")
        raise RuntimeError(f"{self.name}: no signature fit the padded size")

    def verify(self, pk, message, signature):
        if len(pk) != self.public_key_size or len(signature) != self.signature_size:
            return False
        n = int.from_bytes(signature[:2], "big")
        if not 0 < n <= self.padded or any(signature[2 + n:]):
            return False
        try:
            self.mod.verify(signature[2:2 + n], message, pk)
        except (ValueError, RuntimeError):
            return False
        return True


# --------------------------------------------------------------------------
# Registry

_HASHES = {"SHA-384": "sha384", "SHA-256": "sha256"}

_REGISTRY = {
    Kind.KEM_CLASSICAL: {
        NONE: NoneKem(),
        "ECDH-P256": EcdhKem("ECDH-P256"),
        "ECDH-P384": EcdhKem("ECDH-P384"),
        "ECDH-P521": EcdhKem("ECDH-P521"),
        "X25519": X25519Kem(),
    },
    Kind.KEM_POST_QUANTUM: {
        "ML-KEM-512": PqcryptoKem("ML-KEM-512", "pqcrypto.kem.ml_kem_512"),
        "ML-KEM-768": PqcryptoKem("ML-KEM-768", "pqcrypto.kem.ml_kem_768"),
        "ML-KEM-1024": PqcryptoKem("ML-KEM-1024", "pqcrypto.kem.ml_kem_1024"),
        "HQC-128": PqcryptoKem("HQC-128", "pqcrypto.kem.hqc_128"),
        "HQC-192": PqcryptoKem("HQC-192", "pqcrypto.kem.hqc_192"),
        "HQC-256": PqcryptoKem("HQC-256", "pqcrypto.kem.hqc_256"),
        "TestKEM-32": TestKem(),
    },
    Kind.SIGNATURE: {
        NONE: None,
        "ML-DSA-44": PqcryptoDss("ML-DSA-44", "pqcrypto.sign.ml_dsa_44"),
        "ML-DSA-65": PqcryptoDss("ML-DSA-65", "pqcrypto.sign.ml_dsa_65"),
        "ML-DSA-87": PqcryptoDss("ML-DSA-87", "pqcrypto.sign.ml_dsa_87"),
        "SLH-DSA-SHAKE-128f": PqcryptoDss("SLH-DSA-SHAKE-128f", "pqcrypto.sign.slh_dsa_shake_128f"),
        "SLH-DSA-SHAKE-192f": PqcryptoDss("SLH-DSA-SHAKE-192f", "pqcrypto.sign.slh_dsa_shake_192f"),
        "SLH-DSA-SHAKE-256f": PqcryptoDss("SLH-DSA-SHAKE-256f", "pqcrypto.sign.slh_dsa_shake_256f"),
        "Falcon-512": FalconDss("Falcon-512", "pqc.sign.falcon_512", 897, 666),
        "Falcon-1024": FalconDss("Falcon-1024", "pqc.sign.falcon_1024", 1793, 1280),
        "Ed25519": Ed25519Dss(),
        "TestDSS": TestDss(),
    },
    Kind.MAC: {"HMAC-SHA-384": "SHA-384", "HMAC-SHA-256": "SHA-256"},
    Kind.PRF: {"HMAC-SHA-384": "SHA-384", "HMAC-SHA-256": "SHA-256"},
    Kind.AEAD: {"AES-256-GCM": 32},
    Kind.HASH: {name: name for name in _HASHES},
}

TEST_PRIMITIVES = frozenset({"TestKEM-32", "TestDSS"})


def registered(kind):
    """Names registered for ``kind``, in registration order."""
    return list(_REGISTRY[kind])


@dataclass(frozen=True)
class AlgorithmId:
    kind: Kind
    name: str

    def __post_init__(self):
        if self.name == NONE and self.kind not in _OPTIONAL_KINDS:
            raise UnknownAlgorithm(f"'none' is not allowed for {self.kind.value}")
        if self.name not in _REGISTRY[self.kind]:
            raise UnknownAlgorithm(f"{self.kind.value} algorithm {self.name!r} is not registered")

    def __str__(self):
        return self.name


def _impl(alg, kinds):
    if isinstance(alg, str):
        for kind in kinds:
            if alg in _REGISTRY[kind]:
                return _REGISTRY[kind][alg]
        raise UnknownAlgorithm(f"no {'/'.join(k.value for k in kinds)} algorithm named {alg!r}")
    if alg.kind not in kinds:
        raise UnknownAlgorithm(f"{alg.name} is a {alg.kind.value}, expected {kinds[0].value}")
    return _REGISTRY[alg.kind][alg.name]


_KEM_KINDS = (Kind.KEM_POST_QUANTUM, Kind.KEM_CLASSICAL)


def kem(alg):
    return _impl(alg, _KEM_KINDS)


def dss(alg):
    impl = _impl(alg, (Kind.SIGNATURE,))
    if impl is None:
        raise UnknownAlgorithm("signature algorithm 'none' cannot sign or verify")
    return impl


@dataclass(frozen=True)
class KemKeyPair:
    public_key: bytes
    secret_key: bytes = field(repr=False)
    algorithm: str


def kem_keygen(alg, security_param=128, rng=None):
    impl = kem(alg)
    pk, sk = impl.keygen(rng or _system_rng)
    return KemKeyPair(pk, sk, impl.name)


def kem_encaps(alg, pk, rng=None):
    """Return ``(ciphertext, shared_secret)``."""
    return kem(alg).encaps(pk, rng or _system_rng)


def kem_decaps(alg, sk, ct):
    return kem(alg).decaps(sk, ct)


def dss_keygen(alg, rng=None):
    """Return ``(public_key, secret_key)``."""
    return dss(alg).keygen(rng or _system_rng)


def sign(alg, sk, message, rng=None):
    return dss(alg).sign(sk, message, rng or _system_rng)


def verify(alg, pk, message, signature):
    return dss(alg).verify(pk, message, signature)


# --------------------------------------------------------------------------
# Symmetric primitives


def hash_len(hash_name="SHA-384"):
    return hashlib.new(_HASHES[hash_name]).digest_size


def digest(data, hash_name="SHA-384"):
    return hashlib.new(_HASHES[hash_name], data).digest()


def canonical_key(key, hash_name="SHA-384"):
    """Map the empty string (and therefore ⊥) to the all-zero key."""
    return key if key else bytes(hash_len(hash_name))


def prf(key, data, hash_name="SHA-384"):
    """HMAC used as a (dual) PRF; empty keys are first made canonical."""
    return hmac.new(canonical_key(key, hash_name), data, _HASHES[hash_name]).digest()


def mac_auth(key, message, hash_name="SHA-384"):
    return hmac.new(key, message, _HASHES[hash_name]).digest()


def mac_verify(key, message, tag, hash_name="SHA-384"):
    return hmac.compare_digest(mac_auth(key, message, hash_name), tag)


def aead_seal(key, nonce, associated_data, plaintext):
    return AESGCM(key).encrypt(nonce, plaintext, associated_data)


def aead_open(key, nonce, associated_data, ciphertext):
    try:
        return AESGCM(key).decrypt(nonce, ciphertext, associated_data)
    except InvalidTag as exc:
        raise AeadAuthFailure("authentication tag mismatch") from exc


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CipherSuite:
    kem_c: AlgorithmId
    kem_pq: AlgorithmId
    dss: AlgorithmId
    mac: AlgorithmId
    prf: AlgorithmId
    aead: AlgorithmId
    hash: AlgorithmId
    security_param: int = 256

    def __post_init__(self):
        if self.kem_pq.name == NONE:
            raise UnknownAlgorithm("the post-quantum KEM is mandatory")
        if self.security_param < 128 or self.security_param % 8:
            raise ValueError("security parameter must be a multiple of 8 and at least 128")
        if _REGISTRY[Kind.PRF][self.prf.name] != self.hash.name:
            raise ValueError("PRF and transcript hash must use the same hash function")

    @classmethod
    def from_names(cls, kem_c="ECDH-P521", kem_pq="ML-KEM-1024", dss="ML-DSA-87",
                   mac="HMAC-SHA-384", prf="HMAC-SHA-384", aead="AES-256-GCM",
                   hash="SHA-384", security_param=256):
        return cls(
            AlgorithmId(Kind.KEM_CLASSICAL, kem_c),
            AlgorithmId(Kind.KEM_POST_QUANTUM, kem_pq),
            AlgorithmId(Kind.SIGNATURE, dss),
            AlgorithmId(Kind.MAC, mac),
            AlgorithmId(Kind.PRF, prf),
            AlgorithmId(Kind.AEAD, aead),
            AlgorithmId(Kind.HASH, hash),
            security_param,
        )

    @property
    def hash_name(self):
        return self.hash.name

    @property
    def aead_key_len(self):
        return _REGISTRY[Kind.AEAD][self.aead.name]

    def describe(self):
        return f"{self.kem_pq.name}+{self.kem_c.name}/{self.dss.name}"

    def uses_test_primitives(self):
        return bool(TEST_PRIMITIVES & {self.kem_pq.name, self.dss.name})


DEFAULT_SUITE = CipherSuite.from_names()
TEST_SUITE = CipherSuite.from_names(kem_c="X25519", kem_pq="TestKEM-32", dss="TestDSS",
                                    security_param=128)

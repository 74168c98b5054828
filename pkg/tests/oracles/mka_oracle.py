"""Stand-alone reference for the MKA derivations.

Uses only hmac/hashlib and the AESGCM primitive; nothing is imported from
the package under test.
"""
import hashlib
import hmac

from cryptography.hazmat.primitives.ciphers.aead import AESGCM


def h256(key, msg):
    return hmac.new(key, msg, hashlib.sha256).digest()


def hierarchy(msk, ckn):
    cak = h256(msk, ckn)
    return {
        "cak": cak,
        "kek": h256(cak, b"IEEE8021 KEK" + ckn),
        "ick": h256(cak, b"IEEE8021 ICK" + ckn),
    }


def sak(cak, sci, key_number, nonce):
    return h256(cak, sci + key_number.to_bytes(4, "big") + nonce)


def frame_icv(ick, frame):
    """ICV over every byte before the trailing 16-byte ICV field."""
    return h256(ick, frame[:-16])[:16]


def open_frame(kek, frame):
    """Decrypt the wrapped SAK field: returns (sak, nonce)."""
    gcm_nonce = frame[33:45]
    n = int.from_bytes(frame[45:47], "big")
    plain = AESGCM(kek).decrypt(gcm_nonce, frame[47:47 + n], frame[:33])
    return plain[:32], plain[32:]

"""Out-of-band QKD key providers.

A provider maps a key handle to key bytes and must hand both endpoints of a
stream the same bytes for the same handle.  Handles are ``(stream_id,
index)``; by default a session takes ``index = base + stage`` on its
configured stream.

Key files hold one hex key per line (blank lines and ``#`` comments are
skipped).  Line ``i`` (0-based) is the key for index ``i``.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass

from . import suite
from .errors import BadHex, IndexOutOfRange, KeyReuse, SeedTooShort, WrongLength


@dataclass(frozen=True)
class QkdKeyHandle:
    stream_id: str
    index: int


class SimulatorProvider:
    """Deterministic stand-in for a QKD link.

    ``get_key(i, bits) = PRF(seed, stream_id || i || bits)``, so two
    instances built from the same seed agree on every handle.
    """

    def __init__(self, seed, stream_id="0"):
        if len(seed) < 16:
            raise SeedTooShort(f"simulator seed must be at least 16 bytes, got {len(seed)}")
        self.seed = bytes(seed)
        self.stream_id = str(stream_id)

    def get_key(self, index, bits):
        if isinstance(index, QkdKeyHandle):
            index = index.index
        if bits % 8 or not 0 < bits <= 384:
            raise WrongLength(f"simulator serves 8..384-bit keys, asked for {bits}")
        if index < 0 or index >= 1 << 64:
            raise IndexOutOfRange(f"key index {index} out of range")
        data = self.stream_id.encode() + index.to_bytes(8, "big") + bits.to_bytes(2, "big")
        return suite.prf(self.seed, data, "SHA-384")[: bits // 8]


def simulator_new(seed, stream_id="0"):
    return SimulatorProvider(seed, stream_id)


class FileProvider:
    def __init__(self, path):
        self.path = path
        self._lock = threading.Lock()
        self._keys = None

    def _load(self):
        with self._lock:
            if self._keys is None:
                with open(self.path) as f:
                    self._keys = [ln.strip() for ln in f
                                  if ln.strip() and not ln.lstrip().startswith("#")]
            return self._keys

    def get_key(self, index, bits):
        if isinstance(index, QkdKeyHandle):
            index = index.index
        keys = self._load()
        if not 0 <= index < len(keys):
            raise IndexOutOfRange(f"key index {index} not in file of {len(keys)} keys")
        try:
            key = bytes.fromhex(keys[index])
        except ValueError as exc:
            raise BadHex(f"line for index {index}: {exc}") from exc
        if len(key) < bits // 8:
            raise WrongLength(f"key {index} has {len(key)} bytes, need {bits // 8}")
        return key[: bits // 8]


def file_provider_new(path):
    return FileProvider(path)


class OneShotProvider:
    """Wrapper that refuses to serve the same handle twice."""

    def __init__(self, inner):
        self.inner = inner
        self._used = set()
        self._lock = threading.Lock()

    def get_key(self, index, bits):
        key = index.index if isinstance(index, QkdKeyHandle) else index
        with self._lock:
            if key in self._used:
                raise KeyReuse(f"QKD key index {key} already consumed")
            self._used.add(key)
        return self.inner.get_key(index, bits)


def parse_source(spec):
    """Build a provider from ``sim:<seed-hex>:<stream>`` or ``file:<path>``."""
    kind, _, rest = spec.partition(":")
    if kind == "sim":
        seed_hex, _, stream = rest.partition(":")
        try:
            seed = bytes.fromhex(seed_hex)
        except ValueError as exc:
            raise BadHex(f"simulator seed: {exc}") from exc
        return SimulatorProvider(seed, stream or "0")
    if kind == "file":
        return FileProvider(rest)
    raise ValueError(f"unknown QKD source {spec!r}; expected sim:<seed-hex>:<stream> or file:<path>")

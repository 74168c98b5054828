"""Hybrid authenticated key exchange combining classical, post-quantum and
QKD key material, with PSK and/or signature authentication."""

__version__ = "0.1.0"

"""Stable seed derivation, independent of Python's hash randomization.

Per-frame and per-step seeds are derived rather than drawn sequentially so
that work units can run in any order (or in parallel) and still reproduce
bit-identical results.
"""

from __future__ import annotations

import hashlib


def derive_seed(*parts) -> int:
    """Map (seed, index, ...) to a stable 63-bit integer."""
    key = ":".join(str(p) for p in parts).encode()
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1

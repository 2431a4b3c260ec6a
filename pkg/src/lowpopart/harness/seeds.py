"""Stable seed derivation.

A seed is the first 8 bytes (little endian) of the BLAKE2b digest of the
colon-joined decimal/string parts, e.g. ``blake2b(b"7:0:1:3")``. The value
does not depend on the Python version or hash randomization.
"""
from __future__ import annotations

import hashlib


def derive_seed(*parts) -> int:
    key = ":".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def run_seed(base: int, grid_index: int, method_index: int, rep: int) -> int:
    """Seed for one (grid point, method, repetition) cell."""
    return derive_seed(base, grid_index, method_index, rep)


def instance_seed(base: int, rep: int) -> int:
    """Seed for the environment of one repetition; shared by every method so comparisons are paired."""
    return derive_seed(base, "instance", rep)

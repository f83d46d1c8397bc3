"""Stateless seed derivation for reproducible parallel runs.

``derive_seed(master, task)`` is bit-exact and documented so other tools can
reproduce it::

    z = master XOR rotl64(task, 32)
    repeat twice:
        z = z + 0x9E3779B97F4A7C15          (mod 2**64)
        z = (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9
        z = (z XOR (z >> 27)) * 0x94D049BB133111EB
        z = z XOR (z >> 31)

Each round is the splitmix64 finalizer with its golden-ratio increment.
"""
from __future__ import annotations

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def rotl64(v: int, r: int) -> int:
    v &= MASK64
    return ((v << r) | (v >> (64 - r))) & MASK64


def mix64(z: int) -> int:
    z = (z + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, task_id: int) -> int:
    z = (master & MASK64) ^ rotl64(task_id, 32)
    return mix64(mix64(z))

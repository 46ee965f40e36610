"""Deterministic 64-bit seed derivation for experiment cells.

Strings are folded with FNV-1a and the result finalized with the splitmix64
mixer, so every (master seed, dataset, loss, seed index) cell gets a stable,
well-spread RNG seed that never changes when unrelated cells are added.
"""
from __future__ import annotations

_MASK = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _fnv1a(data: bytes, state: int = _FNV_OFFSET) -> int:
    for byte in data:
        state ^= byte
        state = (state * _FNV_PRIME) & _MASK
    return state


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def mix_seed(*parts) -> int:
    """Derive a 64-bit seed from integers and strings, order-sensitive."""
    state = _FNV_OFFSET
    for part in parts:
        if isinstance(part, int):
            state = _fnv1a(part.to_bytes(8, "little", signed=False), state)
        else:
            state = _fnv1a(str(part).encode("utf-8"), state)
        state = _fnv1a(b"|", state)
    return _splitmix64(state)

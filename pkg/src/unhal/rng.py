"""Deterministic, splittable random streams.

Every random draw in this package comes from a Philox4x64-10 counter-based
bit generator. A stream is identified by the pair ``(seed, label, indices)``:
the user seed goes into the first key word, and the second key word is the
64-bit FNV-1a hash of the label plus the little-endian encoding of the
integer indices. Independent subsystems (weight init, pixel sampling, crop
selection, synthetic data, ...) therefore get independent streams from a
single seed, and any one stream can be reproduced in isolation.

Normative key derivation, for reproducing results outside this codebase::

    key[0] = seed mod 2**64
    key[1] = fnv1a64(label_utf8 || le64(index_0) || le64(index_1) || ...)

Draws are made through ``numpy.random.Generator`` bound to that Philox
state; numpy's ``Generator`` draw algorithms are the normative sampler.
"""

from __future__ import annotations

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(label: str, *indices: int) -> int:
    """64-bit FNV-1a over the label bytes followed by each index as le64."""
    data = label.encode("utf-8")
    for idx in indices:
        data += (int(idx) & _MASK64).to_bytes(8, "little")
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def stream(seed: int, label: str, *indices: int) -> np.random.Generator:
    """Return the Generator for stream ``(seed, label, *indices)``."""
    key = np.array(
        [int(seed) & _MASK64, fnv1a64(label, *indices)], dtype=np.uint64
    )
    return np.random.Generator(np.random.Philox(key=key))

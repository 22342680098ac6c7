"""Deterministic random-stream derivation.

All stochastic components draw from ``numpy.random.Generator`` streams that
are derived from a single master seed plus string or integer labels, so any
run is reproducible bit for bit regardless of evaluation order elsewhere.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derived_rng", "derived_seed", "label_key"]


def label_key(label: str | int) -> int:
    """Map a label to a stable non-negative integer.

    Strings are hashed (stable across processes and platforms, unlike
    ``hash``); non-negative integers pass through unchanged.
    """
    if isinstance(label, str):
        digest = hashlib.blake2s(label.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big")
    if label < 0:
        raise ValueError("integer labels must be non-negative")
    return int(label)


def derived_rng(seed: int, *labels: str | int) -> np.random.Generator:
    """Return a Generator for (seed, labels), independent per label tuple."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    entropy = [int(seed)] + [label_key(lab) for lab in labels]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derived_seed(seed: int, *labels: str | int) -> int:
    """Collapse (seed, labels) to a single integer seed for sub-components."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    entropy = [int(seed)] + [label_key(lab) for lab in labels]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])

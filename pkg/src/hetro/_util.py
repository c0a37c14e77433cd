"""Shared plumbing: counter-based RNG streams and thread-count resolution."""

from __future__ import annotations

import os

import numpy as np

THREADS_ENV_VAR = "HETRO_THREADS"


def philox_stream(seed: int, *key: int) -> np.random.Generator:
    """A counter-based generator for the stream identified by ``key``.

    Distinct keys under the same seed give statistically independent
    streams, and a stream's output depends only on (seed, key), never
    on how many other streams exist or which thread draws from it.
    """
    seq = np.random.SeedSequence(seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(seed: int, index: int) -> int:
    """A stable 64-bit child seed for sub-task ``index``."""
    seq = np.random.SeedSequence(seed, spawn_key=(index,))
    return int(seq.generate_state(1, np.uint64)[0])


def resolve_threads(requested: int | None = None) -> int:
    """Worker-thread count: ``requested`` or CPU count, capped by env.

    The HETRO_THREADS environment variable, when set to a positive
    integer, caps the result; other values are ignored.
    """
    count = requested if requested is not None and requested >= 1 else None
    if count is None:
        count = os.cpu_count() or 1
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw is not None:
        try:
            cap = int(raw)
        except ValueError:
            cap = 0
        if cap >= 1:
            count = min(count, cap)
    return count

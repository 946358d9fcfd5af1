"""Deterministic child-stream derivation from one master seed.

Every consumer of randomness gets its own tagged SeedSequence so that adding
or reordering draws in one place never perturbs another.
"""

from __future__ import annotations

import numpy as np

_TAGS = {
    "render": 11,
    "embed": 12,
    "split": 13,
    "scene": 14,
    "init": 15,
    "shuffle": 16,
    "contrast": 17,
    "anneal": 18,
}


def child_seq(master: int, tag: str, *extra: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), _TAGS[tag], *[int(e) for e in extra]])


def child_rng(master: int, tag: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng(child_seq(master, tag, *extra))

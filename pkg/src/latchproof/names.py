"""Fresh-name generation.

Names carry a '#' which the surface syntax never produces for user
identifiers, so generated names cannot collide with parsed programs.
Counters are monotone per prefix, giving deterministic traces for a
fixed seed (LATCHPROOF_SEED offsets the counters).
"""

from __future__ import annotations

import os


class FreshGen:
    def __init__(self, seed: int | None = None):
        if seed is None:
            seed = int(os.environ.get("LATCHPROOF_SEED", "0"))
        self._base = seed
        self._counters: dict[str, int] = {}

    def fresh(self, prefix: str) -> str:
        n = self._counters.get(prefix, self._base) + 1
        self._counters[prefix] = n
        return f"{prefix}#{n}"

    def reset(self, seed: int | None = None):
        if seed is not None:
            self._base = seed
        self._counters.clear()


_default = FreshGen()


def fresh(prefix: str) -> str:
    return _default.fresh(prefix)


def reset_fresh(seed: int | None = None):
    _default.reset(seed)


def default_gen() -> FreshGen:
    return _default

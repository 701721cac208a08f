"""Named, independent random substreams derived from one master seed.

Each subsystem (exploration, measurement noise, channel noise, ...) draws
from its own stream, so two runs that differ in one subsystem keep identical
draws in every other one.
"""

from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("start", "exploration", "drift", "measurement", "inter", "channel", "shadowing", "outliers")


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    key = (zlib.crc32(name.encode("utf-8")),) + tuple(int(e) for e in extra)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))


class RandomStreams:
    """Lazily created generators keyed by subsystem name."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def __getitem__(self, name: str) -> np.random.Generator:
        gen = self._streams.get(name)
        if gen is None:
            gen = substream(self.seed, name)
            self._streams[name] = gen
        return gen

    def per_robot(self, name: str, robot: int) -> np.random.Generator:
        key = f"{name}/{robot}"
        gen = self._streams.get(key)
        if gen is None:
            gen = substream(self.seed, name, robot)
            self._streams[key] = gen
        return gen

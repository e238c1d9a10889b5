"""Counter-based random streams.

Every Bernoulli decision of a walk is a pure function of
``(master_seed, stream_index, crossing_index)``: the stream key selects a
Philox key and the crossing index addresses the counter directly, so any
run can be replayed (or resumed at any crossing) without replaying the past.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
# Philox4x64 emits four 64-bit words per counter increment
_WORDS_PER_BLOCK = 4


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_index: int = 0

    @property
    def key(self) -> int:
        return (int(self.master_seed) & _MASK64) | ((int(self.stream_index) & _MASK64) << 64)

    def generator(self, start: int = 0) -> np.random.Generator:
        """Generator positioned so its next double is draw number ``start``."""
        bg = np.random.Philox(key=self.key)
        block, offset = divmod(int(start), _WORDS_PER_BLOCK)
        if block:
            bg.advance(block)
        gen = np.random.Generator(bg)
        if offset:
            gen.random(offset)
        return gen

    def uniforms(self, start: int, count: int) -> np.ndarray:
        """Draws ``start, ..., start + count - 1`` of this stream."""
        return self.generator(start).random(int(count))

    def transmissions(self, start: int, count: int, p: float) -> np.ndarray:
        """Bernoulli(1 - p) indicators ``eps_n`` (1 = transmit) for crossings ``start..``."""
        return self.uniforms(start, count) < (1.0 - p)

    def child(self, index: int) -> "RngStream":
        return RngStream(self.master_seed, index)


def transmission_block(seed: int, streams, start: int, count: int, p: float) -> np.ndarray:
    """``(len(streams), count)`` boolean array of transmissions for several streams."""
    streams = list(streams)
    out = np.empty((len(streams), int(count)), dtype=bool)
    thresh = 1.0 - p
    for row, s in enumerate(streams):
        out[row] = RngStream(seed, s).uniforms(start, count) < thresh
    return out

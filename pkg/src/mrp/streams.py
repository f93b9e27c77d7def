"""Uniform random streams consumed by the path simulator.

Replication ``r`` under seed ``s`` reads a Philox counter stream keyed by
``(s, r)``, so any replication can be regenerated on its own and results
do not depend on how replications are spread across workers.
"""

from __future__ import annotations

from typing import Protocol

import numpy as np

__all__ = ["UniformStream", "PhiloxStream", "SequenceStream", "ConstantStream"]

_MASK64 = (1 << 64) - 1
_SCALE53 = 2.0**-53


class UniformStream(Protocol):
    def uniforms(self, n: int) -> np.ndarray:
        """Next ``n`` draws, each strictly inside ``(0, 1)``."""


class PhiloxStream:
    def __init__(self, seed: int, index: int):
        key = np.array([seed & _MASK64, index & _MASK64], dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key)

    def uniforms(self, n: int) -> np.ndarray:
        raw = self._bitgen.random_raw(n)
        # top 53 bits, shifted by half an ulp: never 0, never 1
        return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _SCALE53


class SequenceStream:
    """Replays a fixed list of draws; raises once exhausted."""

    def __init__(self, values):
        self._values = np.asarray(values, dtype=float)
        self._pos = 0

    def uniforms(self, n: int) -> np.ndarray:
        if self._pos + n > self._values.size:
            raise IndexError("sequence stream exhausted")
        out = self._values[self._pos : self._pos + n]
        self._pos += n
        return out.copy()


class ConstantStream:
    def __init__(self, value: float):
        if not 0 < value < 1:
            raise ValueError("constant draw must lie in (0, 1)")
        self.value = float(value)

    def uniforms(self, n: int) -> np.ndarray:
        return np.full(n, self.value)

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping

import numpy as np


@dataclass(frozen=True)
class Seismogram:
    """Uniformly sampled trace; sample ``n`` is at ``t = n * dt``."""

    dt: float
    samples: np.ndarray = field(repr=False)
    receiver_index: int = 0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(s)):
            raise ValueError(f"trace {self.receiver_index} contains NaN or Inf")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "samples", s)

    @property
    def nt(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.nt)

    @property
    def energy(self) -> float:
        """Riemann sum of ``|s|^2 dt``."""
        return float(np.dot(self.samples, self.samples) * self.dt)

    def with_samples(self, samples) -> "Seismogram":
        return Seismogram(self.dt, samples, self.receiver_index)

    def shifted(self, n: int) -> "Seismogram":
        """Delay by ``n`` samples (advance if negative), zero-padding the gap."""
        out = np.zeros_like(self.samples)
        if n >= 0:
            out[n:] = self.samples[: self.nt - n] if n < self.nt else 0.0
        else:
            out[: self.nt + n] = self.samples[-n:]
        return self.with_samples(out)


class SeismogramSet(Mapping):
    """Traces keyed by 1-based receiver index, all sharing ``dt`` and ``nt``."""

    def __init__(self, traces: Iterable[Seismogram]):
        self._traces: Dict[int, Seismogram] = {}
        for tr in traces:
            self._traces[tr.receiver_index] = tr
        if not self._traces:
            raise ValueError("empty seismogram set")
        first = next(iter(self._traces.values()))
        for tr in self._traces.values():
            if tr.nt != first.nt or abs(tr.dt - first.dt) > 1e-12 * first.dt:
                raise ValueError("all traces in a set must share dt and nt")
        self.dt = first.dt
        self.nt = first.nt

    def __getitem__(self, r: int) -> Seismogram:
        return self._traces[r]

    def __iter__(self):
        return iter(sorted(self._traces))

    def __len__(self):
        return len(self._traces)

    def __repr__(self):
        return f"SeismogramSet(n={len(self)}, dt={self.dt:g}, nt={self.nt})"

    @property
    def indices(self):
        return tuple(self)

    def matrix(self) -> np.ndarray:
        return np.stack([self._traces[r].samples for r in self])

    @classmethod
    def from_matrix(cls, dt: float, data: np.ndarray, indices=None) -> "SeismogramSet":
        data = np.atleast_2d(np.asarray(data, dtype=float))
        if indices is None:
            indices = range(1, data.shape[0] + 1)
        return cls(Seismogram(dt, row, int(r)) for r, row in zip(indices, data))

    def subset(self, indices) -> "SeismogramSet":
        return SeismogramSet(self._traces[r] for r in indices)


@dataclass(frozen=True)
class FieldHistory:
    """Wavefield value and spatial gradient ``(d/dx, d/dz)`` at one point for every step."""

    dt: float
    values: np.ndarray = field(repr=False)
    gradient: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        g = np.asarray(self.gradient, dtype=float)
        if g.shape != (v.size, 2):
            raise ValueError("gradient must have shape (nt, 2)")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "gradient", g)

    @property
    def nt(self) -> int:
        return self.values.size

    def reversed(self) -> "FieldHistory":
        return FieldHistory(self.dt, self.values[::-1].copy(), self.gradient[::-1].copy())

"""Per-iteration objective traces shared by the variational fitters."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class StopReason(str, enum.Enum):
    DELTA_THRESHOLD = "DeltaThreshold"
    MAX_ITERS = "MaxIters"
    ELBO_REVERSED = "ElboReversed"


@dataclass(frozen=True)
class ElboTrace:
    """ELBO value after every iteration plus the reason the loop ended.

    ``deltas`` has one entry fewer than ``values``: ``deltas[t - 1]`` is
    ``values[t] - values[t - 1]``.
    """

    values: tuple[float, ...]
    stopped_because: StopReason
    deltas: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "stopped_because", StopReason(self.stopped_because))
        object.__setattr__(self, "deltas", tuple(float(d) for d in np.diff(vals)))

    def __len__(self):
        return len(self.values)

    @property
    def final(self) -> float:
        return self.values[-1] if self.values else float("nan")

    def is_monotone(self, slack: float = 1e-8) -> bool:
        return all(d >= -slack for d in self.deltas)

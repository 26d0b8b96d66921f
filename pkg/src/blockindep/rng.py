"""Counter-based random streams keyed by ``(seed, replication index)``.

Every replication draws from its own Philox stream, so a Monte Carlo run gives
the same numbers whatever the order or process its replications execute in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["McConfig", "stream", "scenario_stream"]

_MASK64 = (1 << 64) - 1
# replication keys never reach this value, so scenario-level draws have their own stream
_SCENARIO_KEY = _MASK64


@dataclass(frozen=True)
class McConfig:
    reps: int = 1000
    seed: int = 0
    alpha: float = 0.05
    parallelism: int = 1

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise ValueError(f"reps must be >= 1, got {self.reps}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.parallelism < 1:
            raise ValueError(f"parallelism must be >= 1, got {self.parallelism}")


def stream(seed: int, rep: int) -> np.random.Generator:
    key = np.array([seed & _MASK64, rep & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def scenario_stream(seed: int) -> np.random.Generator:
    """Stream for draws made once per scenario (population blocks, sparsity masks)."""
    return stream(seed, _SCENARIO_KEY)

"""Problem dimensions, derived ratios and the containers shared across the package."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "DimensionError",
    "MeanMode",
    "Dims",
    "RatioSet",
    "PartitionedCov",
    "TestOutcome",
    "STATISTICS",
    "ratios",
    "validate",
    "load_csv",
]

STATISTICS = ("LR", "W", "LH", "BNP", "JIANG", "YANG")


class DimensionError(ValueError):
    """Raised when (n, p, p1) cannot support the Fisher-matrix construction."""


class MeanMode(str, Enum):
    KNOWN_ZERO = "known-zero"
    ESTIMATED = "estimated"


@dataclass(frozen=True)
class Dims:
    n: int
    p: int
    p1: int

    @property
    def p2(self) -> int:
        return self.p - self.p1

    def effective(self, mean_mode: MeanMode | str = MeanMode.KNOWN_ZERO) -> "Dims":
        """Dims with the sample size the null theory should see.

        An estimated mean costs one degree of freedom, so every downstream
        formula runs with ``n - 1``.
        """
        if MeanMode(mean_mode) is MeanMode.ESTIMATED:
            return Dims(self.n - 1, self.p, self.p1)
        return self


def validate(dims: Dims) -> None:
    """Raise :class:`DimensionError` naming the first violated inequality."""
    n, p, p1 = dims.n, dims.p, dims.p1
    for name, value in (("n", n), ("p", p), ("p1", p1)):
        if int(value) != value:
            raise DimensionError(f"{name} must be an integer, got {value!r}")
    if p1 < 1:
        raise DimensionError(f"1 <= p1 violated: p1={p1}")
    if not p1 < p:
        raise DimensionError(f"p1 < p violated: p1={p1}, p={p}")
    if not p1 < n:
        raise DimensionError(f"p1 < n violated: p1={p1}, n={n}")
    if not p - p1 < n - p1:
        raise DimensionError(
            f"p - p1 < n - p1 violated: {p - p1} < {n - p1} is false"
        )


@dataclass(frozen=True)
class RatioSet:
    """Dimension ratios driving every calibration constant.

    ``gamma1 = (p - p1) / p1``, ``gamma2 = (p - p1) / (n - p1)``,
    ``h = sqrt(gamma1 + gamma2 - gamma1 * gamma2)``, ``c1 = p1 / n``, ``c = p / n``.
    """

    gamma1: float
    gamma2: float
    h: float
    c1: float
    c: float

    @classmethod
    def from_gammas(
        cls, gamma1: float, gamma2: float, c1: float | None = None, c: float | None = None
    ) -> "RatioSet":
        """Build from limiting ratios.

        ``c1`` and ``c`` are only needed by the alternative-hypothesis solver;
        when omitted they are recovered from ``gamma1 = (c - c1) / c1`` and
        ``gamma2 = (c - c1) / (1 - c1)``.
        """
        if not gamma1 > 0:
            raise DimensionError(f"gamma1 > 0 violated: {gamma1}")
        if not 0 < gamma2 < 1:
            raise DimensionError(f"0 < gamma2 < 1 violated: {gamma2}")
        if c1 is None:
            # c - c1 = gamma1 * c1 = gamma2 * (1 - c1)
            c1 = gamma2 / (gamma1 + gamma2)
        if c is None:
            c = c1 * (1.0 + gamma1)
        h = math.sqrt(gamma1 + gamma2 - gamma1 * gamma2)
        return cls(float(gamma1), float(gamma2), h, float(c1), float(c))

    @property
    def c2(self) -> float:
        return self.c - self.c1


def ratios(dims: Dims) -> RatioSet:
    validate(dims)
    n, p, p1 = dims.n, dims.p, dims.p1
    p2 = p - p1
    gamma1 = p2 / p1
    gamma2 = p2 / (n - p1)
    h = math.sqrt(gamma1 + gamma2 - gamma1 * gamma2)
    return RatioSet(gamma1, gamma2, h, p1 / n, p / n)


@dataclass(frozen=True)
class PartitionedCov:
    S11: NDArray[np.float64]
    S12: NDArray[np.float64]
    S22: NDArray[np.float64]

    @property
    def S21(self) -> NDArray[np.float64]:
        return self.S12.T

    @property
    def p1(self) -> int:
        return self.S11.shape[0]

    @property
    def p(self) -> int:
        return self.S11.shape[0] + self.S22.shape[0]

    @classmethod
    def from_matrix(cls, S: NDArray[np.float64], p1: int) -> "PartitionedCov":
        S = np.asarray(S, dtype=np.float64)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError(f"covariance must be square, got shape {S.shape}")
        if not 1 <= p1 < S.shape[0]:
            raise DimensionError(f"p1={p1} outside [1, {S.shape[0] - 1}]")
        S = 0.5 * (S + S.T)
        return cls(S[:p1, :p1].copy(), S[:p1, p1:].copy(), S[p1:, p1:].copy())

    def full(self) -> NDArray[np.float64]:
        return np.block([[self.S11, self.S12], [self.S21, self.S22]])


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False  # keep pytest from collecting this as a test class

    statistic_id: str
    raw: float
    standardized: float
    p_value: float
    reject: bool
    alpha: float

    def to_dict(self) -> dict:
        return {
            "statistic_id": self.statistic_id,
            "raw": self.raw,
            "standardized": self.standardized,
            "p_value": self.p_value,
            "reject": self.reject,
            "alpha": self.alpha,
        }


def load_csv(
    path: str | Path, *, header: bool = False, delimiter: str = ","
) -> NDArray[np.float64]:
    """Read an n x p observation matrix (one observation per row)."""
    data = np.loadtxt(path, delimiter=delimiter, skiprows=1 if header else 0, ndmin=2)
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{path}: non-finite entries in data")
    return data

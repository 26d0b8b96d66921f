"""From an observation matrix to test decisions.

The null-pivotal quantity behind every statistic is the spectrum of the Fisher
matrix ``W T^{-1}`` with

    W = S21 S11^{-1} S12 / p1,    T = (S22 - S21 S11^{-1} S12) / (n - p1).

Its eigenvalues are obtained from the symmetric-definite pencil ``(W, T)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg as sla
from numpy.typing import ArrayLike, NDArray
from scipy.stats import norm

from .calibration import NullCalibration
from .core import Dims, MeanMode, PartitionedCov, RatioSet, TestOutcome, ratios
from .rng import McConfig, stream

__all__ = [
    "BlockLinAlgError",
    "FisherPair",
    "sample_cov",
    "fisher_pair",
    "stat_wilks",
    "stat_lh",
    "stat_bnp",
    "stat_lr",
    "stat_lr_logdet",
    "stat_jiang",
    "stat_yang",
    "decide",
    "decide_mc",
    "REJECT_LOW",
    "raw_statistic",
    "mc_null_draws",
    "mc_critical_value",
]

# statistics whose null is rejected for small standardized values
REJECT_LOW = frozenset({"LR"})

CLAMP = 1e-10


class BlockLinAlgError(np.linalg.LinAlgError):
    """A covariance block needed by the Fisher construction is singular or indefinite."""


@dataclass(frozen=True)
class FisherPair:
    W: NDArray[np.float64]
    T: NDArray[np.float64]
    eigs: NDArray[np.float64]

    @property
    def size(self) -> int:
        return self.eigs.size


def sample_cov(data: ArrayLike, mean_mode: MeanMode | str = MeanMode.KNOWN_ZERO) -> NDArray[np.float64]:
    """``X^T X / n`` for known-zero mean; centred with divisor ``n - 1`` otherwise."""
    X = np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if not np.all(np.isfinite(X)):
        raise ValueError("data contains non-finite entries")
    n = X.shape[0]
    if MeanMode(mean_mode) is MeanMode.ESTIMATED:
        if n < 2:
            raise ValueError("estimated mean needs at least two observations")
        X = X - X.mean(axis=0)
        S = X.T @ X / (n - 1)
    else:
        if n < 1:
            raise ValueError("no observations")
        S = X.T @ X / n
    return 0.5 * (S + S.T)


def _cholesky(A: NDArray[np.float64], block: str) -> NDArray[np.float64]:
    try:
        return sla.cholesky(A, lower=True)
    except np.linalg.LinAlgError:
        raise BlockLinAlgError(f"{block} is not positive definite") from None


def _clamp(v: NDArray[np.float64]) -> NDArray[np.float64]:
    floor = -CLAMP * max(1.0, float(np.max(v)) if v.size else 1.0)
    if v.size and v.min() < floor:
        raise BlockLinAlgError(f"eigenvalue {v.min():.3e} below clamp threshold {floor:.3e}")
    return np.clip(v, 0.0, None)


def fisher_pair(S: PartitionedCov, dims: Dims) -> FisherPair:
    """Build ``W``, ``T`` and the descending eigenvalues of ``W T^{-1}``.

    ``S`` may be any positive multiple of the sample covariance; the spectrum
    of ``W T^{-1}`` does not see the scale.
    """
    p1, p2 = dims.p1, dims.p - dims.p1
    if S.S11.shape != (p1, p1) or S.S22.shape != (p2, p2):
        raise ValueError(f"block shapes {S.S11.shape}/{S.S22.shape} do not match dims {dims}")
    L11 = _cholesky(S.S11, "S11")
    Y = sla.solve_triangular(L11, S.S12, lower=True)
    Wh = Y.T @ Y
    Th = S.S22 - Wh
    W = 0.5 * (Wh + Wh.T) / p1
    T = 0.5 * (Th + Th.T) / (dims.n - p1)
    L = _cholesky(T, "S22.1 (Schur complement)")
    M = sla.solve_triangular(L, W, lower=True)
    M = sla.solve_triangular(L, M.T, lower=True)
    M = 0.5 * (M + M.T)
    v = np.linalg.eigvalsh(M)[::-1]
    return FisherPair(W, T, _clamp(v))


def stat_wilks(fp: FisherPair) -> float:
    return float(np.sum(np.log1p(fp.eigs)))


def stat_lh(fp: FisherPair) -> float:
    return float(np.sum(fp.eigs))


def stat_bnp(fp: FisherPair) -> float:
    return float(np.sum(fp.eigs / (1.0 + fp.eigs)))


def stat_lr(fp: FisherPair, r: RatioSet) -> float:
    """Log of the likelihood-ratio criterion, ``-sum log(1 + (gamma2/gamma1) v_i)``."""
    return float(-np.sum(np.log1p(r.gamma2 / r.gamma1 * fp.eigs)))


def _logdet(A: NDArray[np.float64], block: str) -> float:
    L = _cholesky(A, block)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def stat_lr_logdet(S: PartitionedCov) -> float:
    """``log det S - log det S11 - log det S22`` from Cholesky factors."""
    return _logdet(S.full(), "S") - _logdet(S.S11, "S11") - _logdet(S.S22, "S22")


def stat_jiang(fp: FisherPair, r: RatioSet) -> float:
    k = r.gamma1 / r.gamma2
    return float(np.sum(fp.eigs / (k + fp.eigs)))


def stat_yang(S: PartitionedCov, t: float = 0.0) -> float:
    """Trace of ``(S22 + t I)^{-1} S21 S11^{-1} S12``."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    L11 = _cholesky(S.S11, "S11")
    Y = sla.solve_triangular(L11, S.S12, lower=True)
    A = S.S22 + t * np.eye(S.S22.shape[0])
    L = _cholesky(A, "S22 + tI")
    Z = sla.solve_triangular(L, Y.T, lower=True)
    return float(np.sum(Z * Z))


def decide(raw: float, cal: NullCalibration, dims: Dims, alpha: float, statistic_id: str | None = None) -> TestOutcome:
    """Standardize ``raw`` with ``cal`` and apply the one-sided normal test.

    LR rejects for small values, the trace criteria for large ones.
    """
    sid = (statistic_id or cal.statistic_id).upper()
    if sid != cal.statistic_id:
        raise ValueError(f"statistic {sid} does not match calibration {cal.statistic_id}")
    z = (raw - (dims.p - dims.p1) * cal.s - cal.mu) / cal.sigma
    if sid in REJECT_LOW:
        p_value = float(norm.cdf(z))
        reject = bool(z < -norm.ppf(1.0 - alpha))
    else:
        p_value = float(norm.sf(z))
        reject = bool(z > norm.ppf(1.0 - alpha))
    return TestOutcome(sid, float(raw), float(z), p_value, reject, float(alpha))


def decide_mc(raw: float, null_draws: Iterable[float], alpha: float, statistic_id: str) -> TestOutcome:
    """Upper-tail test against simulated null draws of the raw statistic.

    Rejects when ``raw`` exceeds the empirical ``1 - alpha`` quantile; the
    p-value is ``(1 + #{draw >= raw}) / (reps + 1)``.
    """
    draws = np.asarray(list(null_draws), dtype=np.float64)
    if alpha >= 1.0:
        crit = -math.inf
    elif alpha <= 0.0:
        crit = math.inf
    else:
        crit = float(np.quantile(draws, 1.0 - alpha))
    sd = float(draws.std(ddof=1)) if draws.size > 1 else 1.0
    z = (raw - float(draws.mean())) / sd if sd > 0 else 0.0
    p_value = float((1 + np.sum(draws >= raw)) / (draws.size + 1))
    return TestOutcome(statistic_id.upper(), float(raw), z, p_value, bool(raw > crit), float(alpha))


def raw_statistic(statistic_id: str, S: PartitionedCov, dims: Dims, *, fp: FisherPair | None = None, t: float = 0.0) -> float:
    """Raw value of any supported statistic for the partitioned covariance ``S``."""
    sid = statistic_id.upper()
    if sid == "YANG":
        return stat_yang(S, t)
    fp = fp if fp is not None else fisher_pair(S, dims)
    if sid == "W":
        return stat_wilks(fp)
    if sid == "LH":
        return stat_lh(fp)
    if sid == "BNP":
        return stat_bnp(fp)
    r = ratios(dims)
    if sid == "LR":
        return stat_lr(fp, r)
    if sid == "JIANG":
        return stat_jiang(fp, r)
    raise ValueError(f"unknown statistic {statistic_id!r}")


def mc_null_draws(
    statistic_id: str,
    dims: Dims,
    mc: McConfig,
    *,
    sigma: NDArray[np.float64] | None = None,
    t: float = 0.0,
) -> NDArray[np.float64]:
    """Raw statistic over ``mc.reps`` Gaussian samples with block-diagonal ``sigma``.

    ``sigma`` defaults to the identity. Replication ``k`` uses the stream
    keyed by ``(mc.seed, k)``. Replications whose factorizations fail are
    dropped.
    """
    p1 = dims.p1
    if sigma is None:
        chol = None
    else:
        sigma = np.asarray(sigma, dtype=np.float64)
        if np.any(sigma[:p1, p1:] != 0):
            raise ValueError("null draws need a block-diagonal sigma")
        chol = _cholesky(sigma, "Sigma")
    out = []
    for k in range(mc.reps):
        Z = stream(mc.seed, k).standard_normal((dims.n, dims.p))
        X = Z if chol is None else Z @ chol.T
        S = PartitionedCov.from_matrix(sample_cov(X), p1)
        try:
            out.append(raw_statistic(statistic_id, S, dims, t=t))
        except np.linalg.LinAlgError:
            continue
    return np.asarray(out)


def mc_critical_value(
    statistic_id: str,
    dims: Dims,
    mc: McConfig,
    *,
    sigma: NDArray[np.float64] | None = None,
    t: float = 0.0,
) -> float:
    """Empirical ``1 - alpha`` quantile of the simulated null statistic (JIANG or YANG)."""
    if statistic_id.upper() not in ("JIANG", "YANG"):
        raise ValueError(f"MC calibration is only used for JIANG/YANG, got {statistic_id!r}")
    if mc.reps < 200:
        raise ValueError(f"need at least 200 null replications, got {mc.reps}")
    draws = mc_null_draws(statistic_id, dims, mc, sigma=sigma, t=t)
    return float(np.quantile(draws, 1.0 - mc.alpha))

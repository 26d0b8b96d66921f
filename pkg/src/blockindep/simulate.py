"""Scenario generators and the Monte Carlo engine for level and power studies.

Replication ``k`` of a run with seed ``s`` draws its data from the Philox
stream keyed by ``(s, k)``; population matrices are drawn once per scenario
from a separate stream. Results are therefore identical for any worker count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray
from scipy.optimize import isotonic_regression
from scipy.stats import kstest
from threadpoolctl import threadpool_limits

from .calibration import calibration_for
from .core import Dims, MeanMode, PartitionedCov, ratios, validate
from .rng import McConfig, scenario_stream, stream
from .statistics import (
    REJECT_LOW,
    fisher_pair,
    raw_statistic,
    sample_cov,
)

__all__ = [
    "SimulationError",
    "NullScenario",
    "AltScenario",
    "StatSpec",
    "parse_stats",
    "haar_orthogonal",
    "build_sigma",
    "r_matrix",
    "run_null",
    "run_power",
    "NullResult",
    "PowerResult",
]

log = logging.getLogger(__name__)

FAILURE_THRESHOLD = 0.01
PIVOT_TOL = 1e-10


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class StatSpec:
    """A statistic to evaluate; ``t`` is the ridge for YANG."""

    name: str
    t: float = 0.0

    @property
    def label(self) -> str:
        if self.name == "YANG":
            return f"YANG_t{self.t:g}"
        return self.name

    @property
    def mc_calibrated(self) -> bool:
        return self.name in ("JIANG", "YANG")


def parse_stats(items: str | Sequence[str], yang_t: Sequence[float] = (10.0, 40.0)) -> list[StatSpec]:
    """Parse ``"LH,BNP,YANG:10"``-style lists; bare ``YANG`` expands over ``yang_t``."""
    if isinstance(items, str):
        items = [x for x in items.replace(" ", "").split(",") if x]
    out: list[StatSpec] = []
    for item in items:
        name, _, t = item.upper().partition(":")
        if name == "ALL":
            out += [StatSpec(s) for s in ("LR", "W", "LH", "BNP", "JIANG")]
            out += [StatSpec("YANG", float(v)) for v in yang_t]
        elif name == "YANG":
            out += [StatSpec("YANG", float(t))] if t else [StatSpec("YANG", float(v)) for v in yang_t]
        elif name in ("LR", "W", "LH", "BNP", "JIANG"):
            out.append(StatSpec(name))
        else:
            raise ValueError(f"unknown statistic {item!r}")
    return out


@dataclass(frozen=True)
class NullScenario:
    dims: Dims
    block1_range: tuple[float, float] = (0.0, 1.0)
    block2_range: tuple[float, float] = (1.0, 10.0)
    seed: int = 0
    mean_mode: MeanMode = MeanMode.KNOWN_ZERO


@dataclass(frozen=True)
class AltScenario:
    dims: Dims
    sigma: float = 40.0
    sigma12: float = 0.0
    sparsity: float = 0.0
    seed: int = 0
    mean_mode: MeanMode = MeanMode.KNOWN_ZERO

    @property
    def rho(self) -> float:
        return self.sigma12 / self.sigma

    def with_rho(self, rho: float) -> "AltScenario":
        return replace(self, sigma12=rho * self.sigma)


def haar_orthogonal(dim: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
    signs of ``diag(R)`` folded into ``Q``."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    A = rng.standard_normal((dim, dim))
    Q, R = np.linalg.qr(A)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def _uniform_eigs(lo: float, hi: float, k: int, rng: np.random.Generator) -> NDArray[np.float64]:
    if lo == hi:
        return np.full(k, float(lo))
    # (lo, hi] so a zero lower end never yields a singular block
    return hi - (hi - lo) * rng.random(k)


def _sparsity_mask(p1: int, p2: int, frac: float, rng: np.random.Generator) -> NDArray[np.float64]:
    mask = np.ones(p1 * p2)
    k = int(round(frac * p1 * p2))
    if k:
        mask[rng.choice(p1 * p2, size=k, replace=False)] = 0.0
    return mask.reshape(p1, p2)


def build_sigma(scenario: NullScenario | AltScenario) -> NDArray[np.float64]:
    """Population covariance for a scenario; raises if it is not positive definite."""
    d = scenario.dims
    validate(d)
    p1, p2 = d.p1, d.p - d.p1
    rng = scenario_stream(scenario.seed)
    if isinstance(scenario, NullScenario):
        blocks = []
        for k, (lo, hi) in ((p1, scenario.block1_range), (p2, scenario.block2_range)):
            Q = haar_orthogonal(k, rng)
            lam = _uniform_eigs(lo, hi, k, rng)
            B = (Q * lam) @ Q.T
            blocks.append(0.5 * (B + B.T))
        sigma = sla.block_diag(*blocks)
    else:
        mask = _sparsity_mask(p1, p2, scenario.sparsity, rng)
        S12 = scenario.sigma12 * mask
        sigma = np.block([[scenario.sigma * np.eye(p1), S12], [S12.T, scenario.sigma * np.eye(p2)]])
    try:
        L = sla.cholesky(sigma, lower=True)
    except np.linalg.LinAlgError:
        raise SimulationError("population covariance is not positive definite") from None
    # a boundary Sigma can pass the factorization on round-off alone
    if np.min(np.diag(L)) ** 2 <= PIVOT_TOL * np.max(np.diag(sigma)):
        raise SimulationError("population covariance is numerically singular")
    return sigma


def r_matrix(sigma: NDArray[np.float64], p1: int) -> NDArray[np.float64]:
    """Coupling matrix ``S22.1^{-1/2} S21 S11^{-1} S12 S22.1^{-1/2}`` of a population covariance."""
    S11, S12, S22 = sigma[:p1, :p1], sigma[:p1, p1:], sigma[p1:, p1:]
    A = S12.T @ np.linalg.solve(S11, S12)
    schur = S22 - A
    lam, V = np.linalg.eigh(schur)
    inv_half = (V / np.sqrt(lam)) @ V.T
    R = inv_half @ A @ inv_half
    return 0.5 * (R + R.T)


# ---------------------------------------------------------------------------
# replication engine


@dataclass(frozen=True)
class _Job:
    chol: NDArray[np.float64]
    dims: Dims
    mean_mode: MeanMode
    stats: tuple[StatSpec, ...]
    seed: int


def _replicate(job: _Job, k: int) -> NDArray[np.float64] | None:
    d = job.dims
    X = stream(job.seed, k).standard_normal((d.n, d.p)) @ job.chol.T
    eff = d.effective(job.mean_mode)
    S = PartitionedCov.from_matrix(sample_cov(X, job.mean_mode), d.p1)
    try:
        fp = fisher_pair(S, eff)
        return np.array([raw_statistic(s.name, S, eff, fp=fp, t=s.t) for s in job.stats])
    except np.linalg.LinAlgError:
        return None


def _run_chunk(job: _Job, ks: range) -> list[NDArray[np.float64] | None]:
    with threadpool_limits(limits=1):
        return [_replicate(job, k) for k in ks]


def _run_reps(job: _Job, reps: int, jobs: int) -> tuple[NDArray[np.float64], int]:
    """Raw statistics, one row per successful replication (in replication order)."""
    if jobs <= 1:
        rows = _run_chunk(job, range(reps))
    else:
        size = math.ceil(reps / jobs)
        chunks = [range(i, min(i + size, reps)) for i in range(0, reps, size)]
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_run_chunk, [job] * len(chunks), chunks))
        rows = [row for part in parts for row in part]
    good = [r for r in rows if r is not None]
    failed = reps - len(good)
    if failed > FAILURE_THRESHOLD * reps:
        raise SimulationError(f"{failed}/{reps} replications failed numerically")
    if failed:
        log.warning("%d/%d replications failed and were excluded", failed, reps)
    return np.asarray(good).reshape(len(good), len(job.stats)), failed


def _calibration_seed(seed: int) -> int:
    return int(np.random.SeedSequence([seed, 1]).generate_state(1, dtype=np.uint64)[0])


def _mc_null(spec: StatSpec, dims: Dims, mc: McConfig, sigma: NDArray[np.float64], mean_mode: MeanMode, reps: int):
    """Null draws of an MC-calibrated statistic under the block-diagonal part of ``sigma``."""
    p1 = dims.p1
    null_sigma = sla.block_diag(sigma[:p1, :p1], sigma[p1:, p1:])
    job = _Job(sla.cholesky(null_sigma, lower=True), dims, mean_mode, (spec,), _calibration_seed(mc.seed))
    draws, _ = _run_reps(job, reps, mc.parallelism)
    return draws[:, 0]


def _standardize(spec: StatSpec, raw: NDArray[np.float64], dims: Dims, mean_mode: MeanMode, null_draws=None):
    """Centre and scale by the calibration constants, or by null draws for MC-calibrated statistics."""
    eff = dims.effective(mean_mode)
    if spec.mc_calibrated:
        mu, sd = float(np.mean(null_draws)), float(np.std(null_draws, ddof=1))
        return (raw - mu) / sd
    cal = calibration_for(spec.name, ratios(eff))
    return (raw - eff.p2 * cal.s - cal.mu) / cal.sigma


def _rejections(spec: StatSpec, z: NDArray[np.float64], alpha: float, null_z=None) -> NDArray[np.bool_]:
    if alpha >= 1.0:
        return np.ones(z.shape, dtype=bool)
    if alpha <= 0.0:
        return np.zeros(z.shape, dtype=bool)
    if spec.mc_calibrated:
        return z > np.quantile(null_z, 1.0 - alpha)
    from scipy.stats import norm

    u = norm.ppf(1.0 - alpha)
    return z < -u if spec.name in REJECT_LOW else z > u


@dataclass
class NullResult:
    scenario: NullScenario
    mc: McConfig
    stats: list[StatSpec]
    standardized: dict[str, NDArray[np.float64]]
    levels: dict[str, float]
    failed: int

    def se(self, label: str) -> float:
        p = self.levels[label]
        return math.sqrt(p * (1.0 - p) / self.standardized[label].size)

    def ks(self, label: str) -> float:
        return float(kstest(self.standardized[label], "norm").statistic)

    def histogram(self, label: str, edges: NDArray[np.float64] | None = None):
        edges = np.linspace(-5.0, 5.0, 41) if edges is None else edges
        counts, edges = np.histogram(self.standardized[label], bins=edges)
        return 0.5 * (edges[:-1] + edges[1:]), counts

    def rows(self) -> list[dict]:
        out = []
        for s in self.stats:
            z = self.standardized[s.label]
            out.append(
                {
                    "statistic": s.label,
                    "n": self.scenario.dims.n,
                    "p": self.scenario.dims.p,
                    "p1": self.scenario.dims.p1,
                    "alpha": self.mc.alpha,
                    "level": self.levels[s.label],
                    "se": self.se(s.label),
                    "mean": float(np.mean(z)),
                    "sd": float(np.std(z, ddof=1)) if z.size > 1 else float("nan"),
                    "ks": self.ks(s.label),
                    "reps": z.size,
                    "failed": self.failed,
                }
            )
        return out


def run_null(
    scenario: NullScenario,
    stats: Sequence[StatSpec] | str,
    mc: McConfig,
    *,
    calib_reps: int | None = None,
) -> NullResult:
    """Empirical levels and standardized draws under a block-diagonal population."""
    stats = parse_stats(stats) if isinstance(stats, str) else list(stats)
    sigma = build_sigma(scenario)
    job = _Job(sla.cholesky(sigma, lower=True), scenario.dims, MeanMode(scenario.mean_mode), tuple(stats), mc.seed)
    raw, failed = _run_reps(job, mc.reps, mc.parallelism)
    standardized, levels = {}, {}
    for j, s in enumerate(stats):
        null_raw = null_z = None
        if s.mc_calibrated:
            null_raw = _mc_null(s, scenario.dims, mc, sigma, job.mean_mode, calib_reps or mc.reps)
            null_z = _standardize(s, null_raw, scenario.dims, job.mean_mode, null_raw)
        z = _standardize(s, raw[:, j], scenario.dims, job.mean_mode, null_raw)
        standardized[s.label] = z
        levels[s.label] = float(np.mean(_rejections(s, z, mc.alpha, null_z)))
    return NullResult(scenario, mc, stats, standardized, levels, failed)


@dataclass
class PowerResult:
    template: AltScenario
    mc: McConfig
    stats: list[StatSpec]
    rho: NDArray[np.float64]
    power: dict[str, NDArray[np.float64]]
    reps: dict[str, NDArray[np.int64]] = field(default_factory=dict)
    lambda_max_r: NDArray[np.float64] | None = None

    def se(self, label: str) -> NDArray[np.float64]:
        p = self.power[label]
        return np.sqrt(p * (1.0 - p) / self.reps[label])

    def monotone_excess(self, label: str) -> float:
        """Largest deviation from the best nondecreasing fit, in standard errors."""
        p = self.power[label]
        fit = isotonic_regression(p, increasing=True).x
        se = np.maximum(self.se(label), 0.5 / np.asarray(self.reps[label]))
        return float(np.max(np.abs(p - fit) / se))

    def rows(self) -> list[dict]:
        out = []
        for s in self.stats:
            se = self.se(s.label)
            for i, rho in enumerate(self.rho):
                out.append({"statistic": s.label, "rho": float(rho), "power": float(self.power[s.label][i]), "se": float(se[i])})
        return out


def run_power(
    template: AltScenario,
    rho_grid: Sequence[float],
    stats: Sequence[StatSpec] | str,
    mc: McConfig,
    *,
    calib_reps: int | None = None,
) -> PowerResult:
    """Rejection rates over a grid of correlations ``rho = sigma12 / sigma``.

    Every grid point reuses the replication streams of ``mc.seed``. The
    sparsity mask depends only on ``template.seed`` and is shared across the grid.
    """
    stats = parse_stats(stats) if isinstance(stats, str) else list(stats)
    rho_grid = np.asarray(rho_grid, dtype=np.float64)
    mean_mode = MeanMode(template.mean_mode)
    null_sigma = build_sigma(template.with_rho(0.0))
    crit_z: dict[str, tuple] = {}
    for s in stats:
        if s.mc_calibrated:
            null_raw = _mc_null(s, template.dims, mc, null_sigma, mean_mode, calib_reps or mc.reps)
            crit_z[s.label] = (null_raw, _standardize(s, null_raw, template.dims, mean_mode, null_raw))
    power = {s.label: np.zeros(rho_grid.size) for s in stats}
    reps = {s.label: np.zeros(rho_grid.size, dtype=np.int64) for s in stats}
    lam = np.zeros(rho_grid.size)
    for i, rho in enumerate(rho_grid):
        sc = template.with_rho(float(rho))
        sigma = build_sigma(sc)
        lam[i] = float(np.linalg.eigvalsh(r_matrix(sigma, sc.dims.p1))[-1])
        job = _Job(sla.cholesky(sigma, lower=True), sc.dims, mean_mode, tuple(stats), mc.seed)
        raw, _ = _run_reps(job, mc.reps, mc.parallelism)
        for j, s in enumerate(stats):
            null_raw, null_z = crit_z.get(s.label, (None, None))
            z = _standardize(s, raw[:, j], sc.dims, mean_mode, null_raw)
            power[s.label][i] = float(np.mean(_rejections(s, z, mc.alpha, null_z)))
            reps[s.label][i] = z.size
    return PowerResult(template, mc, stats, rho_grid, power, reps, lam)

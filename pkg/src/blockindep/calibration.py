"""Closed-form null calibration for the LR, Wilks, Lawley-Hotelling and
Bartlett-Nanda-Pillai statistics.

Each statistic ``T`` is standardized as ``(T - (p - p1) * s - mu) / sigma``
and compared with the standard normal. All constants use the finite-sample
ratios returned by :func:`blockindep.core.ratios`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import Dims, RatioSet, ratios

__all__ = [
    "CalibrationDomainError",
    "WdPair",
    "NullCalibration",
    "solve_wd",
    "lr_calibration",
    "wilks_calibration",
    "lh_calibration",
    "bnp_calibration",
    "calibrate",
    "calibration_for",
]


class CalibrationDomainError(ValueError):
    """A log argument left the positive half-line: ratios outside the valid regime."""


@dataclass(frozen=True)
class WdPair:
    w: float
    d: float


@dataclass(frozen=True)
class NullCalibration:
    statistic_id: str
    mu: float
    sigma2: float
    s: float

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    def center(self, p2: int) -> float:
        """Value the raw statistic is compared against: ``p2 * s + mu``."""
        return p2 * self.s + self.mu


def _log(x: float, what: str) -> float:
    if not x > 0 or not math.isfinite(x):
        raise CalibrationDomainError(f"log argument {what} = {x!r} is not positive")
    return math.log(x)


def solve_wd(r: RatioSet) -> WdPair:
    """Solve ``w**2 + d**2 = (1 - gamma2)**2 + 1 + h**2``, ``w * d = h``, ``w > d > 0``.

    ``w**2`` and ``d**2`` are the roots of ``t**2 - S t + h**2``. The larger
    root is taken from the quadratic formula and the smaller from the product
    of roots, which keeps ``d`` accurate when ``h`` is small.
    """
    g2, h = r.gamma2, r.h
    total = (1.0 - g2) ** 2 + 1.0 + h * h
    # S^2 - 4h^2 factored so the discriminant is never formed by cancellation
    disc = ((1.0 - g2) ** 2 + (1.0 - h) ** 2) * ((1.0 - g2) ** 2 + (1.0 + h) ** 2)
    w2 = 0.5 * (total + math.sqrt(disc))
    d2 = h * h / w2
    return WdPair(math.sqrt(w2), math.sqrt(d2))


def _gamma1_term(g1: float, w: float, d: float, h: float) -> float:
    """``(1 - gamma1) / gamma1 * log(w - d h)``, zero at ``gamma1 == 1``.

    The same expression serves both sides of ``gamma1 = 1``; for
    ``gamma1 > 1`` it is what agrees with quadrature of the limiting law
    (``log(w - d / h)`` does not).
    """
    if g1 == 1.0:
        return 0.0
    return (1.0 - g1) / g1 * _log(w - d * h, "w - d*h")


def lr_calibration(r: RatioSet) -> NullCalibration:
    g1, g2, h = r.gamma1, r.gamma2, r.h
    ws = h / math.sqrt(g2)
    ds = math.sqrt(g2)
    gap = ws * ws - ds * ds
    mu = -0.5 * _log(gap * h * h / (ws * h - g2 * ds) ** 2, "mu_LR")
    sigma2 = 2.0 * _log(ws * ws / gap, "sigma2_LR")
    s = (
        _log(g1 / g2 * (1.0 - g2) ** 2, "gamma1/gamma2*(1-gamma2)^2")
        + (1.0 - g2) / g2 * _log(ws, "w*")
        - (g1 + g2) / (g1 * g2) * _log(ws - ds * g2 / h, "w* - d* gamma2/h")
        + _gamma1_term(g1, ws, ds, h)
    )
    return NullCalibration("LR", mu, sigma2, s)


def wilks_calibration(r: RatioSet) -> NullCalibration:
    g1, g2, h = r.gamma1, r.gamma2, r.h
    wd = solve_wd(r)
    w, d = wd.w, wd.d
    gap = w * w - d * d
    mu = 0.5 * _log(gap * h * h / (w * h - g2 * d) ** 2, "mu_W")
    sigma2 = 2.0 * _log(w * w / gap, "sigma2_W")
    s = (
        -2.0 * math.log1p(-g2)
        - (1.0 - g2) / g2 * _log(w, "w")
        + (g1 + g2) / (g1 * g2) * _log(w - d * g2 / h, "w - d gamma2/h")
        - _gamma1_term(g1, w, d, h)
    )
    return NullCalibration("W", mu, sigma2, s)


def lh_calibration(r: RatioSet) -> NullCalibration:
    g2, h = r.gamma2, r.h
    one = 1.0 - g2
    return NullCalibration("LH", g2 / one**2, 2.0 * h * h / one**4, 1.0 / one)


def bnp_calibration(r: RatioSet) -> NullCalibration:
    g2, h = r.gamma2, r.h
    wd = solve_wd(r)
    w2, d2 = wd.w**2, wd.d**2
    gap = w2 - d2
    one = (1.0 - g2) ** 2
    mu = -one * w2 * (d2 - g2) / (gap**2 * (w2 - g2))
    sigma2 = 2.0 * h * h * one**2 / gap**4
    s = (1.0 - g2) / (w2 - g2)
    return NullCalibration("BNP", mu, sigma2, s)


_CALIBRATORS = {
    "LR": lr_calibration,
    "W": wilks_calibration,
    "LH": lh_calibration,
    "BNP": bnp_calibration,
}


def calibration_for(statistic_id: str, r: RatioSet) -> NullCalibration:
    try:
        return _CALIBRATORS[statistic_id.upper()](r)
    except KeyError:
        raise ValueError(f"no closed-form calibration for {statistic_id!r}") from None


def calibrate(dims: Dims) -> dict:
    """All constants for one configuration, as a plain dict (CLI / JSON)."""
    r = ratios(dims)
    wd = solve_wd(r)
    out = {
        "n": dims.n,
        "p": dims.p,
        "p1": dims.p1,
        "gamma1": r.gamma1,
        "gamma2": r.gamma2,
        "h": r.h,
        "c1": r.c1,
        "c": r.c,
        "w": wd.w,
        "d": wd.d,
        "w_star": r.h / math.sqrt(r.gamma2),
        "d_star": math.sqrt(r.gamma2),
    }
    for sid, fn in _CALIBRATORS.items():
        cal = fn(r)
        out[f"s_{sid}"] = cal.s
        out[f"mu_{sid}"] = cal.mu
        out[f"sigma2_{sid}"] = cal.sigma2
    return out

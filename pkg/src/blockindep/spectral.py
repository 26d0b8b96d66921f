"""Limiting spectral law of the null Fisher matrix ``W T^{-1}``.

The law has an absolutely continuous part on ``[a, b]`` with density

    q(x) = (1 - gamma2) / (2 pi x (gamma1 + gamma2 x)) * sqrt((b - x)(x - a))

plus an atom of mass ``1 - 1/gamma1`` at zero when ``gamma1 > 1``. Integrals
against ``q`` are computed after substituting ``x = a + (b - a) sin(theta)**2``,
which turns the square-root edges into a smooth integrand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import RatioSet

__all__ = [
    "IntegrationError",
    "FisherLSD",
    "Esd",
    "fisher_lsd",
    "integrate",
    "esd_from_eigs",
    "ks_distance",
]

GL_NODES = 128
CDF_GRID = 2048


class IntegrationError(ArithmeticError):
    pass


@lru_cache(maxsize=8)
def _gauss_legendre(m: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    x, w = np.polynomial.legendre.leggauss(m)
    return x, w


def _density(x: NDArray[np.float64], g1: float, g2: float, a: float, b: float) -> NDArray[np.float64]:
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    inside = (x > a) & (x < b) & (x > 0)
    xi = x[inside]
    out[inside] = (1.0 - g2) / (2.0 * math.pi * xi * (g1 + g2 * xi)) * np.sqrt((b - xi) * (xi - a))
    return out


def _theta_weight(theta: NDArray[np.float64], g1: float, g2: float, a: float, b: float):
    """Return ``(x(theta), q(x) dx/dtheta)`` for the sin^2 substitution."""
    s2 = np.sin(theta) ** 2
    c2 = 1.0 - s2
    x = a + (b - a) * s2
    # sqrt((b-x)(x-a)) * dx/dtheta = 2 (b-a)^2 sin^2 cos^2
    jac = 2.0 * (b - a) ** 2 * s2 * c2
    if a == 0.0:
        # x = b sin^2, so the 1/x factor cancels analytically
        wq = (1.0 - g2) / (2.0 * math.pi * (g1 + g2 * x)) * 2.0 * b * c2
    else:
        wq = (1.0 - g2) / (2.0 * math.pi * x * (g1 + g2 * x)) * jac
    return x, wq


@dataclass(frozen=True)
class FisherLSD:
    gamma1: float
    gamma2: float
    a: float
    b: float
    mass0: float
    _cdf_theta: NDArray[np.float64] = field(repr=False, compare=False)
    _cdf_vals: NDArray[np.float64] = field(repr=False, compare=False)

    def density(self, x: ArrayLike) -> NDArray[np.float64]:
        return _density(np.asarray(x, dtype=np.float64), self.gamma1, self.gamma2, self.a, self.b)

    def cdf(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=np.float64)
        out = np.where(x < 0, 0.0, self.mass0)
        mid = (x > self.a) & (x < self.b)
        theta = np.arcsin(np.sqrt((x[mid] - self.a) / (self.b - self.a)))
        out[mid] = np.interp(theta, self._cdf_theta, self._cdf_vals)
        out[x >= self.b] = 1.0
        return out

    def quantile(self, u: ArrayLike) -> NDArray[np.float64]:
        """Generalized inverse of :meth:`cdf`; levels up to ``mass0`` map to 0."""
        u = np.asarray(u, dtype=np.float64)
        theta = np.interp(u, self._cdf_vals, self._cdf_theta)
        x = self.a + (self.b - self.a) * np.sin(theta) ** 2
        return np.where(u <= self.mass0, 0.0, x)


def fisher_lsd(r: RatioSet) -> FisherLSD:
    """Limiting law for the given ratios.

    Pass ratios built from finite ``(n, p, p1)`` for the finite-sample proxy,
    or :meth:`RatioSet.from_gammas` with limiting values for the limit law.
    """
    g1, g2, h = r.gamma1, r.gamma2, r.h
    a = (1.0 - h) ** 2 / (1.0 - g2) ** 2
    b = (1.0 + h) ** 2 / (1.0 - g2) ** 2
    if abs(g1 - 1.0) < 1e-15:
        a = 0.0
    mass0 = 1.0 - 1.0 / g1 if g1 > 1.0 else 0.0

    # CDF on a theta grid: Gauss-Legendre over [0, theta_k] for each k
    theta = np.linspace(0.0, math.pi / 2, CDF_GRID + 1)
    nodes, weights = _gauss_legendre(64)
    lo, hi = theta[:-1], theta[1:]
    half = 0.5 * (hi - lo)
    pts = (lo + hi)[:, None] * 0.5 + half[:, None] * nodes[None, :]
    _, wq = _theta_weight(pts, g1, g2, a, b)
    pieces = (wq * weights[None, :]).sum(axis=1) * half
    vals = mass0 + np.concatenate([[0.0], np.cumsum(pieces)])
    return FisherLSD(g1, g2, a, b, mass0, theta, vals)


def integrate(
    lsd: FisherLSD,
    f: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    *,
    tol: float = 1e-10,
    max_nodes: int = 8192,
) -> float:
    """``mass0 * f(0) + int_a^b f(x) q(x) dx``.

    Gauss-Legendre with 128 nodes on ``theta in [0, pi/2]``, doubled until two
    successive estimates differ by less than ``tol``.
    """
    atom = 0.0
    if lsd.mass0 > 0.0:
        f0 = float(np.asarray(f(np.array([0.0])))[0])
        if not math.isfinite(f0):
            raise IntegrationError("integrand is not finite at the atom x = 0")
        atom = lsd.mass0 * f0

    def rule(m: int) -> float:
        nodes, weights = _gauss_legendre(m)
        theta = 0.25 * math.pi * (nodes + 1.0)
        x, wq = _theta_weight(theta, lsd.gamma1, lsd.gamma2, lsd.a, lsd.b)
        fx = np.asarray(f(x), dtype=np.float64)
        if not np.all(np.isfinite(fx)):
            raise IntegrationError("integrand is not finite on the support")
        return 0.25 * math.pi * float(np.dot(weights, fx * wq))

    m = GL_NODES
    prev = rule(m)
    while m < max_nodes:
        m *= 2
        cur = rule(m)
        if abs(cur - prev) < tol:
            return atom + cur
        prev = cur
    raise IntegrationError(f"quadrature did not settle below {tol} with {max_nodes} nodes")


@dataclass(frozen=True)
class Esd:
    """Empirical spectral distribution; ``eigs`` sorted in descending order."""

    eigs: NDArray[np.float64]

    @property
    def size(self) -> int:
        return self.eigs.size

    def cdf(self, x: ArrayLike) -> NDArray[np.float64]:
        asc = self.eigs[::-1]
        return np.searchsorted(asc, np.asarray(x, dtype=np.float64), side="right") / asc.size


def esd_from_eigs(eigs: ArrayLike) -> Esd:
    v = np.asarray(eigs, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("empty eigenvalue list")
    if np.any(v < -1e-10):
        raise ValueError(f"eigenvalue {v.min():.3g} is below the -1e-10 clamp threshold")
    v = np.clip(v, 0.0, None)
    return Esd(np.sort(v)[::-1])


def ks_distance(esd: Esd, lsd: FisherLSD) -> float:
    """Sup distance between the ESD step function and the CDF of ``lsd``."""
    asc = esd.eigs[::-1]
    m = asc.size
    pts = np.unique(np.concatenate([asc, [0.0]]))
    right = np.searchsorted(asc, pts, side="right") / m
    left = np.searchsorted(asc, pts, side="left") / m
    F = lsd.cdf(pts)
    # left limit of the law: only the atom at 0 makes it differ from F
    F_left = F - np.where(pts == 0.0, lsd.mass0, 0.0)
    return float(max(np.max(np.abs(right - F)), np.max(np.abs(left - F_left))))

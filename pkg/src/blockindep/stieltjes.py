"""Spectral law of ``W T^{-1}`` under the alternative.

For ``z`` in the upper half plane the Stieltjes transform ``s(z)`` of the
limiting law is tied to two auxiliary transforms, ``m_H`` (law of ``W``) and
``m_tH`` (law of the non-centrality part), through

    s / (1 + gamma2 z s)       = m_H(w1),          w1 = z (1 + gamma2 z s)
    m_H / (1 + gamma1 m_H)     = m_tH(w2),         w2 = bt (bt w1 - (1 - gamma1)),  bt = 1 + gamma1 m_H
    m_tH D / c1                = m_G(c1 w2 / D),   D  = 1 - c2 - c2 w2 m_tH,  c2 = c - c1

where ``G`` is the limiting spectrum of the population coupling matrix ``R``.
At a fixed ``z`` the three unknowns ``(s, m_H(w1), m_tH(w2))`` close the
system. It is solved for a whole batch of ``z`` at once: damped fixed-point
sweeps far from the real axis, then Newton steps while the imaginary part is
lowered towards its target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import RatioSet

__all__ = [
    "SolverError",
    "SpectrumG",
    "LsdSolution",
    "DensitySamples",
    "CltKernels",
    "solve_lsd",
    "solve_mh",
    "solve_mth",
    "lsd_grid",
    "invert_to_density",
    "kernels",
    "spectral_bound",
]

RESID_TOL = 1e-9


class SolverError(RuntimeError):
    def __init__(self, message: str, residuals: NDArray | None = None):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class SpectrumG:
    """Finite atomic law: ``weights[k]`` at ``eigenvalues[k]``."""

    eigenvalues: NDArray[np.float64]
    weights: NDArray[np.float64]

    def __post_init__(self) -> None:
        lam = np.atleast_1d(np.asarray(self.eigenvalues, dtype=np.float64))
        wts = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        if lam.shape != wts.shape:
            raise ValueError("eigenvalues and weights differ in length")
        if np.any(lam < 0) or np.any(wts < 0):
            raise ValueError("eigenvalues and weights must be nonnegative")
        if abs(wts.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {wts.sum()}, not 1")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "weights", wts)

    @classmethod
    def null(cls) -> "SpectrumG":
        return cls(np.array([0.0]), np.array([1.0]))

    @classmethod
    def finite_rank(cls, spikes: ArrayLike, weight_each: float) -> "SpectrumG":
        """Spikes of mass ``weight_each`` each, the rest of the mass at zero."""
        sp = np.atleast_1d(np.asarray(spikes, dtype=np.float64))
        rest = 1.0 - weight_each * sp.size
        return cls(np.append(sp, 0.0), np.append(np.full(sp.size, weight_each), rest))

    @classmethod
    def from_eigenvalues(cls, eigs: ArrayLike) -> "SpectrumG":
        e = np.asarray(eigs, dtype=np.float64).ravel()
        return cls(e, np.full(e.size, 1.0 / e.size))

    @classmethod
    def load(cls, spec: str | Path) -> "SpectrumG":
        """``"null"`` or a CSV of ``eigenvalue[,weight]`` rows (equal weights if omitted)."""
        if str(spec).lower() == "null":
            return cls.null()
        arr = np.loadtxt(spec, delimiter=",", ndmin=2)
        if arr.shape[1] == 1:
            return cls.from_eigenvalues(arr[:, 0])
        return cls(arr[:, 0], arr[:, 1] / arr[:, 1].sum())

    def m(self, u: NDArray[np.complex128]) -> NDArray[np.complex128]:
        return np.sum(self.weights / (self.eigenvalues - u[..., None]), axis=-1)

    def dm(self, u: NDArray[np.complex128]) -> NDArray[np.complex128]:
        return np.sum(self.weights / (self.eigenvalues - u[..., None]) ** 2, axis=-1)


@dataclass(frozen=True)
class _Params:
    g1: float
    g2: float
    c1: float
    c2: float
    G: SpectrumG


def _params(r: RatioSet, G: SpectrumG, *, gamma2: float | None = None) -> _Params:
    return _Params(r.gamma1, r.gamma2 if gamma2 is None else gamma2, r.c1, r.c - r.c1, G)


def _aux(z, U, P: _Params):
    s, m, t = U[:, 0], U[:, 1], U[:, 2]
    w1 = z * (1.0 + P.g2 * z * s)
    bt = 1.0 + P.g1 * m
    w2 = bt * (bt * w1 - (1.0 - P.g1))
    D = 1.0 - P.c2 - P.c2 * w2 * t
    arg = P.c1 * w2 / D
    return w1, bt, w2, D, arg


def _newton_residual(z, U, P: _Params):
    s, m, t = U[:, 0], U[:, 1], U[:, 2]
    w1, bt, w2, D, arg = _aux(z, U, P)
    E = np.empty_like(U)
    E[:, 0] = s - (1.0 + P.g2 * z * s) * m
    E[:, 1] = m - bt * t
    E[:, 2] = t * D - P.c1 * P.G.m(arg)
    return E


def _jacobian(z, U, P: _Params):
    s, m, t = U[:, 0], U[:, 1], U[:, 2]
    w1, bt, w2, D, arg = _aux(z, U, P)
    dmg = P.G.dm(arg)
    J = np.zeros((U.shape[0], 3, 3), dtype=np.complex128)
    J[:, 0, 0] = 1.0 - P.g2 * z * m
    J[:, 0, 1] = -(1.0 + P.g2 * z * s)
    J[:, 1, 1] = 1.0 - P.g1 * t
    J[:, 1, 2] = -bt
    dw2_ds = bt**2 * P.g2 * z**2
    dw2_dm = P.g1 * (2.0 * bt * w1 - (1.0 - P.g1))
    darg_dw2 = P.c1 / D + P.c1 * P.c2 * w2 * t / D**2
    dE3_dw2 = -P.c2 * t**2 - P.c1 * dmg * darg_dw2
    J[:, 2, 0] = dE3_dw2 * dw2_ds
    J[:, 2, 1] = dE3_dw2 * dw2_dm
    J[:, 2, 2] = D - P.c2 * w2 * t - P.c1 * dmg * P.c1 * P.c2 * w2**2 / D**2
    return J


def residuals(z: NDArray, U: NDArray, P: _Params) -> NDArray[np.float64]:
    """Absolute residuals of the three equations in their quotient form."""
    s, m, t = U[:, 0], U[:, 1], U[:, 2]
    w1, bt, w2, D, arg = _aux(z, U, P)
    R = np.empty(U.shape, dtype=np.float64)
    R[:, 0] = np.abs(s / (1.0 + P.g2 * z * s) - m)
    R[:, 1] = np.abs(m / bt - t)
    R[:, 2] = np.abs(t * D / P.c1 - P.G.m(arg))
    return R


def _fixed_point_sweep(z, U, P: _Params):
    """One Gauss-Seidel pass in the order m_tH -> m_H -> s."""
    V = U.copy()
    _, _, _, D, arg = _aux(z, V, P)
    V[:, 2] = P.c1 / D * P.G.m(arg)
    V[:, 1] = V[:, 2] / (1.0 - P.g1 * V[:, 2])
    V[:, 0] = V[:, 1] / (1.0 - P.g2 * z * V[:, 1])
    return V


def _fixed_point(z, P: _Params, *, tol: float = 1e-10, max_iter: int = 2000) -> NDArray:
    """Damped iteration from the large-|z| guess ``-1/argument``."""
    U = np.zeros((z.size, 3), dtype=np.complex128)
    U[:, 0] = -1.0 / z
    w1, *_ = _aux(z, U, P)
    U[:, 1] = -1.0 / w1
    bt = 1.0 + P.g1 * U[:, 1]
    U[:, 2] = -1.0 / (bt * (bt * w1 - (1.0 - P.g1)))
    damping = 0.5
    prev = np.inf
    for _ in range(max_iter):
        V = _fixed_point_sweep(z, U, P)
        step = np.max(np.abs(V - U))
        if not np.isfinite(step):
            raise SolverError("fixed-point iteration diverged")
        if step > prev and damping > 0.1:
            damping = 0.1  # oscillation: fall back to heavier damping
        U = (1.0 - damping) * U + damping * V
        if step < tol:
            break
        prev = step
    return U


def _newton(z, U, P: _Params, *, max_iter: int = 50):
    # a failed trial step may overflow; the caller shortens the step instead
    with np.errstate(all="ignore"):
        return _newton_loop(z, U, P, max_iter)


def _newton_loop(z, U, P: _Params, max_iter: int):
    for _ in range(max_iter):
        E = _newton_residual(z, U, P)
        J = _jacobian(z, U, P)
        try:
            delta = np.linalg.solve(J, -E[..., None])[..., 0]
        except np.linalg.LinAlgError:
            return U, False
        U = U + delta
        if not np.all(np.isfinite(U)):
            return U, False
        if np.max(np.abs(delta) / (1.0 + np.abs(U))) < 1e-14:
            break
    ok = np.all(residuals(z, U, P) < RESID_TOL)
    return U, bool(ok)


def _same_side(m, u) -> NDArray[np.bool_]:
    """Stieltjes-transform sign condition ``Im m * Im u > 0``, lenient when either is round-off."""
    tiny = 1e-12 * (np.abs(m) * np.abs(u) + 1e-300)
    return (m.imag * u.imag > 0) | (np.abs(m.imag * u.imag) <= tiny)


def _branch_ok(z, U, P: _Params) -> bool:
    """Im s > 0, and m_H, m_tH lie on the same side as their arguments.

    The last condition rules out a spurious root of the third equation with
    ``D = 0`` (an infinite argument of ``m_G``) that satisfies the residuals.
    """
    w1, _, w2, _, _ = _aux(z, U, P)
    return bool(np.all(U[:, 0].imag > 0) and np.all(_same_side(U[:, 1], w1)) and np.all(_same_side(U[:, 2], w2)))


def _solve_batch(z: NDArray[np.complex128], P: _Params) -> NDArray[np.complex128]:
    """Continuation in ``Im z`` from a height where the damped iteration converges."""
    z = np.asarray(z, dtype=np.complex128).ravel()
    if np.any(z.imag <= 0):
        raise ValueError("every z needs a positive imaginary part")
    # start well above the spectrum, where the damped iteration contracts
    scale = (1.0 + math.sqrt(P.g1)) ** 2 * (1.0 + float(np.max(P.G.eigenvalues))) / (1.0 - math.sqrt(min(P.g2, 0.99))) ** 2
    top = max(4.0, 2.0 * float(np.max(np.abs(z.real))) + 4.0, 2.0 * scale)
    x, y_target = z.real, z.imag
    for _ in range(6):
        y = np.maximum(y_target, top)
        try:
            U = _fixed_point(x + 1j * y, P)
            U, ok = _newton(x + 1j * y, U, P)
        except SolverError:
            ok = False
        if ok and _branch_ok(x + 1j * y, U, P):
            break
        top *= 4.0
    else:
        raise SolverError("could not start continuation", residuals(x + 1j * y, U, P))
    factor = 0.5
    while np.any(y > y_target):
        y_next = np.maximum(y * factor, y_target)
        V, ok = _newton(x + 1j * y_next, U, P)
        if ok and _branch_ok(x + 1j * y_next, V, P):
            U, y = V, y_next
            factor = max(0.5, factor * factor)
            continue
        factor = math.sqrt(factor)  # shorter step
        if factor > 0.999:
            raise SolverError("continuation stalled", residuals(x + 1j * y_next, V, P))
    return U


@dataclass(frozen=True)
class LsdSolution:
    """Solved grid. ``m_h`` is taken at ``mh_arg = z (1 + gamma2 z s)`` and
    ``m_th`` at ``mth_arg``, the arguments the equations couple them at."""

    z: NDArray[np.complex128]
    s: NDArray[np.complex128]
    m_h: NDArray[np.complex128]
    m_th: NDArray[np.complex128]
    mh_arg: NDArray[np.complex128]
    mth_arg: NDArray[np.complex128]
    residuals: NDArray[np.float64]
    gamma1: float

    @property
    def mass0(self) -> float:
        return max(0.0, 1.0 - 1.0 / self.gamma1)


def solve_lsd(r: RatioSet, G: SpectrumG, z: ArrayLike) -> LsdSolution:
    """Solve the coupled system at one or more points of the upper half plane."""
    zz = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    P = _params(r, G)
    U = _solve_batch(zz, P)
    res = residuals(zz, U, P)
    if np.max(res) > RESID_TOL:
        raise SolverError(f"residual {np.max(res):.2e} above {RESID_TOL}", res)
    if not _branch_ok(zz, U, P):
        raise SolverError("solution violates the Stieltjes sign conditions", res)
    w1, _, w2, _, _ = _aux(zz, U, P)
    return LsdSolution(zz, U[:, 0], U[:, 1], U[:, 2], w1, w2, res, r.gamma1)


def solve_mh(r: RatioSet, G: SpectrumG, z: ArrayLike) -> NDArray[np.complex128]:
    """Stieltjes transform of the law of ``W`` at ``z`` itself.

    Setting ``gamma2 = 0`` collapses the first equation to ``s = m_H(z)``.
    """
    zz = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    U = _solve_batch(zz, _params(r, G, gamma2=0.0))
    return U[:, 1]


def solve_mth(r: RatioSet, G: SpectrumG, z: ArrayLike) -> NDArray[np.complex128]:
    """Stieltjes transform of the non-centrality law at ``z`` (scalar Newton per point)."""
    zz = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    c1, c2 = r.c1, r.c - r.c1
    t = -1.0 / zz
    for _ in range(200):
        D = 1.0 - c2 - c2 * zz * t
        arg = c1 * zz / D
        E = t * D - c1 * G.m(arg)
        dE = D - c2 * zz * t - c1 * G.dm(arg) * c1 * c2 * zz**2 / D**2
        step = E / dE
        t = t - step
        if np.max(np.abs(step) / (1 + np.abs(t))) < 1e-15:
            break
    D = 1.0 - c2 - c2 * zz * t
    if np.max(np.abs(t * D / c1 - G.m(c1 * zz / D))) > RESID_TOL:
        raise SolverError("m_tH solve did not converge")
    return t


def lsd_grid(r: RatioSet, G: SpectrumG, x: ArrayLike, eps: float = 1e-4) -> LsdSolution:
    x = np.asarray(x, dtype=np.float64)
    return solve_lsd(r, G, x + 1j * eps)


@dataclass(frozen=True)
class DensitySamples:
    x: NDArray[np.float64]
    density: NDArray[np.float64]
    eps: float
    mass: float
    mass0: float


def invert_to_density(sol: LsdSolution) -> DensitySamples:
    """``Im s(x + i eps) / pi`` on the solved grid."""
    eps = np.unique(np.round(sol.z.imag, 15))
    if eps.size != 1:
        raise ValueError("grid must sit at a single height Im z = eps")
    eps = float(eps[0])
    if not 1e-6 <= eps <= 1e-2:
        raise ValueError(f"eps={eps} outside [1e-6, 1e-2]")
    dens = sol.s.imag / math.pi
    if np.any(dens < -1e-6):
        raise SolverError("negative density beyond tolerance")
    dens = np.clip(dens, 0.0, None)
    x = sol.z.real
    mass = float(np.trapezoid(dens, x)) if x.size > 1 else 0.0
    return DensitySamples(x, dens, eps, mass, sol.mass0)


def spectral_bound(r: RatioSet, lambda_max_R: float) -> float:
    """Upper bound on the limiting spectrum of ``W T^{-1}``."""
    if lambda_max_R < 0:
        raise ValueError("lambda_max_R must be >= 0")
    if not r.gamma2 < 1:
        raise ValueError("gamma2 < 1 required")
    num = (1.0 + math.sqrt(r.gamma1)) ** 2 + lambda_max_R * (1.0 + math.sqrt(r.c1)) ** 2
    return 2.0 * num / (1.0 - math.sqrt(r.gamma2)) ** 2


def _cdiff(f: Callable, z: NDArray[np.complex128], rel: float) -> NDArray[np.complex128]:
    h = rel * np.abs(z)
    return (f(z + h) - f(z - h)) / (2.0 * h)


class CltKernels:
    """Pointwise kernel functions entering the CLT under the alternative.

    Derivatives are central differences along the real direction with step
    ``step * |z|``; every method accepts an array of points with ``Im z > 0``.
    """

    def __init__(self, r: RatioSet, G: SpectrumG | None = None, *, m_h: Callable | None = None, step: float = 1e-4):
        self.r = r
        self.G = G if G is not None else SpectrumG.null()
        self.step = step
        self._m_h = m_h if m_h is not None else (lambda z: solve_mh(r, self.G, z))

    def _z(self, z):
        return np.atleast_1d(np.asarray(z, dtype=np.complex128))

    def m_h(self, z):
        return self._m_h(self._z(z))

    def delta(self, z):
        return self.r.gamma1 * self.m_h(z)

    def delta_tilde(self, z):
        z = self._z(z)
        return self.delta(z) - (1.0 - self.r.gamma1) / z

    def eta(self, z):
        z = self._z(z)
        d = self.delta(z)
        return (1.0 + d) * (1.0 + d - (1.0 - self.r.gamma1) / z)

    def xi(self, z, step: float | None = None):
        z = self._z(z)
        rel = self.step if step is None else step
        num = _cdiff(self.delta, z, rel)
        den = _cdiff(lambda u: u * self.eta(u), z, rel)
        return num / den

    def psi_inv(self, z):
        z = self._z(z)
        d = self.delta(z)
        xi = self.xi(z)
        return 1.0 / (1.0 + d) - 2.0 * xi * z + (1.0 - self.r.gamma1) * xi / (1.0 + d)

    def psi(self, z):
        return 1.0 / self.psi_inv(z)

    def b(self, z):
        z = self._z(z)
        return 1.0 + self.r.gamma2 * z * solve_lsd(self.r, self.G, z).s

    def b_tilde(self, z):
        return 1.0 + self.delta(z)

    def n_kernel(self, z):
        z = self._z(z)
        dxi = _cdiff(self.xi, z, self.step)
        return 0.5 * dxi * self.psi_inv(z) - self.xi(z) ** 2

    def omega_tilde(self, z):
        z = self._z(z)
        return z**2 * self.xi(z) + (1.0 - self.r.gamma1) / (1.0 + self.delta(z)) * self.psi_inv(z)

    def bias(self, z):
        """The bias kernel ``B(z)``."""
        z = self._z(z)
        g1 = self.r.gamma1
        d = self.delta(z)
        dt = d - (1.0 - g1) / z
        xi = self.xi(z)
        pinv = self.psi_inv(z)
        N = self.n_kernel(z)
        om = self.omega_tilde(z)
        inner = (
            -om * N * (1.0 - d)
            + N / (1.0 + d)
            + xi * pinv
            + z * xi**2
            + z**2 * dt**2 * (xi**2 - d * N * (z - (1.0 - g1) / (1.0 + d) + 1.0))
        )
        return inner / pinv**2

    def m_under_tilde_h(self, z):
        z = self._z(z)
        return -(1.0 - self.r.c1) / z + self.r.c1 * solve_mth(self.r, self.G, z)


def kernels(r: RatioSet, G: SpectrumG | None = None, **kw) -> CltKernels:
    return CltKernels(r, G, **kw)

"""Deterministic solvers for the Markov renewal equation.

On a finite chain the equation reads

    Psi(t, i) = h(t, i) + sum_j P[i, j] int_0^t Psi(t - s, j) dF_i(s).

Three independent routes are provided: a forward recursion on a uniform
time grid, the truncated Neumann series with a rigorous remainder bound,
and the exact linear solve of the Laplace-transformed equation.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.signal import fftconvolve

from mrp.distributions import ScaledFamily
from mrp.errors import DomainError, NumericError
from mrp.param_chain import FiniteChain, TargetSet

__all__ = [
    "TermKind",
    "InhomogeneousTerm",
    "GridSolution",
    "SeriesSolution",
    "solve_grid",
    "solve_series",
    "laplace_solve",
    "laplace_of_h",
    "MAX_GRID",
]

MAX_GRID = 10**7
_BASE_BLOCK = 64
_DIRECT_CONV = 256
_QUAD_EPSREL = 1e-11


class TermKind(enum.Enum):
    U_COUNT = "UCount"
    PHI_TAIL = "PhiTail"
    AGE_TAIL = "AgeTail"
    RESIDUAL_WINDOW = "ResidualWindow"
    TOTAL_WINDOW = "TotalWindow"


@dataclass(frozen=True)
class InhomogeneousTerm:
    """Forcing term ``h(t, lam)`` of the renewal equation.

    ``U_COUNT`` yields the renewal measure ``U(t, A)``, ``PHI_TAIL`` the law of
    the ongoing parameter, and the three windowed kinds the joint laws
    ``P(Y_t <= x, Lambda(t) in A)``, ``P(Z_t <= x, ...)``, ``P(C_t <= x, ...)``.
    """

    kind: TermKind
    x: float | None = None

    def __post_init__(self):
        windowed = self.kind in (TermKind.AGE_TAIL, TermKind.RESIDUAL_WINDOW, TermKind.TOTAL_WINDOW)
        if windowed and (self.x is None or not self.x >= 0):
            raise DomainError(f"{self.kind.value} needs a window x >= 0")
        if not windowed and self.x is not None:
            raise DomainError(f"{self.kind.value} takes no window")

    @classmethod
    def u_count(cls) -> InhomogeneousTerm:
        return cls(TermKind.U_COUNT)

    @classmethod
    def phi_tail(cls) -> InhomogeneousTerm:
        return cls(TermKind.PHI_TAIL)

    @classmethod
    def age_tail(cls, x: float) -> InhomogeneousTerm:
        return cls(TermKind.AGE_TAIL, float(x))

    @classmethod
    def residual_window(cls, x: float) -> InhomogeneousTerm:
        return cls(TermKind.RESIDUAL_WINDOW, float(x))

    @classmethod
    def total_window(cls, x: float) -> InhomogeneousTerm:
        return cls(TermKind.TOTAL_WINDOW, float(x))

    def evaluate(self, fam: ScaledFamily, lam: float, t, target: TargetSet) -> np.ndarray:
        """``h(t, lam)`` on an array of nonnegative times."""
        t = np.asarray(t, dtype=float)
        if not target.contains(lam):
            return np.zeros_like(t)
        kind = self.kind
        if kind is TermKind.U_COUNT:
            return np.ones_like(t)
        sf = np.asarray(fam.sf(lam, t), dtype=float)
        if kind is TermKind.PHI_TAIL:
            return sf
        if kind is TermKind.AGE_TAIL:
            return np.where(t <= self.x, sf, 0.0)
        if kind is TermKind.RESIDUAL_WINDOW:
            return sf - np.asarray(fam.sf(lam, t + self.x), dtype=float)
        return np.where(t <= self.x, sf - fam.sf(lam, self.x), 0.0)


def laplace_of_h(term: InhomogeneousTerm, fam: ScaledFamily, lam: float, z: float, target: TargetSet) -> float:
    """``int_0^inf exp(-z t) h(t, lam) dt``."""
    z = float(z)
    if not z > 0:
        raise DomainError(f"Laplace variable must be positive, got {z!r}")
    if not target.contains(lam):
        return 0.0
    kind = term.kind
    if kind is TermKind.U_COUNT:
        return 1.0 / z
    if kind is TermKind.PHI_TAIL:
        return fam.laplace_deficit(lam, z) / z
    x = term.x
    if kind is TermKind.AGE_TAIL:
        return _damped_tail_integral(fam, lam, z, x)
    if kind is TermKind.RESIDUAL_WINDOW:
        # int_0^inf e^{-zt} (S(t) - S(t+x)) dt = e^{zx} G(x) - (e^{zx} - 1) (1 - phi) / z, G(x) = int_0^x e^{-zs} S(s) ds
        head = _damped_tail_integral(fam, lam, z, x)
        return math.exp(z * x) * head - math.expm1(z * x) * fam.laplace_deficit(lam, z) / z
    sx = fam.sf(lam, x)
    kink = fam.ancestor.support_start / lam
    points = [kink] if 0 < kink < x else None
    val, err = integrate.quad(
        lambda s: math.exp(-z * s) * (fam.sf(lam, s) - sx), 0.0, x, points=points, epsabs=0.0, epsrel=_QUAD_EPSREL, limit=400
    )
    return val


def _damped_tail_integral(fam: ScaledFamily, lam: float, z: float, x: float) -> float:
    if x == 0:
        return 0.0
    kink = fam.ancestor.support_start / lam
    total = 0.0
    if kink > 0:
        # 1 - F_lam = 1 below the support
        head = min(kink, x)
        total += -math.expm1(-z * head) / z
        if x <= kink:
            return total
        lo = kink
    else:
        lo = 0.0
    val, err = integrate.quad(
        lambda s: math.exp(-z * s) * fam.sf(lam, s), lo, x, epsabs=0.0, epsrel=_QUAD_EPSREL, limit=400
    )
    if err > 1e-8 * max(abs(val), 1e-300):
        raise NumericError("quadrature of the damped tail did not converge", lam=lam, z=z, x=x, abserr=err)
    return total + val


@dataclass
class GridSolution:
    """``Psi(k * dt, lam_i)`` for ``k = 0..K`` on every state of the chain."""

    dt: float
    t_max: float
    states: tuple[float, ...]
    values: np.ndarray
    term: InhomogeneousTerm
    target: TargetSet

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.values.shape[0])

    def index_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * max(t, self.dt) or not 0 <= k < self.values.shape[0]:
            raise DomainError(f"time {t!r} is not a grid point (dt={self.dt}, t_max={self.t_max})")
        return k

    def value(self, t: float, lam0: float) -> float:
        i = self.states.index(float(lam0))
        return float(self.values[self.index_of(t), i])

    def to_csv(self, path) -> None:
        """Write columns ``t, state, value`` with round-trip precision."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "state", "value"])
            for k, tk in enumerate(self.times):
                for i, s in enumerate(self.states):
                    w.writerow([f"{tk:.17g}", f"{s:.17g}", f"{self.values[k, i]:.17g}"])


def _grid_setup(chain, fam, term, target, dt, t_max):
    if not isinstance(chain, FiniteChain):
        raise DomainError("grid solvers need a finite chain")
    dt, t_max = float(dt), float(t_max)
    if not dt > 0 or not t_max > 0:
        raise DomainError(f"dt and t_max must be positive, got dt={dt!r}, t_max={t_max!r}")
    K = int(math.ceil(t_max / dt - 1e-9))
    if K > MAX_GRID:
        raise DomainError(f"grid of {K} steps exceeds the limit of {MAX_GRID}")
    t = dt * np.arange(K + 1)
    states = chain.state_array
    F = np.column_stack([np.asarray(fam.cdf(lam, t), dtype=float) for lam in states])
    dF = np.zeros_like(F)
    dF[1:] = np.diff(F, axis=0)
    h = np.column_stack([term.evaluate(fam, lam, t, target) for lam in states])
    return K, dF, h


def _convolve_columns(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[0] * b.shape[0] <= _DIRECT_CONV * _DIRECT_CONV // 4:
        return np.column_stack([np.convolve(a[:, i], b[:, i]) for i in range(a.shape[1])])
    return fftconvolve(a, b, axes=0)


def _volterra_solve(h: np.ndarray, dF: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Forward recursion ``Psi[k] = h[k] + sum_{m=1..k} dF[m] * (P Psi[k-m])``.

    Contributions of finished blocks to later ones are added by FFT
    convolution (divide and conquer), giving ``O(K log^2 K)`` work.
    """
    n_time, n = h.shape
    psi = np.zeros_like(h)
    mixed = np.zeros_like(h)  # mixed[k, i] = sum_j P[i, j] psi[k, j]
    acc = np.zeros_like(h)

    def base(lo, hi):
        for k in range(lo, hi):
            if k > lo:
                s = np.einsum("ji,ji->i", dF[k - lo : 0 : -1], mixed[lo:k])
            else:
                s = 0.0
            psi[k] = h[k] + acc[k] + s
            mixed[k] = P @ psi[k]

    def rec(lo, hi):
        if hi - lo <= _BASE_BLOCK:
            base(lo, hi)
            return
        mid = (lo + hi) // 2
        rec(lo, mid)
        conv = _convolve_columns(mixed[lo:mid], dF[: hi - lo])
        acc[mid:hi] += conv[mid - lo : hi - lo]
        rec(mid, hi)

    rec(0, n_time)
    return psi


def solve_grid(chain: FiniteChain, fam: ScaledFamily, term: InhomogeneousTerm, target: TargetSet, dt: float, t_max: float) -> GridSolution:
    """Solve the renewal equation on ``t_k = k * dt`` up to ``t_max``.

    Mass of ``F_i`` in each cell is put at the right endpoint, so the
    recursion never references the value being computed. The result is
    the exact solution for waiting times rounded up to the grid.
    """
    K, dF, h = _grid_setup(chain, fam, term, target, dt, t_max)
    psi = _volterra_solve(h, dF, chain.P)
    return GridSolution(float(dt), K * float(dt), chain.states, psi, term, target)


@dataclass
class SeriesSolution:
    values: dict[float, float]
    remainder: float
    n_terms: int
    dt: float = field(repr=False, default=0.0)


def _apply_kernel(psi: np.ndarray, dF: np.ndarray, P: np.ndarray) -> np.ndarray:
    mixed = psi @ P.T
    return _convolve_columns(mixed, dF)[: psi.shape[0]]


def solve_series(
    chain: FiniteChain,
    fam: ScaledFamily,
    term: InhomogeneousTerm,
    target: TargetSet,
    t: float,
    n_max: int,
    dt: float,
) -> SeriesSolution:
    """Neumann series ``sum_{n=0}^{n_max} K^n h`` evaluated at ``t``.

    ``K`` is the grid convolution operator of :func:`solve_grid`. The
    remainder ``sum_{n > n_max} K^n h`` is bounded by
    ``sup|h| * max_i P_i(S_{n_max+1} <= t) * max_j U_j(t)``, all three
    factors computed on the same grid.
    """
    if n_max < 0:
        raise DomainError("n_max must be nonnegative")
    K, dF, h = _grid_setup(chain, fam, term, target, dt, t)
    P = chain.P
    total = h.copy()
    cur = h
    reach = np.ones_like(h)  # K^n 1 = P(S_n <= t_k) on the grid
    for _ in range(n_max):
        cur = _apply_kernel(cur, dF, P)
        total += cur
        reach = _apply_kernel(reach, dF, P)
    reach = _apply_kernel(reach, dF, P)
    sup_h = float(np.max(np.abs(h)))
    remainder = 0.0
    if sup_h > 0:
        u_all = _volterra_solve(np.ones_like(h), dF, P)
        remainder = sup_h * float(np.clip(reach[K], 0.0, None).max()) * float(u_all[K].max())
    values = {s: float(total[K, i]) for i, s in enumerate(chain.states)}
    return SeriesSolution(values, remainder, n_max, float(dt))


def laplace_solve(chain: FiniteChain, fam: ScaledFamily, phi_h, z: float) -> np.ndarray:
    """Solve ``(I - diag(phi_i(z)) P) Xi = phi_h`` exactly.

    Written as ``(I - P) + diag(1 - phi_i(z)) P`` so that small ``z`` does
    not lose the deficit to cancellation.
    """
    if not isinstance(chain, FiniteChain):
        raise DomainError("laplace_solve needs a finite chain")
    z = float(z)
    if not z > 0:
        raise DomainError(f"Laplace variable must be positive, got {z!r}")
    phi_h = np.asarray(phi_h, dtype=float)
    P = chain.P
    m = P.shape[0]
    deficit = np.array([fam.laplace_deficit(lam, z) for lam in chain.states])
    A = (np.eye(m) - P) + deficit[:, None] * P
    try:
        xi = np.linalg.solve(A, phi_h)
    except np.linalg.LinAlgError as exc:
        raise NumericError("Laplace-domain system is singular", z=z) from exc
    resid = np.max(np.abs(A @ xi - phi_h))
    scale = np.max(np.abs(A)) * np.max(np.abs(xi)) + np.max(np.abs(phi_h))
    if resid > 1e-12 * scale:
        raise NumericError("Laplace-domain solve residual too large", z=z, residual=resid)
    return xi

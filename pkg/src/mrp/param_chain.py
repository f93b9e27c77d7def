"""Parameter Markov chains driving the waiting-time laws.

Two variants are supported: finite-state chains with an explicit row
stochastic matrix, and the independent-resampling kernel where every step
draws a fresh parameter from the stationary law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, interpolate
from scipy.sparse.csgraph import connected_components

from mrp.errors import ChainError, DomainError

__all__ = ["TargetSet", "FiniteChain", "ResamplingKernel", "ParameterChain"]

_ROW_TOL = 1e-12
_STATIONARY_TOL = 1e-10
_GAP_MIN = 1e-8
_QUAD_EPSREL = 1e-12


@dataclass(frozen=True)
class TargetSet:
    """A Borel target set ``A``: everything, nothing, a closed interval or a list of states."""

    kind: str = "all"
    lo: float = -math.inf
    hi: float = math.inf
    values: tuple[float, ...] = ()

    @classmethod
    def all(cls) -> TargetSet:
        return cls("all")

    @classmethod
    def empty(cls) -> TargetSet:
        return cls("empty")

    @classmethod
    def interval(cls, lo: float, hi: float) -> TargetSet:
        if not lo <= hi:
            raise DomainError(f"interval bounds out of order: [{lo}, {hi}]")
        return cls("interval", float(lo), float(hi))

    @classmethod
    def states(cls, values) -> TargetSet:
        return cls("states", values=tuple(sorted(float(v) for v in values)))

    def contains(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self.kind == "all":
            out = np.ones(lam.shape, dtype=bool)
        elif self.kind == "empty":
            out = np.zeros(lam.shape, dtype=bool)
        elif self.kind == "interval":
            out = (lam >= self.lo) & (lam <= self.hi)
        else:
            out = np.isin(lam, np.asarray(self.values))
        return out.item() if out.ndim == 0 else out

    def complement_in(self, chain: ParameterChain) -> TargetSet:
        """Complement within the state space of ``chain``."""
        if self.kind == "all":
            return TargetSet.empty()
        if self.kind == "empty":
            return TargetSet.all()
        if isinstance(chain, FiniteChain):
            keep = [s for s in chain.states if not self.contains(s)]
            return TargetSet.states(keep)
        raise DomainError("complement of an interval is only representable on finite chains")

    def describe(self) -> str:
        if self.kind == "interval":
            return f"[{self.lo!r}, {self.hi!r}]"
        if self.kind == "states":
            return "{" + ", ".join(repr(v) for v in self.values) + "}"
        return self.kind


class ParameterChain:
    """Interface shared by :class:`FiniteChain` and :class:`ResamplingKernel`."""

    a: float
    b: float
    gap: float

    def step(self, lam: float, u: float) -> float:
        raise NotImplementedError

    def stationary(self):
        raise NotImplementedError

    def stationary_integral(self, f: Callable[[float], float], target: TargetSet | None = None) -> float:
        raise NotImplementedError

    def stationary_mass(self, target: TargetSet) -> float:
        return self.stationary_integral(lambda lam: 1.0, target)

    def initial_sweep(self) -> list[float]:
        """Initial parameters used for an ``each`` sweep."""
        raise NotImplementedError


class FiniteChain(ParameterChain):
    """Irreducible aperiodic chain on ``states`` with transition matrix ``P``.

    Construction validates stochasticity, solves for the stationary row
    vector and rejects chains whose spectral gap vanishes. Instances are
    treated as immutable.
    """

    def __init__(self, states, P):
        states = tuple(float(s) for s in states)
        P = np.array(P, dtype=float)
        m = len(states)
        if m == 0:
            raise ChainError("chain needs at least one state")
        if any(not s > 0 for s in states):
            raise ChainError("states must be positive")
        if any(b <= a for a, b in zip(states, states[1:])):
            raise ChainError("states must be strictly increasing")
        if P.shape != (m, m):
            raise ChainError(f"transition matrix must be {m}x{m}, got shape {P.shape}")
        if np.any(P < 0) or not np.all(np.isfinite(P)):
            raise ChainError("transition matrix has negative or non-finite entries")
        for i, s in enumerate(P.sum(axis=1)):
            if abs(s - 1.0) > _ROW_TOL:
                raise ChainError(f"row {i + 1} of the transition matrix sums to {float(s):.12g}, not 1")
        n_comp, _ = connected_components(P > 0, directed=True, connection="strong")
        if n_comp != 1:
            raise ChainError("transition matrix is reducible")
        gap = _spectral_gap(P)
        if gap <= _GAP_MIN:
            raise ChainError(f"chain has no spectral gap (gap={gap:.3g}); periodic chains are rejected")
        rho = _solve_stationary(P)
        cum = np.cumsum(P, axis=1)
        cum[:, -1] = 1.0
        for arr in (P, rho, cum):
            arr.setflags(write=False)
        self.states = states
        self.P = P
        self.rho = rho
        self.gap = gap
        self._cum = cum

    @property
    def a(self) -> float:  # type: ignore[override]
        return self.states[0]

    @property
    def b(self) -> float:  # type: ignore[override]
        return self.states[-1]

    @property
    def cumulative_rows(self) -> np.ndarray:
        return self._cum

    @property
    def state_array(self) -> np.ndarray:
        return np.asarray(self.states)

    def index(self, lam: float) -> int:
        for i, s in enumerate(self.states):
            if lam == s or abs(lam - s) <= 1e-12 * max(abs(s), 1.0):
                return i
        raise DomainError(f"{lam!r} is not a state of the chain {self.states}")

    def step_index(self, i: int, u: float) -> int:
        # first j with u < cum[i, j]; fixed state order makes ties deterministic
        j = int(np.searchsorted(self._cum[i], u, side="right"))
        return min(j, len(self.states) - 1)

    def step(self, lam: float, u: float) -> float:
        if not 0 < u < 1:
            raise DomainError(f"uniform draw must lie in (0, 1), got {u!r}")
        return self.states[self.step_index(self.index(lam), u)]

    def stationary(self) -> np.ndarray:
        return self.rho

    def stationary_integral(self, f, target: TargetSet | None = None) -> float:
        total = 0.0
        for s, r in zip(self.states, self.rho):
            if target is None or target.contains(s):
                total += r * f(s)
        return float(total)

    def spectral_gap(self) -> float:
        return self.gap

    def initial_sweep(self) -> list[float]:
        return list(self.states)

    def __eq__(self, other):
        return (
            isinstance(other, FiniteChain)
            and self.states == other.states
            and np.array_equal(self.P, other.P)
        )

    def __hash__(self):
        return hash((self.states, self.P.tobytes()))

    def __repr__(self):
        return f"FiniteChain(states={self.states}, P={self.P.tolist()})"


def _solve_stationary(P: np.ndarray) -> np.ndarray:
    m = P.shape[0]
    A = P.T - np.eye(m)
    A[-1, :] = 1.0
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    try:
        rho = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise ChainError("stationary equations are singular") from exc
    if np.any(rho < -_STATIONARY_TOL):
        raise ChainError(f"stationary vector has negative entries: {rho}")
    rho = np.clip(rho, 0.0, None)
    rho /= rho.sum()
    resid = np.max(np.abs(rho @ P - rho))
    if resid > _STATIONARY_TOL:
        raise ChainError(f"stationary residual {resid:.3g} exceeds {_STATIONARY_TOL}")
    return rho


def _spectral_gap(P: np.ndarray) -> float:
    if P.shape[0] == 1:
        return 1.0
    eig = np.linalg.eigvals(P)
    # drop one copy of the Perron eigenvalue 1
    k = int(np.argmin(np.abs(eig - 1.0)))
    rest = np.delete(eig, k)
    return float(1.0 - np.max(np.abs(rest)))


class ResamplingKernel(ParameterChain):
    """Chain on ``[a, b]`` whose every step is a fresh draw from ``rho_s``.

    ``weight`` is an unnormalized density on ``[a, b]``; ``None`` means
    uniform. The spectral gap is 1 because the transition operator is the
    rank-one projection onto constants.
    """

    gap = 1.0

    def __init__(self, a: float, b: float, weight: Callable[[float], float] | None = None):
        a, b = float(a), float(b)
        if not 0 < a < b < math.inf:
            raise ChainError(f"resampling kernel needs 0 < a < b < inf, got [{a}, {b}]")
        self.a = a
        self.b = b
        self.weight = weight
        if weight is None:
            self._norm = b - a
            self._inverse = None
        else:
            norm, _ = integrate.quad(weight, a, b, epsabs=0.0, epsrel=_QUAD_EPSREL, limit=400)
            if not norm > 0:
                raise ChainError("weight function integrates to zero on [a, b]")
            self._norm = norm
            self._inverse = _tabulated_inverse_cdf(weight, a, b, norm)

    @classmethod
    def uniform(cls, a: float, b: float) -> ResamplingKernel:
        return cls(a, b)

    @property
    def is_uniform(self) -> bool:
        return self.weight is None

    def density(self, lam):
        lam = np.asarray(lam, dtype=float)
        inside = (lam >= self.a) & (lam <= self.b)
        if self.weight is None:
            vals = np.where(inside, 1.0 / self._norm, 0.0)
        else:
            vals = np.where(inside, np.vectorize(self.weight, otypes=[float])(lam) / self._norm, 0.0)
        return vals.item() if vals.ndim == 0 else vals

    def ppf(self, u):
        """Inverse CDF of ``rho_s`` (vectorized)."""
        u = np.asarray(u, dtype=float)
        if self._inverse is None:
            out = self.a + (self.b - self.a) * u
        else:
            out = np.clip(self._inverse(u), self.a, self.b)
        return out.item() if out.ndim == 0 else out

    def step(self, lam: float, u: float) -> float:
        if not self.a <= lam <= self.b:
            raise DomainError(f"{lam!r} outside [{self.a}, {self.b}]")
        if not 0 < u < 1:
            raise DomainError(f"uniform draw must lie in (0, 1), got {u!r}")
        return float(self.ppf(u))

    def stationary(self):
        """Density handle of ``rho_s``."""
        return self.density

    def stationary_integral(self, f, target: TargetSet | None = None) -> float:
        lo, hi = self.a, self.b
        if target is not None:
            if target.kind == "empty":
                return 0.0
            if target.kind == "states":
                return 0.0  # finitely many points carry no mass
            if target.kind == "interval":
                lo, hi = max(lo, target.lo), min(hi, target.hi)
                if lo >= hi:
                    return 0.0
        if self.weight is None:
            integrand = f
            scale = 1.0 / self._norm
        else:
            w = self.weight
            integrand = lambda lam: f(lam) * w(lam)  # noqa: E731
            scale = 1.0 / self._norm
        val, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=_QUAD_EPSREL, limit=400)
        return float(val * scale)

    def spectral_gap(self) -> float:
        return 1.0

    def initial_sweep(self) -> list[float]:
        return [self.a, 0.5 * (self.a + self.b), self.b]

    def __repr__(self):
        w = "uniform" if self.weight is None else getattr(self.weight, "__name__", "weighted")
        return f"ResamplingKernel(a={self.a!r}, b={self.b!r}, rho={w})"


def _tabulated_inverse_cdf(weight, a, b, norm, nodes=2049):
    grid = np.linspace(a, b, nodes)
    pieces = [integrate.quad(weight, lo, hi, epsabs=0.0, epsrel=_QUAD_EPSREL)[0] for lo, hi in zip(grid[:-1], grid[1:])]
    cdf = np.concatenate([[0.0], np.cumsum(pieces)]) / norm
    cdf[-1] = 1.0
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return interpolate.PchipInterpolator(cdf[keep], grid[keep])

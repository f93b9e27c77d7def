"""Ancestor waiting-time laws and their scaled families.

A scaled family is generated by one ancestor distribution function ``F``
through ``F_lam(t) = F(lam * t)`` for parameters ``lam`` in ``[a, b]``.
Everything here is a pure function of its inputs; randomness only enters
through uniform draws handed in by the caller.
"""

from __future__ import annotations

import enum
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from mrp.errors import DomainError, NumericError

__all__ = [
    "SATURATION",
    "TailClass",
    "AncestorLaw",
    "Exponential",
    "Gamma",
    "ParetoRV",
    "LogPareto",
    "ScaledFamily",
    "cdf",
    "sample",
    "laplace",
    "mean",
]

# Draws beyond this are clipped; the simulator treats them as covering any horizon.
SATURATION = 1e300

_QUAD_EPSREL = 1e-12
_LAPLACE_RTOL = 1e-10


class TailClass(enum.Enum):
    FINITE_MEAN = "finite-mean"
    REG_VARYING = "regularly-varying"
    SLOWLY_VARYING = "slowly-varying"
    BOUNDARY_ONE = "boundary-one"

    @property
    def heavy(self) -> bool:
        return self is not TailClass.FINITE_MEAN


def _as_times(t):
    arr = np.asarray(t, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DomainError(f"time argument must be nonnegative, got {t!r}")
    return arr


def _as_uniforms(u):
    arr = np.asarray(u, dtype=float)
    if np.any(~((arr > 0) & (arr < 1))):
        raise DomainError(f"uniform draw must lie in the open interval (0, 1), got {u!r}")
    return arr


def _check_z(z) -> float:
    z = float(z)
    if not z > 0:
        raise DomainError(f"Laplace variable must be positive, got {z!r}")
    return z


def _scalar_or_array(arr):
    return arr.item() if arr.ndim == 0 else arr


class AncestorLaw(ABC):
    """Common interface of the ancestor distribution ``F``.

    Subclasses provide closed forms for the survival function and the
    quantile function; the Laplace transform falls back to quadrature on
    the tail representation ``1 - phi(z) = z * int exp(-z x) (1 - F(x)) dx``.
    """

    #: Left end of the support; ``F`` vanishes on ``[0, support_start]``.
    support_start: float = 0.0

    @property
    @abstractmethod
    def tail_class(self) -> TailClass: ...

    @property
    def alpha(self) -> float | None:
        """Tail exponent of ``1 - F(t) = t**-alpha L(t)``; ``None`` for finite mean."""
        return None

    @property
    @abstractmethod
    def mean(self) -> float:
        """Expectation, ``math.inf`` for the heavy-tailed laws."""

    @property
    def has_finite_mean(self) -> bool:
        return self.tail_class is TailClass.FINITE_MEAN

    @abstractmethod
    def _sf(self, t: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _ppf(self, u: np.ndarray) -> np.ndarray: ...

    def sf(self, t):
        return _scalar_or_array(self._sf(_as_times(t)))

    def cdf(self, t):
        t = _as_times(t)
        return _scalar_or_array(1.0 - self._sf(t))

    def ppf(self, u):
        """Inverse CDF, clipped at :data:`SATURATION`."""
        u = _as_uniforms(u)
        with np.errstate(over="ignore"):
            x = self._ppf(u)
        return _scalar_or_array(np.minimum(x, SATURATION))

    def laplace(self, z) -> float:
        """Laplace-Stieltjes transform ``phi(z) = E exp(-z X)``."""
        z = _check_z(z)
        deficit = self.laplace_deficit(z)
        if deficit <= 0.5:
            return 1.0 - deficit
        return self._laplace_direct(z)

    def laplace_deficit(self, z) -> float:
        """``1 - phi(z)`` computed without cancellation."""
        z = _check_z(z)
        return self._tail_quad(z, self._sf_scalar)

    def _sf_scalar(self, x: float) -> float:
        return float(self._sf(np.asarray(x, dtype=float)))

    def _cdf_scalar(self, x: float) -> float:
        return 1.0 - self._sf_scalar(x)

    def _laplace_direct(self, z: float) -> float:
        return self._tail_quad(z, self._cdf_scalar, head=0.0)

    def _tail_quad(self, z: float, g, head: float | None = None) -> float:
        """``int_0^inf exp(-y) g(y / z) dy`` for a bounded ``g``.

        ``g`` equals ``head`` (default 1) on ``y < z * support_start``. The
        part below ``y = 1`` is integrated in ``log y`` so that power-law
        behaviour near the origin becomes smooth.
        """
        y0 = z * self.support_start
        if head is None:
            head = 1.0
        total = head * -math.expm1(-y0)
        err = 0.0
        pieces = []
        if y0 < 1.0:
            lo = math.log(y0) if y0 > 0 else math.log(np.finfo(float).tiny) / 2
            pieces.append((lambda v: math.exp(v - math.exp(v)) * g(math.exp(v) / z), lo, 0.0))
            pieces.append((lambda y: math.exp(-y) * g(y / z), 1.0, math.inf))
        else:
            pieces.append((lambda y: math.exp(-y) * g(y / z), y0, math.inf))
        for f, lo, hi in pieces:
            val, abserr = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=_QUAD_EPSREL, limit=400)
            total += val
            err += abserr
        if not math.isfinite(total) or err > _LAPLACE_RTOL * abs(total):
            raise NumericError(
                "Laplace quadrature did not converge",
                law=repr(self),
                z=z,
                value=total,
                abserr=err,
            )
        return total

    def integrated_tail(self, t: float) -> float:
        """``int_0^t (1 - F(s)) ds``."""
        t = float(_as_times(t))
        val, _ = integrate.quad(self._sf_scalar, 0.0, t, epsabs=0.0, epsrel=_QUAD_EPSREL, limit=400)
        return val

    def slowly_varying_part(self, t):
        """``L(t) = t**alpha (1 - F(t))`` for the heavy-tailed laws."""
        if not self.tail_class.heavy:
            raise DomainError(f"{self!r} has a finite mean; no slowly varying part")
        t = _as_times(t)
        return _scalar_or_array(t**self.alpha * self._sf(t))


@dataclass(frozen=True)
class Exponential(AncestorLaw):
    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError(f"Exponential rate must be positive, got {self.rate!r}")

    @property
    def tail_class(self) -> TailClass:
        return TailClass.FINITE_MEAN

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    def _sf(self, t):
        return np.exp(-self.rate * t)

    def _ppf(self, u):
        return -np.log1p(-u) / self.rate

    def laplace(self, z) -> float:
        z = _check_z(z)
        return self.rate / (self.rate + z)

    def laplace_deficit(self, z) -> float:
        z = _check_z(z)
        return z / (self.rate + z)

    def integrated_tail(self, t: float) -> float:
        t = float(_as_times(t))
        return -math.expm1(-self.rate * t) / self.rate


@dataclass(frozen=True)
class Gamma(AncestorLaw):
    shape: float = 2.0
    rate: float = 1.0

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise DomainError(f"Gamma shape and rate must be positive, got {self!r}")

    @property
    def tail_class(self) -> TailClass:
        return TailClass.FINITE_MEAN

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    def _sf(self, t):
        return special.gammaincc(self.shape, self.rate * t)

    def _ppf(self, u):
        return special.gammaincinv(self.shape, u) / self.rate

    def laplace(self, z) -> float:
        z = _check_z(z)
        return math.exp(-self.shape * math.log1p(z / self.rate))

    def laplace_deficit(self, z) -> float:
        z = _check_z(z)
        return -math.expm1(-self.shape * math.log1p(z / self.rate))

    def integrated_tail(self, t: float) -> float:
        t = float(_as_times(t))
        x = self.rate * t
        return t * special.gammaincc(self.shape, x) + self.mean * special.gammainc(self.shape + 1, x)


@dataclass(frozen=True)
class ParetoRV(AncestorLaw):
    """Pareto law with ``1 - F(t) = (scale / t)**alpha`` for ``t >= scale``."""

    alpha: float = 0.5
    scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise DomainError(f"ParetoRV exponent must lie in (0, 1], got {self.alpha!r}")
        if not self.scale > 0:
            raise DomainError(f"ParetoRV scale must be positive, got {self.scale!r}")

    @property
    def support_start(self) -> float:  # type: ignore[override]
        return self.scale

    @property
    def tail_class(self) -> TailClass:
        return TailClass.BOUNDARY_ONE if self.alpha == 1 else TailClass.REG_VARYING

    @property
    def mean(self) -> float:
        return math.inf

    def _sf(self, t):
        with np.errstate(divide="ignore"):
            ratio = np.where(t > self.scale, self.scale / np.maximum(t, self.scale), 1.0)
        return ratio**self.alpha

    def _ppf(self, u):
        return self.scale * (1.0 - u) ** (-1.0 / self.alpha)

    def integrated_tail(self, t: float) -> float:
        t = float(_as_times(t))
        xm, a = self.scale, self.alpha
        if t <= xm:
            return t
        if a == 1:
            return xm * (1.0 + math.log(t / xm))
        return xm + xm**a * (t ** (1 - a) - xm ** (1 - a)) / (1 - a)


@dataclass(frozen=True)
class LogPareto(AncestorLaw):
    """Slowly varying law with ``1 - F(t) = min(1, c / ln t)``.

    The support starts at ``exp(c)``; ``c = 1`` gives the canonical
    ``1 / ln t`` tail on ``t >= e``.
    """

    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError(f"LogPareto constant must be positive, got {self.c!r}")
        if self.c > 690:
            raise DomainError("LogPareto constant too large for double range")

    @property
    def support_start(self) -> float:  # type: ignore[override]
        return math.exp(self.c)

    @property
    def alpha(self) -> float:
        return 0.0

    @property
    def tail_class(self) -> TailClass:
        return TailClass.SLOWLY_VARYING

    @property
    def mean(self) -> float:
        return math.inf

    def _sf(self, t):
        start = self.support_start
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = self.c / np.log(np.maximum(t, start))
        return np.where(t > start, tail, 1.0)

    def _ppf(self, u):
        expo = self.c / (1.0 - u)
        return np.where(expo > math.log(SATURATION), SATURATION, np.exp(np.minimum(expo, 709.0)))

    def integrated_tail(self, t: float) -> float:
        t = float(_as_times(t))
        start = self.support_start
        if t <= start:
            return t
        # int_start^t c / ln s ds = c (li(t) - li(start)), li(x) = Ei(ln x)
        return start + self.c * (special.expi(math.log(t)) - special.expi(self.c))


@dataclass(frozen=True)
class ScaledFamily:
    """``F_lam(t) = F(lam * t)`` for ``lam`` in ``[a, b]``."""

    ancestor: AncestorLaw
    a: float
    b: float

    def __post_init__(self):
        if not (0 < self.a <= self.b < math.inf):
            raise DomainError(f"parameter interval must satisfy 0 < a <= b < inf, got [{self.a}, {self.b}]")

    def _check_lam(self, lam):
        arr = np.asarray(lam, dtype=float)
        slack = 1e-12 * self.b
        if np.any(~((arr >= self.a - slack) & (arr <= self.b + slack))):
            raise DomainError(f"parameter {lam!r} outside [{self.a}, {self.b}]")
        return arr

    def cdf(self, lam, t):
        lam = self._check_lam(lam)
        return self.ancestor.cdf(lam * _as_times(t))

    def sf(self, lam, t):
        lam = self._check_lam(lam)
        return self.ancestor.sf(lam * _as_times(t))

    def sample(self, lam, u):
        lam = self._check_lam(lam)
        return _scalar_or_array(np.asarray(self.ancestor.ppf(u)) / lam)

    def laplace(self, lam, z) -> float:
        lam = float(self._check_lam(lam))
        return self.ancestor.laplace(_check_z(z) / lam)

    def laplace_deficit(self, lam, z) -> float:
        lam = float(self._check_lam(lam))
        return self.ancestor.laplace_deficit(_check_z(z) / lam)

    def mean(self, lam) -> float:
        lam = float(self._check_lam(lam))
        return self.ancestor.mean / lam

    def integrated_tail(self, lam, t) -> float:
        """``int_0^t (1 - F_lam(s)) ds``."""
        lam = float(self._check_lam(lam))
        return self.ancestor.integrated_tail(lam * float(t)) / lam


def cdf(law: AncestorLaw, t):
    return law.cdf(t)


def sample(law: AncestorLaw, u):
    return law.ppf(u)


def laplace(law: AncestorLaw, z) -> float:
    return law.laplace(z)


def mean(law: AncestorLaw) -> float:
    return law.mean

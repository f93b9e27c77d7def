"""Closed-form limit laws and Tauberian diagnostics.

Everything here is a predicted value: the large-time behaviour of the
renewal measure, the limiting law of the ongoing parameter, the Dynkin
type limits of age and residual lifetime, and the small-``z`` asymptote of
Laplace-domain solutions. Stationary integrals are delegated to the chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from mrp.distributions import AncestorLaw, LogPareto, ParetoRV, ScaledFamily, TailClass
from mrp.errors import DegenerateTargetError, DomainError, NumericError
from mrp.param_chain import FiniteChain, ParameterChain, ResamplingKernel, TargetSet
from mrp.renewal_solver import InhomogeneousTerm, laplace_of_h

__all__ = [
    "TailRegime",
    "tail_regime",
    "u_asymptote",
    "phi_limit",
    "age_limit_cdf",
    "residual_limit_cdf",
    "age_limit_cdf_finite",
    "residual_limit_cdf_finite",
    "lifetime_limit_cdf_finite",
    "xi_asymptote",
    "lemma_condition",
    "TauberianRow",
    "tauberian_check",
    "Preset",
    "application_preset",
]

_CDF_TOL = 1e-10


@dataclass(frozen=True)
class TailRegime:
    """Tail class of a configuration together with its defining constant.

    ``mu_rho`` is the stationary mean waiting time for finite-mean laws and
    ``alpha`` the tail exponent otherwise.
    """

    kind: TailClass
    alpha: float | None = None
    mu_rho: float | None = None


def tail_regime(chain: ParameterChain, fam: ScaledFamily) -> TailRegime:
    law = fam.ancestor
    if law.tail_class is TailClass.FINITE_MEAN:
        return TailRegime(law.tail_class, mu_rho=chain.stationary_integral(fam.mean))
    return TailRegime(law.tail_class, alpha=law.alpha)


def _lambda_moment(chain: ParameterChain, power: float, target: TargetSet | None = None) -> float:
    return chain.stationary_integral(lambda lam: lam**power, target)


def u_asymptote(chain: ParameterChain, fam: ScaledFamily, t: float, target: TargetSet) -> float:
    """Leading-order behaviour of ``U(t, A)`` as ``t -> inf``.

    Raises
    ------
    DegenerateTargetError
        If the stationary law gives ``A`` no mass.
    """
    t = float(t)
    if not t > 0:
        raise DomainError(f"t must be positive, got {t!r}")
    mass = chain.stationary_mass(target)
    if not mass > 0:
        raise DegenerateTargetError(f"stationary mass of {target.describe()} is zero")
    law = fam.ancestor
    kind = law.tail_class
    if kind is TailClass.FINITE_MEAN:
        return t * mass / tail_regime(chain, fam).mu_rho
    if kind is TailClass.REG_VARYING:
        a = law.alpha
        return math.sin(math.pi * a) / (math.pi * a) * mass / (law.sf(t) * _lambda_moment(chain, -a))
    if kind is TailClass.SLOWLY_VARYING:
        return mass / law.sf(t)
    return t * mass / (law.integrated_tail(t) * _lambda_moment(chain, -1.0))


def phi_limit(chain: ParameterChain, fam: ScaledFamily, target: TargetSet) -> float:
    """Limit of ``P(Lambda(t) in A)``; independent of the starting parameter."""
    law = fam.ancestor
    if law.tail_class is TailClass.FINITE_MEAN:
        return chain.stationary_integral(fam.mean, target) / chain.stationary_integral(fam.mean)
    a = law.alpha
    if a == 0:
        return chain.stationary_mass(target)
    return _lambda_moment(chain, -a, target) / _lambda_moment(chain, -a)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0 <= alpha <= 1:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha!r}")
    return alpha


def _quad_checked(f, lo, hi, **kw) -> float:
    val, err = integrate.quad(f, lo, hi, epsabs=_CDF_TOL, epsrel=_CDF_TOL, limit=200, **kw)
    if err > 10 * _CDF_TOL:
        raise NumericError("limit-law quadrature did not reach tolerance", lo=lo, hi=hi, abserr=err)
    return val


def age_limit_cdf(alpha: float, x: float) -> float:
    """Limit CDF of ``Y_t / t`` for tail exponent ``alpha``.

    The density is ``sin(pi a)/pi * x**-a * (1 - x)**(a - 1)`` on ``(0, 1)``,
    integrated with algebraic endpoint weights. ``alpha = 0`` is a point mass
    at 1 and ``alpha = 1`` a point mass at 0.
    """
    alpha = _check_alpha(alpha)
    x = float(x)
    if not 0 <= x <= 1:
        raise DomainError(f"age limit is supported on [0, 1], got x={x!r}")
    if alpha == 0:
        return 1.0 if x >= 1 else 0.0
    if alpha == 1:
        return 1.0
    if x == 0:
        return 0.0
    if x == 1:
        return 1.0
    c = math.sin(math.pi * alpha) / math.pi
    if x <= 0.5:
        val = _quad_checked(lambda s: (1.0 - s) ** (alpha - 1.0), 0.0, x, weight="alg", wvar=(-alpha, 0.0))
        return min(1.0, c * val)
    val = _quad_checked(lambda s: s**-alpha, x, 1.0, weight="alg", wvar=(0.0, alpha - 1.0))
    return max(0.0, 1.0 - c * val)


def residual_limit_cdf(alpha: float, x: float) -> float:
    """Limit CDF of ``Z_t / t``; density ``sin(pi a)/pi * x**-a / (1 + x)``.

    For ``alpha = 0`` all mass escapes to infinity and the CDF vanishes at
    every finite ``x``; for ``alpha = 1`` it is a point mass at 0.
    """
    alpha = _check_alpha(alpha)
    x = float(x)
    if not x >= 0:
        raise DomainError(f"residual limit is supported on [0, inf), got x={x!r}")
    if alpha == 0:
        return 1.0 if math.isinf(x) else 0.0
    if alpha == 1:
        return 1.0
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    c = math.sin(math.pi * alpha) / math.pi
    if x <= 1:
        val = _quad_checked(lambda s: 1.0 / (1.0 + s), 0.0, x, weight="alg", wvar=(-alpha, 0.0))
        return min(1.0, c * val)
    # upper tail after s -> 1/s
    val = _quad_checked(lambda u: 1.0 / (1.0 + u), 0.0, 1.0 / x, weight="alg", wvar=(alpha - 1.0, 0.0))
    return max(0.0, 1.0 - c * val)


def _finite_mean_rho(chain: ParameterChain, fam: ScaledFamily) -> float:
    if not fam.ancestor.has_finite_mean:
        raise DomainError("finite-mean limit laws need an ancestor with finite mean")
    return chain.stationary_integral(fam.mean)


def age_limit_cdf_finite(chain: ParameterChain, fam: ScaledFamily, x: float) -> float:
    """Limit CDF of the (unscaled) age ``Y_t`` for finite-mean laws."""
    x = float(x)
    if not x >= 0:
        raise DomainError(f"x must be nonnegative, got {x!r}")
    mu = _finite_mean_rho(chain, fam)
    return min(1.0, chain.stationary_integral(lambda lam: fam.integrated_tail(lam, x)) / mu)


def residual_limit_cdf_finite(chain: ParameterChain, fam: ScaledFamily, x: float) -> float:
    """Limit CDF of ``Z_t``; the same law as the limiting age."""
    return age_limit_cdf_finite(chain, fam, x)


def lifetime_limit_cdf_finite(chain: ParameterChain, fam: ScaledFamily, x: float) -> float:
    """Limit CDF of the total lifetime ``C_t``: size-biased waiting times."""
    x = float(x)
    if not x >= 0:
        raise DomainError(f"x must be nonnegative, got {x!r}")
    mu = _finite_mean_rho(chain, fam)

    def biased(lam):
        # int_0^x s dF_lam(s) = int_0^x (1 - F_lam) - x (1 - F_lam(x))
        return fam.integrated_tail(lam, x) - x * float(fam.sf(lam, x))

    return min(1.0, max(0.0, chain.stationary_integral(biased) / mu))


def xi_asymptote(chain: ParameterChain, fam: ScaledFamily, term: InhomogeneousTerm, target: TargetSet, z: float) -> float:
    """Small-``z`` asymptote ``int phi_h d rho / int (1 - phi_lam(z)) d rho``."""
    z = float(z)
    if not z > 0:
        raise DomainError(f"Laplace variable must be positive, got {z!r}")
    num = chain.stationary_integral(lambda lam: laplace_of_h(term, fam, lam, z, target))
    den = chain.stationary_integral(lambda lam: fam.laplace_deficit(lam, z))
    return num / den


def lemma_condition(chain: ParameterChain, fam: ScaledFamily, term: InhomogeneousTerm, target: TargetSet, z_grid) -> list[float]:
    """``sup_lam phi_lam(z, A) / int phi_lam(z, A) d rho`` along ``z_grid``.

    Bounded values as ``z -> 0`` indicate the asymptote applies. The
    supremum runs over the states of a finite chain, or over 65 equispaced
    points of ``[a, b]`` for a resampling kernel.
    """
    if isinstance(chain, FiniteChain):
        pts = chain.states
    else:
        pts = np.linspace(chain.a, chain.b, 65)
    out = []
    for z in z_grid:
        vals = [laplace_of_h(term, fam, float(lam), z, target) for lam in pts]
        mean = chain.stationary_integral(lambda lam: laplace_of_h(term, fam, lam, z, target))
        out.append(max(vals) / mean if mean > 0 else math.inf)
    return out


@dataclass(frozen=True)
class TauberianRow:
    z: float
    deficit: float
    asymptote: float

    @property
    def ratio(self) -> float:
        return self.deficit / self.asymptote


def tauberian_check(law: AncestorLaw, z_grid) -> list[TauberianRow]:
    """Compare ``1 - phi(z)`` with its Tauberian equivalent along ``z_grid``.

    Regularly varying tails use ``Gamma(1 - a) z**a L(1/z)``, slowly varying
    ones ``L(1/z) = 1 - F(1/z)`` and the ``alpha = 1`` boundary
    ``z * int_0^{1/z} (1 - F)``.
    """
    kind = law.tail_class
    if kind is TailClass.FINITE_MEAN:
        raise DomainError(f"{law!r} has a finite mean; there is no Tauberian equivalent to check")
    rows = []
    for z in z_grid:
        z = float(z)
        if not z > 0:
            raise DomainError(f"Laplace variable must be positive, got {z!r}")
        t = 1.0 / z
        if kind is TailClass.REG_VARYING:
            a = law.alpha
            asym = math.gamma(1.0 - a) * z**a * law.slowly_varying_part(t)
        elif kind is TailClass.SLOWLY_VARYING:
            asym = law.sf(t)
        else:
            asym = z * law.integrated_tail(t)
        rows.append(TauberianRow(z, law.laplace_deficit(z), float(asym)))
    return rows


@dataclass(frozen=True)
class Preset:
    """Ready-to-run configuration for the thermalization application.

    Speeds are resampled uniformly on ``[sqrt(E), sqrt(2E)]``; ``d = 1``
    uses a Pareto tail ``C t**-1/2`` and ``d = 2`` the slowly varying tail
    ``C / ln t``.
    """

    d: int
    E: float
    C: float
    chain: ResamplingKernel = field(repr=False)
    family: ScaledFamily = field(repr=False)
    target: TargetSet = TargetSet.all()

    def predicted_U(self, t: float) -> float:
        return u_asymptote(self.chain, self.family, t, self.target)

    def speed_limit_density(self, lam):
        """Density of the limiting speed law (``lambda**-alpha`` reweighting)."""
        alpha = self.family.ancestor.alpha
        norm = _lambda_moment(self.chain, -alpha)
        return np.asarray(self.chain.density(lam)) * np.asarray(lam, dtype=float) ** -alpha / norm


def application_preset(d: int, E: float, C: float = 1.0) -> Preset:
    if d not in (1, 2):
        raise DomainError(f"d must be 1 or 2, got {d!r}")
    E, C = float(E), float(C)
    if not E > 0 or not C > 0:
        raise DomainError(f"E and C must be positive, got E={E!r}, C={C!r}")
    a, b = math.sqrt(E), math.sqrt(2.0 * E)
    law = ParetoRV(0.5, C * C) if d == 1 else LogPareto(C)
    return Preset(d, E, C, ResamplingKernel.uniform(a, b), ScaledFamily(law, a, b))

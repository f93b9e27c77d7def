"""Markov renewal processes whose waiting-time laws are rescalings of one ancestor law."""

from mrp.distributions import Exponential, Gamma, LogPareto, ParetoRV, ScaledFamily, TailClass
from mrp.errors import ChainError, ConfigError, DegenerateTargetError, DomainError, MRPError, NumericError
from mrp.param_chain import FiniteChain, ResamplingKernel, TargetSet

__version__ = "0.1.0"

__all__ = [
    "Exponential",
    "Gamma",
    "LogPareto",
    "ParetoRV",
    "ScaledFamily",
    "TailClass",
    "FiniteChain",
    "ResamplingKernel",
    "TargetSet",
    "MRPError",
    "DomainError",
    "ChainError",
    "NumericError",
    "DegenerateTargetError",
    "ConfigError",
]

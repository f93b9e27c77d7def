"""Monte Carlo engine for Markov renewal paths.

A path draws ``X_j`` from ``F_{Lambda_j}`` and steps the parameter chain
after every interval, so ``S_n = X_0 + ... + X_{n-1}``. At a horizon ``t``
the ongoing interval is ``[S_{N_t - 1}, S_{N_t})`` with
``N_t = inf{n : S_n > t}``; its parameter is ``Lambda(t) = Lambda_{N_t - 1}``,
the age is ``Y_t = t - S_{N_t - 1}`` and the residual ``Z_t = S_{N_t} - t``.

Every path consumes its stream as interleaved pairs ``(u_wait_j, u_step_j)``:
the first fixes ``X_j`` by inverse-CDF, the second moves ``Lambda_j`` to
``Lambda_{j+1}``.
"""

from __future__ import annotations

import enum
import math
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from mrp._kernels import scan_finite_chain
from mrp.distributions import SATURATION, ScaledFamily
from mrp.errors import BudgetExceededError, DomainError
from mrp.param_chain import FiniteChain, ParameterChain, ResamplingKernel, TargetSet
from mrp.streams import PhiloxStream, UniformStream

__all__ = [
    "PathSnapshot",
    "Estimate",
    "Replications",
    "Observable",
    "simulate_until",
    "simulate_path",
    "simulate_replications",
    "estimate_U",
    "estimate_Phi",
    "estimate_scaled_age_cdf",
    "default_threads",
]

_FIRST_CHUNK = 64
_MAX_CHUNK = 1 << 17
_BLOCK = 256


@dataclass(frozen=True)
class PathSnapshot:
    t: float
    n_t: int
    lambda_at_t: float
    age: float
    residual: float
    total: float
    jumps_into_A: int


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    reps: int
    seed: int

    @classmethod
    def from_values(cls, values, seed: int) -> Estimate:
        values = np.asarray(values, dtype=float)
        reps = values.size
        if reps < 2:
            raise DomainError("an estimate needs at least two replications")
        # fsum keeps the aggregate independent of summation order
        mu = math.fsum(values) / reps
        var = math.fsum((values - mu) ** 2) / (reps - 1)
        return cls(mu, math.sqrt(var / reps), reps, seed)


class Observable(enum.Enum):
    AGE = "age"
    RESIDUAL = "residual"
    TOTAL = "total"


def _check_start(chain: ParameterChain, fam: ScaledFamily, lam0: float) -> float:
    if chain.a < fam.a - 1e-12 * fam.b or chain.b > fam.b + 1e-12 * fam.b:
        raise DomainError(f"chain parameters [{chain.a}, {chain.b}] exceed family interval [{fam.a}, {fam.b}]")
    if isinstance(chain, FiniteChain):
        return chain.states[chain.index(lam0)]
    if not chain.a <= lam0 <= chain.b:
        raise DomainError(f"initial parameter {lam0!r} outside [{chain.a}, {chain.b}]")
    return float(lam0)


def simulate_path(
    chain: ParameterChain,
    fam: ScaledFamily,
    lam0: float,
    times,
    target: TargetSet,
    stream: UniformStream,
    max_events: int | None = None,
) -> dict[str, np.ndarray]:
    """Run one path past ``max(times)`` and record the observables at each time.

    ``times`` must be positive and sorted. Returns arrays keyed by
    ``n_t``, ``lambda_at_t``, ``age``, ``residual``, ``jumps``. When
    ``max_events`` is given, a path still short of the last horizon after
    that many renewals raises :class:`BudgetExceededError`.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(times <= 0) or np.any(np.diff(times) < 0):
        raise DomainError("horizons must be a nonempty sorted list of positive times")
    lam0 = _check_start(chain, fam, lam0)
    nt = times.size
    n_t = np.empty(nt, dtype=np.int64)
    lam_at = np.empty(nt)
    age = np.empty(nt)
    residual = np.empty(nt)
    jumps = np.empty(nt, dtype=np.int64)

    finite = isinstance(chain, FiniteChain)
    if finite:
        states = chain.state_array
        in_target = np.asarray(target.contains(states), dtype=bool)
        cum = chain.cumulative_rows
        cur = chain.index(lam0)
    else:
        cur_lam = lam0
    ancestor = fam.ancestor

    S = 0.0  # S_n, start of the current interval
    n = 0  # index of the current interval
    prior_hits = 0  # n' in 1..n with Lambda_{n'} in A
    tail_hits = 0  # of those, how many sit exactly at S (matters only for S_{n'} == t ties)
    k = 0
    chunk = _FIRST_CHUNK
    while k < nt:
        u = stream.uniforms(2 * chunk).reshape(chunk, 2)
        base = np.asarray(ancestor.ppf(u[:, 0]))
        if finite:
            seq = scan_finite_chain(cum, cur, u[:, 1]) if len(states) > 1 else np.zeros(chunk + 1, dtype=np.int64)
            lam_seq = states[seq]
            hit = in_target[seq[1:]]
        else:
            lam_seq = np.empty(chunk + 1)
            lam_seq[0] = cur_lam
            lam_seq[1:] = chain.ppf(u[:, 1])
            hit = np.asarray(target.contains(lam_seq[1:]), dtype=bool)
        waits = np.minimum(base / lam_seq[:-1], SATURATION)
        ends = S + np.cumsum(waits)  # ends[i] = S_{n+i+1}

        while k < nt:
            t = times[k]
            pos = int(np.searchsorted(ends, t, side="right"))
            if pos == chunk:
                break
            start = ends[pos - 1] if pos > 0 else S
            n_t[k] = n + pos + 1
            lam_at[k] = lam_seq[pos]
            age[k] = t - start
            residual[k] = ends[pos] - t
            before = prior_hits - (tail_hits if S == t else 0)
            jumps[k] = before + int(np.count_nonzero(hit[:pos] & (ends[:pos] < t)))
            k += 1
        if k < nt:
            last = ends[-1]
            at_last = int(np.count_nonzero(hit & (ends == last)))
            tail_hits = at_last + (tail_hits if S == last else 0)
            prior_hits += int(np.count_nonzero(hit))
            S = last
            n += chunk
            if finite:
                cur = int(seq[-1])
            else:
                cur_lam = float(lam_seq[-1])
            chunk = min(2 * chunk, _MAX_CHUNK)
            if max_events is not None and n > max_events:
                raise BudgetExceededError(n, max_events, float(times[k]))
    return {"n_t": n_t, "lambda_at_t": lam_at, "age": age, "residual": residual, "jumps": jumps}


def simulate_until(
    chain: ParameterChain,
    fam: ScaledFamily,
    lam0: float,
    t: float,
    target: TargetSet,
    stream: UniformStream,
) -> PathSnapshot:
    """Simulate one path until it passes ``t`` and return its snapshot at ``t``."""
    t = float(t)
    if not t > 0:
        raise DomainError(f"horizon must be positive, got {t!r}")
    rec = simulate_path(chain, fam, lam0, [t], target, stream)
    a, r = float(rec["age"][0]), float(rec["residual"][0])
    return PathSnapshot(
        t=t,
        n_t=int(rec["n_t"][0]),
        lambda_at_t=float(rec["lambda_at_t"][0]),
        age=a,
        residual=r,
        total=a + r,
        jumps_into_A=int(rec["jumps"][0]),
    )


@dataclass(frozen=True)
class Replications:
    """Per-replication observables, arrays of shape ``(reps, len(times))``."""

    times: np.ndarray
    lam0: float
    target: TargetSet
    seed: int
    n_t: np.ndarray
    lambda_at_t: np.ndarray
    age: np.ndarray
    residual: np.ndarray
    jumps: np.ndarray

    @property
    def reps(self) -> int:
        return self.n_t.shape[0]

    @property
    def total(self) -> np.ndarray:
        return self.age + self.residual

    def column(self, t: float) -> int:
        hits = np.flatnonzero(self.times == t)
        if hits.size == 0:
            raise DomainError(f"time {t!r} was not simulated")
        return int(hits[0])

    def u_values(self, t: float) -> np.ndarray:
        start_in = 1 if self.target.contains(self.lam0) else 0
        return start_in + self.jumps[:, self.column(t)]

    def estimate_U(self, t: float) -> Estimate:
        return Estimate.from_values(self.u_values(t), self.seed)

    def estimate_Phi(self, t: float, target: TargetSet | None = None) -> Estimate:
        target = self.target if target is None else target
        hit = np.asarray(target.contains(self.lambda_at_t[:, self.column(t)]), dtype=float)
        return Estimate.from_values(hit, self.seed)

    def observable(self, t: float, which: Observable) -> np.ndarray:
        col = self.column(t)
        if which is Observable.AGE:
            return self.age[:, col]
        if which is Observable.RESIDUAL:
            return self.residual[:, col]
        return self.total[:, col]

    def scaled_cdf(self, t: float, grid, which: Observable, scale: float | None = None) -> list[tuple[float, Estimate]]:
        """Empirical ``P(obs / scale <= x)`` on ``grid``; ``scale`` defaults to ``t``."""
        scale = t if scale is None else scale
        vals = self.observable(t, which) / scale
        return [(float(x), Estimate.from_values(vals <= x, self.seed)) for x in grid]


def default_threads() -> int:
    env = os.environ.get("MRP_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _run_block(chain, fam, lam0, times, target, seed, max_events, lo, hi):
    nt = len(times)
    out = {
        "n_t": np.empty((hi - lo, nt), dtype=np.int64),
        "lambda_at_t": np.empty((hi - lo, nt)),
        "age": np.empty((hi - lo, nt)),
        "residual": np.empty((hi - lo, nt)),
        "jumps": np.empty((hi - lo, nt), dtype=np.int64),
    }
    for r in range(lo, hi):
        rec = simulate_path(chain, fam, lam0, times, target, PhiloxStream(seed, r), max_events)
        for key, arr in rec.items():
            out[key][r - lo] = arr
    return out


_WORKER_ARGS = None


def _init_worker(args):
    global _WORKER_ARGS
    _WORKER_ARGS = args


def _worker_block(bounds):
    lo, hi = bounds
    return _run_block(*_WORKER_ARGS, lo, hi)


def simulate_replications(
    chain: ParameterChain,
    fam: ScaledFamily,
    lam0: float,
    times,
    target: TargetSet,
    reps: int,
    seed: int,
    threads: int = 1,
    max_events: int | None = None,
) -> Replications:
    """Simulate ``reps`` independent paths, replication ``r`` on stream ``(seed, r)``.

    With ``threads > 1`` blocks of replications go to a process pool; the
    assembled arrays are identical to the sequential run.
    """
    times = np.unique(np.asarray(times, dtype=float))
    if reps < 1:
        raise DomainError("reps must be positive")
    lam0 = _check_start(chain, fam, lam0)
    args = (chain, fam, lam0, times, target, int(seed), max_events)
    bounds = [(lo, min(lo + _BLOCK, reps)) for lo in range(0, reps, _BLOCK)]
    if threads <= 1 or len(bounds) == 1:
        parts = [_run_block(*args, lo, hi) for lo, hi in bounds]
    else:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=threads, mp_context=ctx, initializer=_init_worker, initargs=(args,)) as pool:
            parts = list(pool.map(_worker_block, bounds))
    merged = {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}
    return Replications(times=times, lam0=lam0, target=target, seed=int(seed), **merged)


def estimate_U(chain, fam, lam0, t, target, reps, seed, threads=1) -> Estimate:
    """Mean of ``1_A(lam0) + #{n >= 1 : S_n < t, Lambda_n in A}`` over replications."""
    if reps < 2:
        raise DomainError("reps must be at least 2")
    if target.kind == "empty":
        return Estimate(0.0, 0.0, reps, seed)
    sim = simulate_replications(chain, fam, lam0, [t], target, reps, seed, threads)
    return sim.estimate_U(float(t))


def estimate_Phi(chain, fam, lam0, t, target, reps, seed, threads=1) -> Estimate:
    """Fraction of replications whose ongoing parameter at ``t`` lies in ``target``."""
    if reps < 2:
        raise DomainError("reps must be at least 2")
    sim = simulate_replications(chain, fam, lam0, [t], target, reps, seed, threads)
    return sim.estimate_Phi(float(t))


def estimate_scaled_age_cdf(chain, fam, lam0, t, grid, which, reps, seed, threads=1):
    """Empirical CDF of ``Y_t / t`` (or ``Z_t / t``, ``C_t / t``) on a sorted grid."""
    grid = list(grid)
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise DomainError("grid must be sorted")
    if reps < 2:
        raise DomainError("reps must be at least 2")
    which = Observable(which)
    sim = simulate_replications(chain, fam, lam0, [t], TargetSet.all(), reps, seed, threads)
    return sim.scaled_cdf(float(t), grid, which)

"""Run a validated configuration and collect comparison rows.

Each row pairs an estimate (Monte Carlo or deterministic) with a predicted
value and is judged against the tolerance declared for its label.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mrp import asymptotics
from mrp.config import ExperimentConfig, ExperimentKind
from mrp.distributions import Exponential, TailClass
from mrp.errors import DegenerateTargetError
from mrp.param_chain import FiniteChain
from mrp.renewal_solver import (
    GridSolution,
    InhomogeneousTerm,
    TermKind,
    laplace_of_h,
    laplace_solve,
    solve_grid,
    solve_series,
)
from mrp.simulator import Estimate, Observable, Replications, simulate_replications

__all__ = ["ResultRow", "RESULT_COLUMNS", "run_experiment", "write_results", "write_summary", "read_results"]

RESULT_COLUMNS = ["experiment", "t_or_z_or_x", "initial_state", "estimate", "stderr", "predicted", "ratio"]


@dataclass
class ResultRow:
    experiment: str
    point: float
    initial_state: float | None
    estimate: float
    stderr: float | None = None
    predicted: float | None = None
    passed: bool | None = None

    @property
    def ratio(self) -> float | None:
        if self.predicted is None or self.predicted == 0 or not math.isfinite(self.predicted):
            return None
        return self.estimate / self.predicted

    @property
    def label(self) -> str:
        return self.experiment.split("@", 1)[0]

    def cells(self) -> list[str]:
        def fmt(v):
            return "" if v is None else format(float(v), ".17g")

        return [self.experiment, fmt(self.point), fmt(self.initial_state), fmt(self.estimate),
                fmt(self.stderr), fmt(self.predicted), fmt(self.ratio)]


def _mc(cfg: ExperimentConfig, lam0: float, times, threads: int) -> Replications:
    return simulate_replications(cfg.chain, cfg.family, lam0, times, cfg.target, cfg.reps, cfg.seed, threads, cfg.max_events)


def _maybe(fn):
    try:
        return fn()
    except DegenerateTargetError:
        return None


def _grid(cfg: ExperimentConfig, term, t_max) -> GridSolution | None:
    if cfg.dt is None or not isinstance(cfg.chain, FiniteChain):
        return None
    return solve_grid(cfg.chain, cfg.family, term, cfg.target, cfg.dt, t_max)


def _grid_value(grid: GridSolution, t: float, lam0: float) -> float:
    k = min(int(round(t / grid.dt)), grid.values.shape[0] - 1)
    return float(grid.values[k, grid.states.index(lam0)])


def _exact_poisson_u(cfg: ExperimentConfig, lam0: float, t: float) -> float | None:
    chain, law = cfg.chain, cfg.family.ancestor
    if isinstance(chain, FiniteChain) and len(chain.states) == 1 and isinstance(law, Exponential):
        if cfg.target.contains(lam0):
            return 1.0 + law.rate * lam0 * t
        return 0.0
    return None


def _run_u(cfg, threads, rows):
    grid = _grid(cfg, InhomogeneousTerm.u_count(), max(cfg.times))
    for lam0 in cfg.initial:
        sim = _mc(cfg, lam0, cfg.times, threads)
        for t in cfg.times:
            est = sim.estimate_U(t)
            pred = _maybe(lambda: asymptotics.u_asymptote(cfg.chain, cfg.family, t, cfg.target))
            rows.append(ResultRow("U", t, lam0, est.mean, est.stderr, pred))
            exact = _exact_poisson_u(cfg, lam0, t)
            if exact is not None:
                rows.append(ResultRow("U_exact", t, lam0, est.mean, est.stderr, exact))
            if grid is not None:
                rows.append(ResultRow("U_grid", t, lam0, est.mean, est.stderr, _grid_value(grid, t, lam0)))


def _run_phi(cfg, threads, rows):
    grid = _grid(cfg, InhomogeneousTerm.phi_tail(), max(cfg.times))
    limit = asymptotics.phi_limit(cfg.chain, cfg.family, cfg.target)
    for lam0 in cfg.initial:
        sim = _mc(cfg, lam0, cfg.times, threads)
        for t in cfg.times:
            est = sim.estimate_Phi(t)
            rows.append(ResultRow("Phi", t, lam0, est.mean, est.stderr, limit))
            if grid is not None:
                rows.append(ResultRow("Phi_grid", t, lam0, est.mean, est.stderr, _grid_value(grid, t, lam0)))


def _limit_cdf(cfg: ExperimentConfig, which: Observable):
    fam, chain = cfg.family, cfg.chain
    law = fam.ancestor
    if cfg.scale_by_t:
        alpha = 1.0 if law.tail_class is TailClass.FINITE_MEAN else law.alpha
        if which is Observable.AGE:
            return lambda x: 1.0 if x >= 1 else asymptotics.age_limit_cdf(alpha, x)
        if which is Observable.RESIDUAL:
            return lambda x: asymptotics.residual_limit_cdf(alpha, x)
        if alpha in (0.0, 1.0):
            # the total lifetime inherits the degenerate limit of its parts
            return lambda x: 1.0 if (alpha == 1.0 or math.isinf(x)) else 0.0
        return None
    if law.tail_class is not TailClass.FINITE_MEAN:
        return None
    if which is Observable.TOTAL:
        return lambda x: asymptotics.lifetime_limit_cdf_finite(chain, fam, x)
    return lambda x: asymptotics.age_limit_cdf_finite(chain, fam, x)


def _run_lifetime(cfg, threads, rows, which: Observable):
    name = {Observable.AGE: "Age", Observable.RESIDUAL: "Residual", Observable.TOTAL: "Total"}[which]
    limit = _limit_cdf(cfg, which)
    preds = [limit(x) for x in cfg.x_grid] if limit is not None else None
    for lam0 in cfg.initial:
        sim = _mc(cfg, lam0, cfg.times, threads)
        for t in cfg.times:
            vals = sim.observable(t, which) / (t if cfg.scale_by_t else 1.0)
            gaps = []
            for j, x in enumerate(cfg.x_grid):
                est = Estimate.from_values(vals <= x, cfg.seed)
                pred = preds[j] if preds is not None else None
                rows.append(ResultRow(f"{name}@t={t:.17g}", x, lam0, est.mean, est.stderr, pred))
                if pred is not None:
                    gaps.append(abs(est.mean - pred))
            if gaps:
                rows.append(ResultRow(f"{name}_KS@t={t:.17g}", t, lam0, max(gaps), None, 0.0))


def _mc_for_term(sim: Replications, term, t: float) -> Estimate:
    col = sim.column(t)
    in_a = np.asarray(sim.target.contains(sim.lambda_at_t[:, col]), dtype=bool)
    kind = term.kind
    if kind is TermKind.U_COUNT:
        return sim.estimate_U(t)
    if kind is TermKind.PHI_TAIL:
        return Estimate.from_values(in_a, sim.seed)
    which = {TermKind.AGE_TAIL: Observable.AGE, TermKind.RESIDUAL_WINDOW: Observable.RESIDUAL,
             TermKind.TOTAL_WINDOW: Observable.TOTAL}[kind]
    return Estimate.from_values(in_a & (sim.observable(t, which) <= term.x), sim.seed)


def _run_grid(cfg, threads, rows, out_dir: Path | None):
    grid = solve_grid(cfg.chain, cfg.family, cfg.term, cfg.target, cfg.dt, max(cfg.times))
    if out_dir is not None:
        grid.to_csv(out_dir / "grid.csv")
    for lam0 in cfg.initial:
        sim = _mc(cfg, lam0, cfg.times, threads) if cfg.reps >= 2 else None
        for t in cfg.times:
            g = _grid_value(grid, t, lam0)
            rows.append(ResultRow("grid", t, lam0, g, 0.0, g))
            if cfg.n_max > 0:
                ser = solve_series(cfg.chain, cfg.family, cfg.term, cfg.target, t, cfg.n_max, cfg.dt)
                rows.append(ResultRow("series", t, lam0, ser.values[lam0], ser.remainder, g))
            if sim is not None:
                est = _mc_for_term(sim, cfg.term, t)
                rows.append(ResultRow("mc", t, lam0, est.mean, est.stderr, g))


def _run_laplace(cfg, rows):
    chain, fam = cfg.chain, cfg.family
    for z in cfg.z_grid:
        phi_h = [laplace_of_h(cfg.term, fam, lam, z, cfg.target) for lam in chain.states]
        xi = laplace_solve(chain, fam, phi_h, z)
        pred = asymptotics.xi_asymptote(chain, fam, cfg.term, cfg.target, z)
        for lam0 in cfg.initial:
            rows.append(ResultRow("Xi", z, lam0, float(xi[chain.index(lam0)]), 0.0, pred))


def _run_tauberian(cfg, rows):
    for row in asymptotics.tauberian_check(cfg.family.ancestor, cfg.z_grid):
        rows.append(ResultRow("Tauberian", row.z, None, row.deficit, 0.0, row.asymptote))


def run_experiment(cfg: ExperimentConfig, threads: int = 1, out_dir: Path | None = None) -> list[ResultRow]:
    """Execute ``cfg`` and return its rows with pass/fail flags filled in."""
    rows: list[ResultRow] = []
    kind = cfg.kind
    if kind in (ExperimentKind.U, ExperimentKind.PRESET):
        _run_u(cfg, threads, rows)
    elif kind is ExperimentKind.PHI:
        _run_phi(cfg, threads, rows)
    elif kind is ExperimentKind.AGE:
        _run_lifetime(cfg, threads, rows, Observable.AGE)
    elif kind is ExperimentKind.RESIDUAL:
        _run_lifetime(cfg, threads, rows, Observable.RESIDUAL)
    elif kind is ExperimentKind.TOTAL:
        _run_lifetime(cfg, threads, rows, Observable.TOTAL)
    elif kind is ExperimentKind.GRID_SOLVE:
        _run_grid(cfg, threads, rows, out_dir)
    elif kind is ExperimentKind.LAPLACE_CHECK:
        _run_laplace(cfg, rows)
    else:
        _run_tauberian(cfg, rows)
    for row in rows:
        tol = cfg.tolerances.get(row.label.lower())
        if tol is not None and row.predicted is not None:
            row.passed = tol.passes(row.estimate, row.stderr or 0.0, row.predicted)
    return rows


def results_text(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for row in rows:
        w.writerow(row.cells())
    return buf.getvalue()


def write_results(rows: list[ResultRow], path: Path) -> None:
    Path(path).write_text(results_text(rows))


def write_summary(cfg: ExperimentConfig, rows: list[ResultRow], wall: float, path: Path, threads: int) -> None:
    checked = [r for r in rows if r.passed is not None]
    summary = {
        "config": cfg.echo,
        "source": cfg.source,
        "kind": cfg.kind.value,
        "seed": cfg.seed,
        "threads": threads,
        "tolerances": {k: v.text for k, v in cfg.tolerances.items()},
        "rows": [
            {
                "experiment": r.experiment,
                "t_or_z_or_x": r.point,
                "initial_state": r.initial_state,
                "estimate": r.estimate,
                "stderr": r.stderr,
                "predicted": r.predicted,
                "ratio": r.ratio,
                "tolerance": cfg.tolerances[r.label.lower()].text if r.label.lower() in cfg.tolerances else None,
                "passed": r.passed,
            }
            for r in rows
        ],
        "checked": len(checked),
        "failed": sum(1 for r in checked if not r.passed),
        "all_passed": all(r.passed for r in checked),
        "wall_time_s": round(wall, 3),
    }
    Path(path).write_text(json.dumps(summary, indent=2, allow_nan=False, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def read_results(path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULT_COLUMNS:
            raise ValueError(f"{path}: expected columns {RESULT_COLUMNS}, got {header}")
        return [dict(zip(header, rec)) for rec in reader]


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start

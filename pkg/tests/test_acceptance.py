"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records a PASS/FAIL line through ``record_criterion`` before it
asserts, and the terminal summary lists one line per criterion.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from mrp.asymptotics import (
    age_limit_cdf,
    phi_limit,
    residual_limit_cdf,
    tauberian_check,
    u_asymptote,
    xi_asymptote,
)
from mrp.cli import main
from mrp.distributions import Exponential, LogPareto, ParetoRV, ScaledFamily
from mrp.errors import BudgetExceededError
from mrp.param_chain import FiniteChain, ResamplingKernel, TargetSet
from mrp.renewal_solver import InhomogeneousTerm, laplace_of_h, laplace_solve, solve_grid, solve_series
from mrp.simulator import estimate_U, simulate_replications

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

# sqrt-weighted share of [1, 1.5] under uniform resampling on [1, 2], and its 1/lam analogue (30 digits)
PHI_HALF = 0.54258211658737129
PHI_EXP = 0.58496250072115618

# a path at t = 1e9 with ParetoRV(1, 1) needs ~6.6e7 renewals; this caps the work per path
BOUNDARY_ONE_BUDGET = 10**7


def _two_state():
    return FiniteChain([1.0, 2.0], [[0.9, 0.1], [0.2, 0.8]])


def _uniform():
    return ResamplingKernel.uniform(1.0, 2.0)


def _trend_to_one(ratios, errs):
    """``|r_k - 1|`` never grows by more than three combined standard errors."""
    return all(
        abs(r1 - 1) <= abs(r0 - 1) + 3 * math.hypot(e0, e1)
        for (r0, e0), (r1, e1) in zip(zip(ratios, errs), zip(ratios[1:], errs[1:]))
    )


def test_criterion_1_poisson(record_criterion):
    start = time.perf_counter()
    chain = FiniteChain([1.0], [[1.0]])
    fam = ScaledFamily(Exponential(1.0), 1.0, 1.0)
    est = estimate_U(chain, fam, 1.0, 10.0, TargetSet.all(), 100_000, 1)
    grid = solve_grid(chain, fam, InhomogeneousTerm.u_count(), TargetSet.all(), 0.005, 10.0).value(10.0, 1.0)
    elapsed = time.perf_counter() - start
    ok = abs(est.mean - 11) <= 3 * est.stderr and abs(grid - 11) <= 0.05 and elapsed < 30
    record_criterion(
        "1", ok, f"MC U(10)={est.mean:.5f}+-{est.stderr:.5f}, grid U(10)={grid:.5f}, {elapsed:.1f}s (<30s)"
    )
    assert ok


def test_criterion_2_finite_mean_renewal(record_criterion):
    start = time.perf_counter()
    chain, fam, target = _two_state(), ScaledFamily(Exponential(1.0), 1.0, 2.0), TargetSet.states([1.0])
    pred = u_asymptote(chain, fam, 1e3, target)
    ratios = [estimate_U(chain, fam, lam0, 1e3, target, 10_000, 2).mean / pred for lam0 in chain.states]
    elapsed = time.perf_counter() - start
    ok = all(0.95 <= r <= 1.05 for r in ratios) and elapsed < 120
    record_criterion("2", ok, f"U/asymptote = {ratios[0]:.4f}, {ratios[1]:.4f} (pred {pred:.2f}), {elapsed:.1f}s (<120s)")
    assert ok


def test_criterion_3_half_renewal(record_criterion):
    start = time.perf_counter()
    chain, fam = _uniform(), ScaledFamily(ParetoRV(0.5, 1.0), 1.0, 2.0)
    times = [1e4, 1e5, 1e6]
    sim = simulate_replications(chain, fam, 1.5, times, TargetSet.all(), 10_000, 3)
    preds = [u_asymptote(chain, fam, t, TargetSet.all()) for t in times]
    ests = [sim.estimate_U(t) for t in times]
    ratios = [e.mean / p for e, p in zip(ests, preds)]
    errs = [e.stderr / p for e, p in zip(ests, preds)]
    elapsed = time.perf_counter() - start
    ok = 0.90 <= ratios[-1] <= 1.10 and _trend_to_one(ratios, errs) and elapsed < 300
    shown = ", ".join(f"{r:.4f}+-{e:.4f}" for r, e in zip(ratios, errs))
    record_criterion("3", ok, f"ratios at t=1e4,1e5,1e6: {shown}; mean renewals {sim.n_t[:, -1].mean():.0f}; {elapsed:.1f}s")
    assert ok


def _phi_check(fam, t, limit_ref, seed):
    chain, target = _uniform(), TargetSet.interval(1.0, 1.5)
    limit = phi_limit(chain, fam, target)
    ests = [simulate_replications(chain, fam, lam0, [t], target, 10_000, seed).estimate_Phi(t) for lam0 in (1.0, 2.0)]
    within = all(abs(e.mean - limit) <= 3 * e.stderr + 0.02 for e in ests)
    close = abs(ests[0].mean - ests[1].mean) <= 0.02
    ok = within and close and limit == pytest.approx(limit_ref, rel=1e-10)
    return ok, f"limit {limit:.6f}; Phi from lam0=1: {ests[0].mean:.4f}, lam0=2: {ests[1].mean:.4f}"


def test_criterion_4a_phi_half(record_criterion):
    ok, detail = _phi_check(ScaledFamily(ParetoRV(0.5, 1.0), 1.0, 2.0), 1e6, PHI_HALF, 4)
    record_criterion("4a", ok, f"alpha=1/2, t=1e6: {detail}")
    assert ok


@pytest.mark.slow
def test_criterion_4b_phi_finite_mean(record_criterion):
    # ~1.4e6 renewals per path; about half an hour on one core
    ok, detail = _phi_check(ScaledFamily(Exponential(1.0), 1.0, 2.0), 1e6, PHI_EXP, 5)
    record_criterion("4b", ok, f"finite mean, t=1e6: {detail}")
    assert ok


def _ks_against(sample, cdf, upper=None):
    x = np.sort(sample)
    n = x.size
    lo = np.arange(n) / n
    hi = np.arange(1, n + 1) / n
    keep = x <= upper if upper is not None else np.ones(n, dtype=bool)
    F = np.array([cdf(v) for v in x[keep]])
    d = max(np.max(hi[keep] - F), np.max(F - lo[keep]))
    if upper is not None:
        d = max(d, abs(np.count_nonzero(keep) / n - cdf(upper)))
    return float(d)


def test_criterion_5a_dynkin_half(record_criterion):
    chain, fam = _uniform(), ScaledFamily(ParetoRV(0.5, 1.0), 1.0, 2.0)
    t = 1e6
    sim = simulate_replications(chain, fam, 1.5, [t], TargetSet.all(), 10_000, 6)
    ks_age = _ks_against(sim.age[:, 0] / t, lambda x: age_limit_cdf(0.5, min(x, 1.0)))
    ks_res = _ks_against(sim.residual[:, 0] / t, lambda x: residual_limit_cdf(0.5, x), upper=5.0)
    ok = ks_age <= 0.025 and ks_res <= 0.025
    record_criterion("5a", ok, f"alpha=1/2, t=1e6: KS(age)={ks_age:.4f}, KS(residual, x<=5)={ks_res:.4f} (<=0.025)")
    assert ok


def test_criterion_5b_slowly_varying_age(record_criterion):
    chain, fam = _uniform(), ScaledFamily(LogPareto(1.0), 1.0, 2.0)
    times = [1e3, 1e6, 1e9, 1e12]
    sim = simulate_replications(chain, fam, 1.5, times, TargetSet.all(), 10_000, 7)
    medians = [float(np.median(sim.age[:, k] / t)) for k, t in enumerate(times)]
    ok = all(b >= a for a, b in zip(medians, medians[1:]))
    record_criterion("5b", ok, "alpha=0 medians of Y/t: " + ", ".join(f"{m:.6f}" for m in medians))
    assert ok


@pytest.mark.xfail(
    raises=BudgetExceededError,
    strict=True,
    reason="t=1e9 and 1e12 need ~6.6e7 and ~5e10 renewals per path; beyond any desk-scale budget",
)
def test_criterion_5c_boundary_one_age(record_criterion):
    chain, fam = _uniform(), ScaledFamily(ParetoRV(1.0, 1.0), 1.0, 2.0)
    times = [1e3, 1e6, 1e9, 1e12]
    probs = []
    try:
        for k, t in enumerate(times):
            sim = simulate_replications(chain, fam, 1.5, [t], TargetSet.all(), 10_000, 8 + k,
                                        max_events=BOUNDARY_ONE_BUDGET)
            probs.append(float(np.mean(sim.age[:, 0] / t > 0.1)))
    except BudgetExceededError as exc:
        shown = ", ".join(f"t={t:g}: {p:.4f}" for t, p in zip(times, probs))
        record_criterion("5c", False, f"alpha=1 P(Y/t>0.1) {shown}; t={times[len(probs)]:g} aborted ({exc})")
        raise
    ok = all(b < a for a, b in zip(probs, probs[1:]))
    record_criterion("5c", ok, "alpha=1 P(Y/t>0.1): " + ", ".join(f"{p:.4f}" for p in probs))
    assert ok


def test_criterion_6_key_lemma(record_criterion):
    start = time.perf_counter()
    chain, fam, target = _two_state(), ScaledFamily(ParetoRV(0.5, 1.0), 1.0, 2.0), TargetSet.states([1.0])
    term = InhomogeneousTerm.phi_tail()
    errs = []
    for k in range(2, 7):
        z = 10.0**-k
        xi = laplace_solve(chain, fam, [laplace_of_h(term, fam, s, z, target) for s in chain.states], z)
        errs.append(np.abs(xi / xi_asymptote(chain, fam, term, target, z) - 1))
    errs = np.array(errs)
    elapsed = time.perf_counter() - start
    ok = bool(np.all(errs[-1] <= 0.01) and np.all(np.diff(errs, axis=0) <= 0)) and elapsed < 10
    record_criterion("6", ok, f"|ratio-1| at z=1e-6: {errs[-1][0]:.2e}, {errs[-1][1]:.2e}; monotone over k=2..6; {elapsed:.2f}s")
    assert ok


def test_criterion_7_cross_oracle(record_criterion):
    start = time.perf_counter()
    chain, fam, target = _two_state(), ScaledFamily(ParetoRV(0.5, 1.0), 1.0, 2.0), TargetSet.states([1.0])
    term, dt, times = InhomogeneousTerm.phi_tail(), 0.005, [10.0, 50.0]
    grid = solve_grid(chain, fam, term, target, dt, max(times))
    worst_gs, worst_mc, ok = 0.0, -math.inf, True
    for t in times:
        n_max = 50
        series = solve_series(chain, fam, term, target, t, n_max, dt)
        while series.remainder >= 1e-6:
            n_max *= 2
            series = solve_series(chain, fam, term, target, t, n_max, dt)
        for lam0 in chain.states:
            g, s = grid.value(t, lam0), series.values[lam0]
            mc = simulate_replications(chain, fam, lam0, [t], target, 100_000, 9).estimate_Phi(t)
            bound = 3 * mc.stderr + 10 * dt
            worst_gs = max(worst_gs, abs(g - s))
            worst_mc = max(worst_mc, abs(g - mc.mean) - bound, abs(s - mc.mean) - bound)
            ok &= abs(g - s) <= 1e-4 + 10 * dt and abs(g - mc.mean) <= bound and abs(s - mc.mean) <= bound
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120
    record_criterion("7", ok, f"max|grid-series|={worst_gs:.2e}; worst MC excess over bound {worst_mc:+.4f}; {elapsed:.1f}s")
    assert ok


def test_criterion_8_tauberian(record_criterion):
    half = tauberian_check(ParetoRV(0.5, 1.0), [1e-6])[0].ratio
    one = [r.ratio for r in tauberian_check(ParetoRV(1.0, 1.0), [10.0**-k for k in range(1, 8)])]
    trend = all(abs(b - 1) < abs(a - 1) for a, b in zip(one, one[1:]))
    ok = 0.98 <= half <= 1.02 and trend
    record_criterion("8", ok, f"alpha=1/2 ratio at z=1e-6: {half:.6f}; alpha=1 ratios " + ", ".join(f"{r:.4f}" for r in one))
    assert ok


def _preset(runner, out, d, E, t_list, reps=2000):
    res = runner.invoke(main, ["preset", "--d", str(d), "--E", str(E), "--C", "1", "--t", t_list,
                               "--reps", str(reps), "--initial", "each", "--out", str(out), "--threads", "1"])
    assert res.exit_code == 0, res.output
    import csv

    with open(out / "results.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def _preset_trend(rows):
    by_init: dict[str, list] = {}
    for r in rows:
        by_init.setdefault(r["initial_state"], []).append(r)
    ok = True
    for rs in by_init.values():
        ratios = [float(r["ratio"]) for r in rs]
        errs = [float(r["stderr"]) / float(r["predicted"]) for r in rs]
        ok &= _trend_to_one(ratios, errs)
    return ok


def test_criterion_9_presets(record_criterion, tmp_path):
    runner = CliRunner()
    d1 = _preset(runner, tmp_path / "d1", 1, 1.0, "1e4,1e5,1e6")
    d2a = _preset(runner, tmp_path / "d2a", 2, 1.0, "1e4,1e6,1e9,1e12")
    d2b = _preset(runner, tmp_path / "d2b", 2, 4.0, "1e4,1e6,1e9,1e12")
    same = [r["predicted"] for r in d2a] == [r["predicted"] for r in d2b]
    ok = _preset_trend(d1) and _preset_trend(d2a) and same
    mid = lambda rows: ", ".join(f"{float(r['ratio']):.4f}" for r in rows if r["initial_state"] == rows[len(rows) // 2]["initial_state"])  # noqa: E731
    record_criterion("9", ok, f"d=1 ratios {mid(d1)}; d=2 ratios {mid(d2a)}; d=2 predictions identical across E: {same}")
    assert ok


@pytest.mark.parametrize("name", ["half_pareto_u", "pareto_grid"])
def test_criterion_10_determinism(record_criterion, tmp_path, name):
    runner = CliRunner()
    outputs = []
    for threads in ("1", "4"):
        out = tmp_path / threads
        res = runner.invoke(main, ["run", str(CONFIGS / f"{name}.ini"), "--out", str(out), "--threads", threads])
        assert res.exit_code in (0, 1), res.output
        outputs.append((out / "results.csv").read_bytes())
    ok = outputs[0] == outputs[1]
    record_criterion("10" + ("a" if name == "half_pareto_u" else "b"), ok,
                     f"{name}.ini: results.csv byte-identical for --threads 1 and 4: {ok}")
    assert ok

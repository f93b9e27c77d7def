"""Command-line entry point: ``mrp run``, ``mrp compare`` and ``mrp preset``.

Exit codes: 0 when every declared tolerance passes, 1 when one fails,
2 for configuration or schema errors and 3 for numerical failures.
"""

from __future__ import annotations

import math
import sys
import time
from pathlib import Path

import click

from mrp.config import ExperimentConfig, load_config, parse_config
from mrp.errors import BudgetExceededError, ConfigError, MRPError, NumericError
from mrp.experiments import read_results, run_experiment, write_results, write_summary
from mrp.simulator import default_threads

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _threads(value: int | None) -> int:
    return default_threads() if value is None else max(1, value)


def _execute(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        rows = run_experiment(cfg, threads=threads, out_dir=out)
    except (NumericError, BudgetExceededError) as exc:
        click.echo(f"numeric error: {exc}", err=True)
        return EXIT_NUMERIC
    except MRPError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_CONFIG
    wall = time.perf_counter() - start
    write_results(rows, out / "results.csv")
    write_summary(cfg, rows, wall, out / "summary.json", threads)
    failed = [r for r in rows if r.passed is False]
    for r in rows:
        status = "" if r.passed is None else ("  PASS" if r.passed else "  FAIL")
        ratio = "" if r.ratio is None else f"  ratio={r.ratio:.6g}"
        init = "" if r.initial_state is None else f"  lam0={r.initial_state:g}"
        click.echo(f"{r.experiment:<24} {r.point:<12.6g}{init}  est={r.estimate:.6g}{ratio}{status}")
    click.echo(f"wrote {out / 'results.csv'} ({len(rows)} rows, {len(failed)} failed, {wall:.1f} s)")
    return EXIT_FAIL if failed else EXIT_OK


@click.group()
def main():
    """Simulate and analyse Markov renewal processes with scaled waiting times."""


@main.command()
@click.argument("config", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--out", "out", type=click.Path(file_okay=False, path_type=Path), default=Path("mrp-results"),
              show_default=True, help="Output directory.")
@click.option("--threads", type=int, default=None, help="Worker processes (default: MRP_THREADS or CPU count).")
@click.option("--seed", type=int, default=None, help="Override the configured seed.")
def run(config: Path, out: Path, threads: int | None, seed: int | None):
    """Run the experiment described by an INI CONFIG file."""
    try:
        cfg = load_config(config, seed=seed)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    sys.exit(_execute(cfg, out, _threads(threads)))


def _parse_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise click.BadParameter(f"expected a comma-separated list of numbers, got {text!r}") from None
    if not vals or any(not v > 0 for v in vals):
        raise click.BadParameter("values must be positive")
    return vals


def preset_config_text(d: int, E: float, C: float, times, reps: int, seed: int, initial: str = "each") -> str:
    """INI text equivalent to the ``preset`` command line."""
    t_list = ", ".join(format(t, ".17g") for t in times)
    return (
        "[experiment]\n"
        "kind = Preset\n"
        f"d = {d}\n"
        f"E = {E!r}\n"
        f"C = {C!r}\n"
        f"t = {t_list}\n"
        f"reps = {reps}\n"
        f"seed = {seed}\n"
        f"initial = {initial}\n"
    )


@main.command()
@click.option("--d", "d", type=click.IntRange(1, 2), required=True, help="Dimension (1 or 2).")
@click.option("--E", "E", type=float, required=True, help="Energy; speeds range over [sqrt(E), sqrt(2E)].")
@click.option("--C", "C", type=float, default=1.0, show_default=True, help="Tail constant.")
@click.option("--t", "t_list", default=None, help="Comma-separated time points.")
@click.option("--reps", type=int, default=2000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--initial", default="each", show_default=True, help="Initial speed(s) or 'each'.")
@click.option("--out", "out", type=click.Path(file_okay=False, path_type=Path), default=Path("mrp-results"),
              show_default=True)
@click.option("--threads", type=int, default=None)
def preset(d, E, C, t_list, reps, seed, initial, out, threads):
    """Run the thermalization preset and compare U(t) with its asymptote."""
    if t_list is None:
        times = [1e4, 1e5, 1e6] if d == 1 else [1e4, 1e6, 1e9, 1e12]
    else:
        times = _parse_list(t_list)
    if not (E > 0 and C > 0 and math.isfinite(E) and math.isfinite(C)):
        click.echo("config error: E and C must be positive and finite", err=True)
        sys.exit(EXIT_CONFIG)
    text = preset_config_text(d, E, C, times, reps, seed, initial)
    try:
        cfg = parse_config(text, source="preset")
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    sys.exit(_execute(cfg, out, _threads(threads)))


@main.command()
@click.argument("a", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("b", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--tol-stderr", type=float, default=None, help="Fail rows differing by more than K combined stderr.")
@click.option("--tol-abs", type=float, default=0.0, show_default=True, help="Absolute slack added to the bound.")
def compare(a: Path, b: Path, tol_stderr: float | None, tol_abs: float):
    """Row-by-row differences between two results.csv files."""
    try:
        rows_a, rows_b = read_results(a), read_results(b)
    except ValueError as exc:
        click.echo(f"schema error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    keys_a = [(r["t_or_z_or_x"], r["initial_state"]) for r in rows_a]
    keys_b = [(r["t_or_z_or_x"], r["initial_state"]) for r in rows_b]
    if keys_a != keys_b:
        click.echo("schema error: the files cover different (t_or_z_or_x, initial_state) rows", err=True)
        sys.exit(EXIT_CONFIG)
    worst = 0.0
    failed = 0
    click.echo("experiment_a,experiment_b,t_or_z_or_x,initial_state,estimate_a,estimate_b,abs_diff,rel_diff,bound")
    for ra, rb in zip(rows_a, rows_b):
        try:
            ea, eb = float(ra["estimate"]), float(rb["estimate"])
            sa = float(ra["stderr"] or 0.0)
            sb = float(rb["stderr"] or 0.0)
        except ValueError as exc:
            click.echo(f"schema error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        diff = abs(ea - eb)
        scale = max(abs(ea), abs(eb))
        rel = diff / scale if scale > 0 else 0.0
        worst = max(worst, diff)
        bound = ""
        if tol_stderr is not None:
            limit = tol_stderr * math.hypot(sa, sb) + tol_abs
            bound = format(limit, ".6g")
            failed += diff > limit
        click.echo(
            f"{ra['experiment']},{rb['experiment']},{ra['t_or_z_or_x']},{ra['initial_state']},"
            f"{ea:.17g},{eb:.17g},{diff:.6g},{rel:.6g},{bound}"
        )
    click.echo(f"max abs diff {worst:.6g} over {len(rows_a)} rows; {failed} outside tolerance", err=True)
    sys.exit(EXIT_FAIL if failed else EXIT_OK)


if __name__ == "__main__":
    main()

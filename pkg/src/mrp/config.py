"""INI experiment configuration: parsing, validation and object construction.

Every value is validated before anything runs, and failures name the key
and the line it came from.
"""

from __future__ import annotations

import configparser
import enum
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from mrp.distributions import AncestorLaw, Exponential, Gamma, LogPareto, ParetoRV, ScaledFamily
from mrp.errors import ChainError, ConfigError, DomainError
from mrp.param_chain import FiniteChain, ParameterChain, ResamplingKernel, TargetSet
from mrp.renewal_solver import InhomogeneousTerm, TermKind

__all__ = ["ExperimentKind", "Tolerance", "ExperimentConfig", "load_config", "parse_config"]


class ExperimentKind(enum.Enum):
    U = "U"
    PHI = "Phi"
    AGE = "Age"
    RESIDUAL = "Residual"
    TOTAL = "Total"
    GRID_SOLVE = "GridSolve"
    LAPLACE_CHECK = "LaplaceCheck"
    TAUBERIAN = "Tauberian"
    PRESET = "Preset"


_TOL_STDERR = re.compile(r"^\s*([0-9.eE+-]+)\s*stderr\s*(?:\+\s*([0-9.eE+-]+))?\s*$")
_TOL_WORD = re.compile(r"^\s*(rel|abs)\s+([0-9.eE+-]+)\s*$")
_TOL_RATIO = re.compile(r"^\s*ratio\s+([0-9.eE+-]+)\s+([0-9.eE+-]+)\s*$")


@dataclass(frozen=True)
class Tolerance:
    """Acceptance rule for one row label.

    Written as ``"3 stderr"``, ``"3 stderr + 0.02"``, ``"rel 0.05"``,
    ``"abs 0.05"`` or ``"ratio 0.95 1.05"``.
    """

    text: str
    n_stderr: float = 0.0
    absolute: float = 0.0
    relative: float = 0.0
    ratio_lo: float | None = None
    ratio_hi: float | None = None

    @classmethod
    def parse(cls, text: str) -> Tolerance:
        m = _TOL_STDERR.match(text)
        if m:
            return cls(text.strip(), n_stderr=float(m.group(1)), absolute=float(m.group(2) or 0.0))
        m = _TOL_WORD.match(text)
        if m:
            if m.group(1) == "rel":
                return cls(text.strip(), relative=float(m.group(2)))
            return cls(text.strip(), absolute=float(m.group(2)))
        m = _TOL_RATIO.match(text)
        if m:
            return cls(text.strip(), ratio_lo=float(m.group(1)), ratio_hi=float(m.group(2)))
        raise ValueError(f"cannot parse tolerance {text!r}")

    def passes(self, estimate: float, stderr: float, predicted: float) -> bool:
        if self.ratio_lo is not None:
            if predicted == 0:
                return False
            return self.ratio_lo <= estimate / predicted <= self.ratio_hi
        bound = self.n_stderr * stderr + self.absolute + self.relative * abs(predicted)
        return abs(estimate - predicted) <= bound


@dataclass
class ExperimentConfig:
    kind: ExperimentKind
    family: ScaledFamily
    chain: ParameterChain
    initial: tuple[float, ...]
    target: TargetSet
    times: tuple[float, ...] = ()
    reps: int = 0
    seed: int = 0
    x_grid: tuple[float, ...] = ()
    scale_by_t: bool = True
    term: InhomogeneousTerm | None = None
    dt: float | None = None
    n_max: int = 0
    z_grid: tuple[float, ...] = ()
    preset: tuple[int, float, float] | None = None
    max_events: int | None = None
    tolerances: dict[str, Tolerance] = field(default_factory=dict)
    echo: dict[str, dict[str, str]] = field(default_factory=dict)
    source: str | None = None


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    lines: dict[tuple[str, str], int] = {}
    section = ""
    for n, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            lines[(section, "")] = n
            continue
        m = re.match(r"^([^=:]+?)\s*[=:]", s)
        if m and section:
            lines.setdefault((section, m.group(1).strip().lower()), n)
    return lines


class _Reader:
    """Typed access to a parsed INI file with line-aware error reporting."""

    def __init__(self, parser: configparser.ConfigParser, lines):
        self.p = parser
        self.lines = lines
        self.used: dict[str, dict[str, str]] = {}

    def fail(self, section: str, key: str, message: str):
        raise ConfigError(message, key=f"{section}.{key}", line=self.lines.get((section, key)))

    def has(self, section: str, key: str) -> bool:
        return self.p.has_option(section, key)

    def raw(self, section: str, key: str, default=None, required=False) -> str | None:
        if not self.p.has_option(section, key):
            if required:
                line = self.lines.get((section, ""))
                raise ConfigError("missing required value", key=f"{section}.{key}", line=line)
            return default
        val = self.p.get(section, key).strip()
        self.used.setdefault(section, {})[key] = val
        return val

    def real(self, section, key, default=None, required=False, positive=False) -> float | None:
        txt = self.raw(section, key, None, required)
        if txt is None:
            return default
        try:
            val = float(txt)
        except ValueError:
            self.fail(section, key, f"expected a number, got {txt!r}")
        if not math.isfinite(val):
            self.fail(section, key, f"expected a finite number, got {txt!r}")
        if positive and not val > 0:
            self.fail(section, key, f"must be positive, got {txt!r}")
        return val

    def integer(self, section, key, default=None, required=False, minimum=None) -> int | None:
        txt = self.raw(section, key, None, required)
        if txt is None:
            return default
        try:
            val = int(txt)
        except ValueError:
            self.fail(section, key, f"expected an integer, got {txt!r}")
        if minimum is not None and val < minimum:
            self.fail(section, key, f"must be at least {minimum}, got {val}")
        return val

    def reals(self, section, key, default=(), required=False, positive=False) -> tuple[float, ...]:
        txt = self.raw(section, key, None, required)
        if txt is None:
            return tuple(default)
        try:
            vals = tuple(float(v) for v in re.split(r"[,\s]+", txt) if v)
        except ValueError:
            self.fail(section, key, f"expected a comma-separated list of numbers, got {txt!r}")
        if not vals:
            self.fail(section, key, "list is empty")
        if any(not math.isfinite(v) for v in vals):
            self.fail(section, key, "list contains a non-finite value")
        if positive and any(not v > 0 for v in vals):
            self.fail(section, key, f"all values must be positive, got {txt!r}")
        return vals


def _build_ancestor(r: _Reader) -> AncestorLaw:
    name = r.raw("family", "ancestor", required=True).lower()
    try:
        if name == "exponential":
            return Exponential(r.real("family", "rate", 1.0, positive=True))
        if name == "gamma":
            return Gamma(r.real("family", "shape", 2.0, positive=True), r.real("family", "rate", 1.0, positive=True))
        if name == "pareto":
            alpha = r.real("family", "alpha", 0.5)
            if not 0 < alpha <= 1:
                r.fail("family", "alpha", f"Pareto tail exponent must lie in (0, 1], got {alpha}")
            return ParetoRV(alpha, r.real("family", "scale", 1.0, positive=True))
        if name == "logpareto":
            return LogPareto(r.real("family", "c", 1.0, positive=True))
    except DomainError as exc:
        r.fail("family", "ancestor", str(exc))
    r.fail("family", "ancestor", f"unknown ancestor {name!r} (exponential, gamma, pareto, logpareto)")


def _build_chain(r: _Reader) -> ParameterChain:
    kernel = r.raw("chain", "kernel", required=True).lower()
    if kernel == "matrix":
        states = r.reals("chain", "states", required=True, positive=True)
        rows = []
        for i in range(1, len(states) + 1):
            row = r.reals("chain", f"row{i}", required=True)
            if len(row) != len(states):
                r.fail("chain", f"row{i}", f"row has {len(row)} entries, expected {len(states)}")
            rows.append(row)
        extra = [k for k in r.p.options("chain") if re.fullmatch(r"row\d+", k) and int(k[3:]) > len(states)]
        if extra:
            r.fail("chain", extra[0], f"more rows than the {len(states)} states")
        try:
            return FiniteChain(states, rows)
        except ChainError as exc:
            m = re.match(r"row (\d+) ", str(exc))
            key = f"row{m.group(1)}" if m else "states"
            r.fail("chain", key, str(exc))
    if kernel == "resample-uniform":
        a = r.real("chain", "a", None, positive=True)
        b = r.real("chain", "b", None, positive=True)
        if a is None:
            a = r.real("family", "a", required=True, positive=True)
        if b is None:
            b = r.real("family", "b", required=True, positive=True)
        try:
            return ResamplingKernel.uniform(a, b)
        except ChainError as exc:
            r.fail("chain", "kernel", str(exc))
    r.fail("chain", "kernel", f"unknown kernel {kernel!r} (matrix, resample-uniform)")


def _build_target(r: _Reader, chain: ParameterChain) -> TargetSet:
    txt = r.raw("experiment", "target", "all")
    low = txt.lower()
    if low == "all":
        return TargetSet.all()
    if low == "empty":
        return TargetSet.empty()
    kind, _, rest = txt.partition(":")
    kind = kind.strip().lower()
    try:
        vals = [float(v) for v in re.split(r"[,\s]+", rest.strip()) if v]
    except ValueError:
        r.fail("experiment", "target", f"cannot parse target {txt!r}")
    if kind == "states":
        if not isinstance(chain, FiniteChain):
            r.fail("experiment", "target", "state targets need a matrix chain")
        for v in vals:
            if v not in chain.states:
                r.fail("experiment", "target", f"{v} is not a state of the chain")
        return TargetSet.states(vals)
    if kind == "interval":
        if len(vals) != 2 or not vals[0] <= vals[1]:
            r.fail("experiment", "target", f"interval needs two ordered bounds, got {rest.strip()!r}")
        return TargetSet.interval(*vals)
    r.fail("experiment", "target", f"unknown target {txt!r} (all, empty, states: ..., interval: lo, hi)")


def _build_term(r: _Reader) -> InhomogeneousTerm | None:
    txt = r.raw("solver", "term", None)
    if txt is None:
        return None
    name, _, arg = txt.partition(":")
    lookup = {k.value.lower(): k for k in TermKind}
    kind = lookup.get(name.strip().lower())
    if kind is None:
        r.fail("solver", "term", f"unknown term {name.strip()!r} ({', '.join(k.value for k in TermKind)})")
    try:
        x = float(arg) if arg.strip() else None
        return InhomogeneousTerm(kind, x)
    except (ValueError, DomainError) as exc:
        r.fail("solver", "term", str(exc))


def _build_tolerances(r: _Reader) -> dict[str, Tolerance]:
    out = {}
    if not r.p.has_section("tolerance"):
        return out
    for key in r.p.options("tolerance"):
        txt = r.raw("tolerance", key)
        try:
            out[key] = Tolerance.parse(txt)
        except ValueError as exc:
            r.fail("tolerance", key, str(exc))
    return out


def parse_config(text: str, source: str | None = None, seed: int | None = None) -> ExperimentConfig:
    """Parse and validate configuration text.

    ``seed`` overrides the ``[experiment] seed`` value when given.
    """
    # keys are case-insensitive; tolerance labels are matched lower-cased
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}", line=getattr(exc, "lineno", None)) from None
    r = _Reader(parser, _key_lines(text))
    if not parser.has_section("experiment"):
        raise ConfigError("missing [experiment] section")
    kind_txt = r.raw("experiment", "kind", required=True)
    try:
        kind = next(k for k in ExperimentKind if k.value.lower() == kind_txt.lower())
    except StopIteration:
        r.fail("experiment", "kind", f"unknown kind {kind_txt!r} ({', '.join(k.value for k in ExperimentKind)})")

    preset = None
    if kind is ExperimentKind.PRESET:
        from mrp.asymptotics import application_preset

        d = r.integer("experiment", "d", required=True)
        if d not in (1, 2):
            r.fail("experiment", "d", f"d must be 1 or 2, got {d}")
        E = r.real("experiment", "e", required=True, positive=True)
        C = r.real("experiment", "c", 1.0, positive=True)
        p = application_preset(d, E, C)
        family, chain, preset = p.family, p.chain, (d, E, C)
    else:
        for sec in ("family", "chain"):
            if not parser.has_section(sec):
                raise ConfigError(f"missing [{sec}] section")
        chain = _build_chain(r)
        ancestor = _build_ancestor(r)
        a = r.real("family", "a", chain.a, positive=True)
        b = r.real("family", "b", chain.b, positive=True)
        if not a <= b:
            r.fail("family", "b", f"need a <= b, got a={a}, b={b}")
        if chain.a < a * (1 - 1e-12) or chain.b > b * (1 + 1e-12):
            r.fail("family", "a", f"chain range [{chain.a}, {chain.b}] leaves the family range [{a}, {b}]")
        family = ScaledFamily(ancestor, a, b)

    target = _build_target(r, chain)
    init_txt = r.raw("experiment", "initial", "each")
    if init_txt.lower() == "each":
        initial = tuple(float(v) for v in chain.initial_sweep())
    else:
        initial = r.reals("experiment", "initial", positive=True)
        for v in initial:
            if not chain.a <= v <= chain.b or (isinstance(chain, FiniteChain) and v not in chain.states):
                r.fail("experiment", "initial", f"initial parameter {v} is not in the chain's state space")

    needs_t = kind in (ExperimentKind.U, ExperimentKind.PHI, ExperimentKind.AGE, ExperimentKind.RESIDUAL,
                       ExperimentKind.TOTAL, ExperimentKind.GRID_SOLVE, ExperimentKind.PRESET)
    times = r.reals("experiment", "t", required=needs_t, positive=True)
    needs_reps = kind in (ExperimentKind.U, ExperimentKind.PHI, ExperimentKind.AGE, ExperimentKind.RESIDUAL,
                          ExperimentKind.TOTAL, ExperimentKind.PRESET)
    reps = r.integer("experiment", "reps", 0, required=needs_reps, minimum=2 if needs_reps else 0)
    cfg_seed = r.integer("experiment", "seed", 0, minimum=0)
    max_events = r.integer("experiment", "max_events", None, minimum=1)
    x_grid = r.reals("experiment", "x", required=kind in (ExperimentKind.AGE, ExperimentKind.RESIDUAL, ExperimentKind.TOTAL))
    if any(x < 0 for x in x_grid):
        r.fail("experiment", "x", "grid values must be nonnegative")
    scale_txt = r.raw("experiment", "scale", None)
    if scale_txt is None:
        scale_by_t = family.ancestor.tail_class.heavy
    elif scale_txt.lower() in ("t", "none"):
        scale_by_t = scale_txt.lower() == "t"
    else:
        r.fail("experiment", "scale", f"expected 't' or 'none', got {scale_txt!r}")

    if kind is ExperimentKind.TAUBERIAN and not family.ancestor.tail_class.heavy:
        r.fail("family", "ancestor", "Tauberian diagnostics need a heavy-tailed ancestor")
    if kind in (ExperimentKind.GRID_SOLVE, ExperimentKind.LAPLACE_CHECK) and not isinstance(chain, FiniteChain):
        r.fail("chain", "kernel", f"{kind.value} needs a matrix chain")

    term = _build_term(r)
    dt = r.real("solver", "dt", None, positive=True) if parser.has_section("solver") else None
    n_max = r.integer("solver", "n_max", 0, minimum=0) if parser.has_section("solver") else 0
    z_grid = r.reals("solver", "z", positive=True) if parser.has_section("solver") else ()
    if kind is ExperimentKind.GRID_SOLVE:
        if dt is None:
            r.fail("solver", "dt", "GridSolve needs a time step")
        if term is None:
            r.fail("solver", "term", "GridSolve needs an inhomogeneous term")
    if kind in (ExperimentKind.LAPLACE_CHECK, ExperimentKind.TAUBERIAN) and not z_grid:
        r.fail("solver", "z", f"{kind.value} needs a z grid")
    if kind is ExperimentKind.LAPLACE_CHECK and term is None:
        term = InhomogeneousTerm.phi_tail()

    tolerances = _build_tolerances(r)
    final_seed = cfg_seed if seed is None else int(seed)
    return ExperimentConfig(
        kind=kind,
        family=family,
        chain=chain,
        initial=initial,
        target=target,
        times=times,
        reps=reps,
        seed=final_seed,
        x_grid=x_grid,
        scale_by_t=scale_by_t,
        term=term,
        dt=dt,
        n_max=n_max,
        z_grid=z_grid,
        preset=preset,
        max_events=max_events,
        tolerances=tolerances,
        echo=r.used,
        source=source,
    )


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, source=str(path), seed=seed)

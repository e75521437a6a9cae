"""Scenario configuration, R_e calibration and batch execution.

A scenario is a plain INI file: global sections set model parameters,
simulation grid, cost weights and sweep settings; one section per
strategy declares either constant rates or an optimize flag (with
optional per-control effort ceilings); calibration sections describe
how a constant rate is solved back from a target reproduction number;
a compare section lists cross-strategy ICER pairs. Unknown sections or
keys are rejected so a typo cannot silently fall back to a default.

The runner computes the uncontrolled baseline once, evaluates every
strategy against it, ranks the constant and the optimized families
separately, evaluates the requested pairwise comparisons, and emits
CSV/JSON/text reports plus rendered figures.
"""

from __future__ import annotations

import configparser
import logging
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .cea import (
    CostWeights,
    OutcomeRecord,
    RankingReport,
    acer,
    cost,
    effectiveness,
    icer,
    rank,
)
from .control import FbsmConfig, ObjectiveDivergenceError, OptimalSolution, fbsm_solve
from .integrate import DivergenceError, SimulationConfig, simulate
from .model import (
    CONTROL_NAMES,
    ControlVector,
    ModelParameters,
    STRATEGIES,
    StrategyMask,
)
from .reproduction import effective_R
from . import report as report_mod

__all__ = [
    "CalibrationError",
    "CalibrationResult",
    "CalibrationSpec",
    "ScenarioConfig",
    "ScenarioResult",
    "StrategySpec",
    "bundled_config_path",
    "calibrate_rate",
    "load_config",
    "run_scenario",
]

logger = logging.getLogger(__name__)

#: Convergence window for calibration, on the reproduction-number scale.
CALIBRATION_TOL = 1e-6

_PARAM_KEYS = (
    "epsilon", "theta", "beta_m", "beta_f", "beta_f_tilde",
    "gamma_f", "gamma_m", "p", "mu_f", "mu_m",
)
_SIM_KEYS = ("t_final", "dt")
_COST_KEYS = ("a1", "a2", "a3", "b1", "b2")
_FBSM_KEYS = (
    "max_iterations", "tolerance", "relaxation",
    "w1_max", "w2_max", "u1_max", "u2_max", "alpha_max",
    "adjoint_divergence_limit",
)
_STRATEGY_KEYS = ("mask", "rates", "optimize", "caps")
_CALIBRATE_KEYS = ("mask", "free", "target", "rates")


class CalibrationError(ValueError):
    """The requested target reproduction number cannot be bracketed."""


@dataclass(frozen=True)
class StrategySpec:
    """One strategy row of a scenario: constant rates or optimize."""

    name: str
    mask: StrategyMask
    rates: ControlVector | None = None
    optimize: bool = False
    caps: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.optimize == (self.rates is not None):
            raise ValueError(
                f"strategy {self.name}: exactly one of constant rates or "
                "optimize=true is required"
            )
        if self.caps and not self.optimize:
            raise ValueError(
                f"strategy {self.name}: caps only apply to optimized strategies"
            )
        for key in self.caps:
            if not self.mask.allows(key):
                raise ValueError(
                    f"strategy {self.name}: cap on {key} which the mask disables"
                )


@dataclass(frozen=True)
class CalibrationSpec:
    """A named calibration problem: solve free rate(s) to hit a target R_e."""

    name: str
    mask: StrategyMask
    free: tuple[str, ...]
    target: float
    fixed: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 1 <= len(self.free) <= 2:
            raise ValueError(
                f"calibration {self.name}: free must name one control or a "
                f"tied pair, got {self.free}"
            )
        for key in (*self.free, *self.fixed):
            if key not in CONTROL_NAMES:
                raise ValueError(f"calibration {self.name}: unknown control {key}")
            if not self.mask.allows(key):
                raise ValueError(
                    f"calibration {self.name}: control {key} disabled by the mask"
                )
        overlap = set(self.free) & set(self.fixed)
        if overlap:
            raise ValueError(
                f"calibration {self.name}: controls {sorted(overlap)} both free "
                "and fixed"
            )


@dataclass(frozen=True)
class CalibrationResult:
    """Solved free rate with the full control vector it implies."""

    name: str
    free: tuple[str, ...]
    rate: float
    controls: ControlVector
    r_e: float
    iterations: int


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully parsed scenario: globals plus strategy/calibration lists."""

    params: ModelParameters = ModelParameters()
    sim: SimulationConfig = SimulationConfig()
    weights: CostWeights = CostWeights()
    fbsm: FbsmConfig = FbsmConfig()
    strategies: tuple[StrategySpec, ...] = ()
    calibrations: tuple[CalibrationSpec, ...] = ()
    pairs: tuple[tuple[str, str], ...] = ()

    def strategy(self, name: str) -> StrategySpec:
        for spec in self.strategies:
            if spec.name == name:
                return spec
        raise KeyError(
            f"no strategy named {name!r} in this scenario "
            f"(have {[s.name for s in self.strategies]})"
        )

    def calibration(self, name: str) -> CalibrationSpec:
        for spec in self.calibrations:
            if spec.name == name:
                return spec
        raise KeyError(
            f"no calibration named {name!r} in this scenario "
            f"(have {[s.name for s in self.calibrations]})"
        )


def _parse_mask(name: str, text: str) -> StrategyMask:
    """A mask is either a bundled strategy id or a list of control names."""
    text = text.strip()
    if text in STRATEGIES:
        return StrategyMask(name, STRATEGIES[text].active)
    names = [t.strip() for t in text.split(",") if t.strip()]
    for n in names:
        if n not in CONTROL_NAMES:
            raise ValueError(
                f"strategy {name}: mask entry {n!r} is neither a bundled "
                f"strategy id nor a control name"
            )
    return StrategyMask(name, tuple(n in names for n in CONTROL_NAMES))


def _parse_pairs_value(text: str) -> dict[str, float]:
    """Parse 'w1=0.3, u1=0.127' into a name -> value dict."""
    out: dict[str, float] = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ValueError(f"expected name=value, got {item!r}")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in CONTROL_NAMES:
            raise ValueError(f"unknown control name {key!r}")
        if key in out:
            raise ValueError(f"control {key!r} assigned twice")
        out[key] = float(value)
    if not out:
        raise ValueError("empty control assignment list")
    return out


def _parse_rates(name: str, text: str, mask: StrategyMask | None):
    """Rates are name=value pairs or a full 5-value list."""
    text = text.strip()
    if "=" in text:
        assigned = _parse_pairs_value(text)
    else:
        values = [float(t) for t in text.split(",")]
        if len(values) != 5:
            raise ValueError(
                f"strategy {name}: a bare rate list needs 5 values, got {len(values)}"
            )
        assigned = {n: v for n, v in zip(CONTROL_NAMES, values) if v != 0.0}
    if mask is None:
        mask = StrategyMask(name, tuple(n in assigned for n in CONTROL_NAMES))
    for key in assigned:
        if not mask.allows(key) and assigned[key] != 0.0:
            raise ValueError(
                f"strategy {name}: rate for {key} which the mask disables"
            )
    vector = ControlVector(**{n: assigned.get(n, 0.0) for n in CONTROL_NAMES})
    return mask.apply(vector), mask


def _known_keys(section: str, parser: configparser.ConfigParser, allowed) -> None:
    unknown = sorted(set(parser.options(section)) - set(allowed))
    if unknown:
        raise ValueError(
            f"unknown keys {unknown} in section [{section}]; allowed: {sorted(allowed)}"
        )


def parse_config(text: str) -> ScenarioConfig:
    """Parse scenario INI text into a validated ScenarioConfig."""
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#",), strict=True
    )
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValueError(f"malformed scenario config: {exc}") from exc

    params = ModelParameters()
    sim = SimulationConfig()
    weights = CostWeights()
    fbsm = FbsmConfig()
    strategies: list[StrategySpec] = []
    calibrations: list[CalibrationSpec] = []
    pairs: list[tuple[str, str]] = []

    for section in parser.sections():
        if section == "parameters":
            _known_keys(section, parser, _PARAM_KEYS)
            params = params.replace(
                **{k: parser.getfloat(section, k) for k in parser.options(section)}
            )
        elif section == "simulation":
            _known_keys(section, parser, _SIM_KEYS)
            sim = sim.replace(
                **{k: parser.getfloat(section, k) for k in parser.options(section)}
            )
        elif section == "costs":
            _known_keys(section, parser, _COST_KEYS)
            weights = weights.replace(
                **{k: parser.getfloat(section, k) for k in parser.options(section)}
            )
        elif section == "fbsm":
            _known_keys(section, parser, _FBSM_KEYS)
            changes = {}
            for k in parser.options(section):
                if k == "max_iterations":
                    changes[k] = parser.getint(section, k)
                else:
                    changes[k] = parser.getfloat(section, k)
            fbsm = fbsm.replace(**changes)
        elif section == "compare":
            _known_keys(section, parser, ("pairs",))
            for item in parser.get(section, "pairs").split(","):
                item = item.strip()
                if not item:
                    continue
                first, sep, second = item.partition(":")
                if not sep or not first.strip() or not second.strip():
                    raise ValueError(
                        f"compare pair {item!r} must look like FIRST:SECOND"
                    )
                pairs.append((first.strip(), second.strip()))
        elif section.startswith("strategy:"):
            name = section.partition(":")[2].strip()
            if not name:
                raise ValueError("strategy section with an empty name")
            _known_keys(section, parser, _STRATEGY_KEYS)
            mask = None
            if parser.has_option(section, "mask"):
                mask = _parse_mask(name, parser.get(section, "mask"))
            rates = None
            if parser.has_option(section, "rates"):
                rates, mask = _parse_rates(name, parser.get(section, "rates"), mask)
            optimize = (
                parser.getboolean(section, "optimize")
                if parser.has_option(section, "optimize") else False
            )
            caps: dict = {}
            if parser.has_option(section, "caps"):
                caps = _parse_pairs_value(parser.get(section, "caps"))
            if mask is None:
                raise ValueError(f"strategy {name}: needs a mask or named rates")
            strategies.append(
                StrategySpec(name, mask, rates=rates, optimize=optimize, caps=caps)
            )
        elif section.startswith("calibrate:"):
            name = section.partition(":")[2].strip()
            if not name:
                raise ValueError("calibrate section with an empty name")
            _known_keys(section, parser, _CALIBRATE_KEYS)
            for key in ("mask", "free", "target"):
                if not parser.has_option(section, key):
                    raise ValueError(f"calibration {name}: missing key {key}")
            mask = _parse_mask(name, parser.get(section, "mask"))
            free = tuple(
                t.strip() for t in parser.get(section, "free").split(",") if t.strip()
            )
            fixed: dict = {}
            if parser.has_option(section, "rates"):
                fixed = _parse_pairs_value(parser.get(section, "rates"))
            calibrations.append(CalibrationSpec(
                name, mask, free,
                target=parser.getfloat(section, "target"), fixed=fixed,
            ))
        else:
            raise ValueError(
                f"unknown section [{section}]; expected parameters, simulation, "
                "costs, fbsm, compare, strategy:NAME or calibrate:NAME"
            )

    names = [s.name for s in strategies]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate strategy names in {names}")
    cal_names = [s.name for s in calibrations]
    if len(set(cal_names)) != len(cal_names):
        raise ValueError(f"duplicate calibration names in {cal_names}")
    known = set(names)
    for first, second in pairs:
        for member in (first, second):
            if member not in known:
                raise ValueError(
                    f"compare pair references unknown strategy {member!r}"
                )
    return ScenarioConfig(
        params=params, sim=sim, weights=weights, fbsm=fbsm,
        strategies=tuple(strategies), calibrations=tuple(calibrations),
        pairs=tuple(pairs),
    )


def bundled_config_path(name: str) -> Path:
    """Filesystem path of a bundled scenario by name (with or without .ini)."""
    filename = name if name.endswith(".ini") else f"{name}.ini"
    root = resources.files("hpvcea.configs")
    candidate = root / filename
    if not candidate.is_file():
        available = sorted(
            p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini")
        )
        raise FileNotFoundError(
            f"no bundled scenario named {name!r}; available: {available}"
        )
    return Path(str(candidate))


def load_config(source) -> ScenarioConfig:
    """Load a scenario from a path or a bundled config name."""
    path = Path(source)
    if not path.is_file():
        path = bundled_config_path(str(source))
    return parse_config(path.read_text())


def calibrate_rate(
    mask: StrategyMask,
    fixed,
    free,
    target_re: float,
    params: ModelParameters = ModelParameters(),
    name: str = "calibration",
) -> CalibrationResult:
    """Solve a constant rate so the strategy hits a target R_e.

    ``free`` is one control name or a tied pair sharing a single value
    (e.g. equal juvenile coverage for both sexes); ``fixed`` holds the
    remaining active rates. R_e decreases monotonically in each rate,
    so bisection on [0, 1] converges whenever the target is bracketed;
    the endpoints themselves are accepted when they already meet the
    tolerance.
    """
    if isinstance(free, str):
        free = (free,)
    free = tuple(free)
    fixed = dict(fixed) if not isinstance(fixed, ControlVector) else {
        n: v for n, v in zip(CONTROL_NAMES, fixed.as_tuple()) if v != 0.0
    }
    spec = CalibrationSpec(name, mask, free, target_re, fixed)  # reuse validation

    def vector(rate: float) -> ControlVector:
        values = {n: spec.fixed.get(n, 0.0) for n in CONTROL_NAMES}
        for n in spec.free:
            values[n] = rate
        return ControlVector(**values)

    def gap(rate: float) -> float:
        return effective_R(vector(rate), params).R_e - target_re

    lo, hi = 0.0, 1.0
    g_lo, g_hi = gap(lo), gap(hi)
    if abs(g_lo) < CALIBRATION_TOL:
        return CalibrationResult(name, free, lo, vector(lo), g_lo + target_re, 0)
    if abs(g_hi) < CALIBRATION_TOL:
        return CalibrationResult(name, free, hi, vector(hi), g_hi + target_re, 0)
    if g_lo < 0.0 or g_hi > 0.0:
        raise CalibrationError(
            f"{name}: target R_e={target_re} not bracketed on [0, 1]: "
            f"R_e(free=0)={g_lo + target_re:.9f}, R_e(free=1)={g_hi + target_re:.9f}"
        )
    for iteration in range(1, 201):
        mid = 0.5 * (lo + hi)
        g_mid = gap(mid)
        if abs(g_mid) < CALIBRATION_TOL:
            return CalibrationResult(
                name, free, mid, vector(mid), g_mid + target_re, iteration
            )
        if g_mid > 0.0:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(
        f"{name}: bisection failed to reach |R_e - target| < {CALIBRATION_TOL} "
        "within 200 iterations"
    )


@dataclass
class ScenarioResult:
    """Everything a scenario run produced, keyed by strategy name."""

    config: ScenarioConfig
    baseline: "object"
    records: dict
    trajectories: dict
    schedules: dict
    solutions: dict
    rankings: dict
    comparisons: list
    calibrations: dict
    failures: dict
    elapsed: float

    @property
    def ok(self) -> bool:
        return not self.failures


def _safe_name(name: str) -> str:
    """Strategy names may carry a star; keep filenames plain."""
    return name.replace("*", "star").replace("/", "_").replace(" ", "_")


def _family(spec: StrategySpec) -> str:
    return "optimal" if spec.optimize else "constant"


def run_scenario(
    config: ScenarioConfig,
    outdir=None,
    figures: bool = True,
) -> ScenarioResult:
    """Execute a scenario and (optionally) write its reports.

    The uncontrolled baseline is integrated once and shared by every
    effectiveness computation. Strategy failures (divergence) are
    collected per strategy rather than aborting the batch. When
    ``outdir`` is given, all CSV/JSON/text reports are written there,
    with figures under ``outdir/figures`` unless disabled.
    """
    t_start = time.perf_counter()
    params, sim, weights = config.params, config.sim, config.weights
    baseline = simulate(None, params, sim)

    records: dict[str, OutcomeRecord] = {}
    trajectories: dict = {}
    schedules: dict = {}
    solutions: dict[str, OptimalSolution] = {}
    failures: dict[str, str] = {}

    for spec in config.strategies:
        try:
            if spec.optimize:
                fc = config.fbsm.replace(
                    **{f"{k}_max": v for k, v in spec.caps.items()}
                )
                solution = fbsm_solve(spec.mask, params, weights, sim, fc)
                solutions[spec.name] = solution
                traj, schedule = solution.state, solution.schedule
            else:
                schedule = spec.rates
                traj = simulate(schedule, params, sim)
            records[spec.name] = OutcomeRecord(
                spec.name,
                cost(traj, schedule, weights, params),
                effectiveness(traj, baseline),
            )
            trajectories[spec.name] = traj
            schedules[spec.name] = schedule
        except (DivergenceError, ObjectiveDivergenceError) as exc:
            logger.error("strategy %s failed: %s", spec.name, exc)
            failures[spec.name] = str(exc)

    rankings: dict[str, RankingReport] = {}
    for family in ("constant", "optimal"):
        members = [
            records[s.name] for s in config.strategies
            if _family(s) == family and s.name in records
        ]
        if members:
            rankings[family] = rank(members)

    comparisons = []
    for first, second in config.pairs:
        if first in failures or second in failures:
            continue
        a, b = records[first], records[second]
        comparisons.append({
            "first": first, "second": second,
            "icer": icer(a, b), "acer_first": acer(a), "acer_second": acer(b),
        })

    calibrations = {
        spec.name: calibrate_rate(
            spec.mask, spec.fixed, spec.free, spec.target, params, name=spec.name
        )
        for spec in config.calibrations
    }

    result = ScenarioResult(
        config=config, baseline=baseline, records=records,
        trajectories=trajectories, schedules=schedules, solutions=solutions,
        rankings=rankings, comparisons=comparisons, calibrations=calibrations,
        failures=failures, elapsed=time.perf_counter() - t_start,
    )
    if outdir is not None:
        write_reports(result, Path(outdir), figures=figures)
    return result


def _summary_payload(result: ScenarioResult) -> dict:
    ranks_by_name: dict[str, int] = {}
    for family_report in result.rankings.values():
        ranks_by_name.update(family_report.ranks)
    return {
        "strategies": {
            name: {
                "cost": rec.cost,
                "effectiveness": rec.effectiveness,
                "acer": rec.acer,
                "rank": ranks_by_name.get(name),
                "family": "optimal" if name in result.solutions else "constant",
            }
            for name, rec in sorted(result.records.items())
        },
        "optimal_runs": {
            name: sol.as_summary() for name, sol in sorted(result.solutions.items())
        },
        "comparisons": result.comparisons,
        "calibrations": {
            name: {
                "free": list(cal.free), "rate": cal.rate, "r_e": cal.r_e,
                "iterations": cal.iterations,
                "controls": dict(zip(CONTROL_NAMES, cal.controls.as_tuple())),
            }
            for name, cal in sorted(result.calibrations.items())
        },
        "failures": dict(sorted(result.failures.items())),
        "n_grid_points": len(result.baseline),
    }


def _summary_lines(result: ScenarioResult) -> list[str]:
    lines = ["scenario summary", "================"]
    ranks_by_name: dict[str, int] = {}
    for family_report in result.rankings.values():
        ranks_by_name.update(family_report.ranks)
    if result.records:
        lines.append("")
        lines.append(f"{'strategy':<12} {'cost':>10} {'effect':>10} {'acer':>8} {'rank':>4}")
        for name in sorted(result.records):
            rec = result.records[name]
            rank_no = ranks_by_name.get(name)
            lines.append(
                f"{name:<12} {rec.cost:>10.3f} {rec.effectiveness:>10.3f} "
                f"{rec.acer:>8.3f} {rank_no if rank_no else '-':>4}"
            )
    for name in sorted(result.solutions):
        sol = result.solutions[name]
        lines.append(
            f"optimize {name}: converged={sol.converged} "
            f"iterations={sol.iterations} J={sol.j_value:.4f}"
        )
    for row in result.comparisons:
        lines.append(
            f"compare {row['first']} vs {row['second']}: ICER={row['icer']:.4f} "
            f"ACER({row['first']})={row['acer_first']:.4f} "
            f"ACER({row['second']})={row['acer_second']:.4f}"
        )
    for name in sorted(result.calibrations):
        cal = result.calibrations[name]
        lines.append(
            f"calibrate {name}: {'='.join(cal.free)}={cal.rate:.9f} "
            f"R_e={cal.r_e:.9f} iterations={cal.iterations}"
        )
    for name in sorted(result.failures):
        lines.append(f"FAILED {name}: {result.failures[name]}")
    lines.append("")
    lines.append(f"elapsed: {result.elapsed:.2f} s")
    return lines


def write_reports(result: ScenarioResult, outdir: Path, figures: bool = True) -> list[Path]:
    """Write every flat-file report for a finished scenario run."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    written.append(
        report_mod.write_trajectory_csv(outdir / "baseline.csv", result.baseline)
    )
    for name in sorted(result.trajectories):
        written.append(report_mod.write_trajectory_csv(
            outdir / f"{_safe_name(name)}.csv",
            result.trajectories[name], result.schedules[name],
        ))
    for family, family_report in sorted(result.rankings.items()):
        written.append(report_mod.write_ranking_csv(
            outdir / f"ranking_{family}.csv", family_report
        ))
        written.append(report_mod.write_elimination_log(
            outdir / f"elimination_{family}.log", family_report
        ))
    if result.comparisons:
        written.append(report_mod.write_comparisons_csv(
            outdir / "comparisons.csv", result.comparisons
        ))
    written.append(
        report_mod.write_summary_json(outdir / "summary.json", _summary_payload(result))
    )
    written.append(
        report_mod.write_summary_text(outdir / "summary.txt", _summary_lines(result))
    )

    if figures:
        figdir = outdir / "figures"
        figdir.mkdir(parents=True, exist_ok=True)
        written.append(report_mod.render_trajectory_figure(
            figdir / "baseline.png", result.baseline, "no intervention"
        ))
        for name in sorted(result.trajectories):
            safe = _safe_name(name)
            written.append(report_mod.render_trajectory_figure(
                figdir / f"{safe}.png", result.trajectories[name], name
            ))
            if name in result.solutions:
                written.append(report_mod.render_controls_figure(
                    figdir / f"{safe}_controls.png",
                    result.schedules[name], result.trajectories[name].grid,
                    f"{name} control profiles",
                ))
        for family, family_report in sorted(result.rankings.items()):
            if len(family_report.ranked) > 1:
                written.append(report_mod.render_ce_plane_figure(
                    figdir / f"ce_plane_{family}.png",
                    family_report.ranked, family_report.ranks,
                    f"{family} strategies",
                ))
    return written

"""Cost-effectiveness accounting and strategy ranking.

Costs accrue along the trajectory actually produced by a strategy:
unit costs for vaccinating newborn cohorts and susceptible adults,
screening effort over the unscreened and susceptible female pool, plus
burden terms proportional to prevalence. Effectiveness is the
prevalence mass averted relative to the no-intervention baseline.
Ranking follows the standard incremental analysis: order by cost,
repeatedly compare the two cheapest survivors by ICER against the
cheaper one's ACER, eliminate the loser, and iterate; re-running the
elimination on the survivors yields a full ranking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import ModelParameters, Trajectory
from .integrate import control_nodes, quadrature

__all__ = [
    "CostWeights",
    "OutcomeRecord",
    "EliminationStep",
    "RankingReport",
    "UndefinedRatioError",
    "effectiveness",
    "cost",
    "acer",
    "icer",
    "rank",
    "replay_elimination",
]


class UndefinedRatioError(ZeroDivisionError):
    """A cost-effectiveness ratio with a zero denominator."""


@dataclass(frozen=True)
class CostWeights:
    """Unit costs of the control efforts and infection burden weights.

    a1 prices juvenile vaccination, a2 adult vaccination, a3 screening
    effort; b1 and b2 weight undetected and detected female prevalence.
    """

    a1: float = 1.0
    a2: float = 5.0
    a3: float = 1.0
    b1: float = 15.0
    b2: float = 10.0

    def __post_init__(self) -> None:
        for name in ("a1", "a2", "a3", "b1", "b2"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")

    def replace(self, **changes) -> "CostWeights":
        return replace(self, **changes)


@dataclass(frozen=True)
class OutcomeRecord:
    """Total cost and averted-prevalence effectiveness of one strategy."""

    strategy: str
    cost: float
    effectiveness: float

    @property
    def acer(self) -> float:
        return acer(self)


def effectiveness(traj: Trajectory, baseline: Trajectory) -> float:
    """Prevalence mass averted relative to the uncontrolled baseline.

    Integrates the reduction in both female infected classes over the
    horizon. Positive when the strategy lowers prevalence.
    """
    if len(traj) != len(baseline) or abs(traj.dt - baseline.dt) > 1e-12:
        raise ValueError("trajectory and baseline must share one grid")
    averted = (
        baseline.column("U_f") - traj.column("U_f")
        + baseline.column("I_f") - traj.column("I_f")
    )
    return quadrature(averted, traj.dt)


def cost(
    traj: Trajectory,
    schedule,
    weights: CostWeights = CostWeights(),
    params: ModelParameters = ModelParameters(),
) -> float:
    """Total cost of running a strategy along its own trajectory.

    Juvenile doses accrue at the birth rate of each sex, adult doses
    over the susceptible pools, screening over the female classes it
    actually reaches, and the burden terms over female prevalence.
    """
    c = control_nodes(schedule, len(traj), traj.dt)
    s_f = traj.column("S_f")
    u_f = traj.column("U_f")
    i_f = traj.column("I_f")
    s_m = traj.column("S_m")
    w = weights
    p = params
    running = (
        w.a1 * (c[:, 0] * p.mu_f + c[:, 1] * p.mu_m)
        + w.a2 * (c[:, 2] * s_f + c[:, 3] * s_m)
        + w.a3 * c[:, 4] * (u_f + s_f)
        + w.b1 * u_f
        + w.b2 * i_f
    )
    return quadrature(running, traj.dt)


def acer(record: OutcomeRecord) -> float:
    """Average cost-effectiveness ratio, cost per unit averted."""
    if record.effectiveness == 0.0:
        raise UndefinedRatioError(
            f"ACER of {record.strategy} is undefined: zero effectiveness"
        )
    return record.cost / record.effectiveness


def icer(a: OutcomeRecord, b: OutcomeRecord) -> float:
    """Incremental cost-effectiveness ratio between two strategies.

    Symmetric in its arguments: both differences change sign together.
    """
    de = b.effectiveness - a.effectiveness
    if de == 0.0:
        raise UndefinedRatioError(
            f"ICER of {a.strategy} vs {b.strategy} is undefined: "
            "equal effectiveness"
        )
    return (b.cost - a.cost) / de


@dataclass(frozen=True)
class EliminationStep:
    """One pairwise comparison in the elimination tournament."""

    round: int
    cheaper: str
    costlier: str
    icer: float | None
    acer_cheaper: float | None
    rule: str
    dropped: str


@dataclass(frozen=True)
class RankingReport:
    """Full cost-effectiveness ranking with its elimination audit trail."""

    ranked: tuple[OutcomeRecord, ...]
    steps: tuple[EliminationStep, ...] = field(repr=False)

    @property
    def ranks(self) -> dict[str, int]:
        return {r.strategy: i + 1 for i, r in enumerate(self.ranked)}

    @property
    def best(self) -> OutcomeRecord:
        return self.ranked[0]


def _eliminate_once(pool: list[OutcomeRecord], round_no: int, steps: list) -> OutcomeRecord:
    """Run the pairwise tournament until one strategy survives."""
    survivors = sorted(pool, key=lambda r: (r.cost, r.strategy))
    while len(survivors) > 1:
        a, b = survivors[0], survivors[1]
        if b.effectiveness == a.effectiveness:
            # same benefit, higher cost: costlier one is dominated
            steps.append(EliminationStep(
                round_no, a.strategy, b.strategy, None, None,
                "equal effectiveness, drop costlier", b.strategy,
            ))
            survivors.pop(1)
            continue
        ratio = icer(a, b)
        base = acer(a)
        if ratio <= 0.0:
            rule, drop = "dominated (ICER <= 0)", 1
        elif ratio >= base:
            rule, drop = "extra benefit too expensive (ICER >= ACER)", 1
        else:
            rule, drop = "cheaper strategy outclassed (ICER < ACER)", 0
        steps.append(EliminationStep(
            round_no, a.strategy, b.strategy, ratio, base, rule,
            survivors[drop].strategy,
        ))
        survivors.pop(drop)
    return survivors[0]


def rank(records) -> RankingReport:
    """Rank strategies by repeated elimination tournaments.

    Each round runs the cheapest-pair elimination until one strategy
    survives; that survivor takes the next rank and leaves the pool.
    The step log records every comparison for audit and replay.
    """
    pool = list(records)
    if not pool:
        raise ValueError("cannot rank an empty set of strategies")
    ids = [r.strategy for r in pool]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate strategy ids in {ids}")
    steps: list[EliminationStep] = []
    ranked: list[OutcomeRecord] = []
    round_no = 1
    while pool:
        winner = _eliminate_once(pool, round_no, steps)
        ranked.append(winner)
        pool = [r for r in pool if r.strategy != winner.strategy]
        round_no += 1
    return RankingReport(ranked=tuple(ranked), steps=tuple(steps))


def replay_elimination(steps, records) -> dict[str, int]:
    """Recover the rank permutation from an elimination log alone.

    Each round's survivor is the pool member the log never dropped in
    that round; it takes the next rank and leaves the pool. Used to
    audit that a serialized log and its report agree.
    """
    pool = {r.strategy for r in records}
    rounds: dict[int, set[str]] = {}
    for s in steps:
        rounds.setdefault(s.round, set()).add(s.dropped)
    ranks: dict[str, int] = {}
    for round_no in range(1, len(pool) + 1):
        dropped = rounds.get(round_no, set())
        survivors = pool - dropped
        if len(survivors) != 1:
            raise ValueError(
                f"elimination log round {round_no} leaves {sorted(survivors)} "
                "instead of a single survivor"
            )
        winner = survivors.pop()
        ranks[winner] = round_no
        pool.discard(winner)
    return ranks

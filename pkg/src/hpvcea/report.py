"""Flat-file report emission: CSV, JSON, text and figure rendering.

All writers are deterministic: stable field order, shortest
round-trip float formatting, fixed line terminators. Figures render
through the Agg backend so batch runs work headless.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)
import numpy as np  # noqa: E402

from .cea import RankingReport  # noqa: E402
from .integrate import control_nodes  # noqa: E402
from .model import CONTROL_NAMES, STATE_NAMES, Trajectory  # noqa: E402

__all__ = [
    "write_trajectory_csv",
    "write_ranking_csv",
    "write_elimination_log",
    "write_comparisons_csv",
    "write_summary_json",
    "write_summary_text",
    "render_trajectory_figure",
    "render_controls_figure",
    "render_ce_plane_figure",
]


def _fmt(value: float) -> str:
    """Shortest decimal that round-trips to the same double."""
    return repr(float(value))


def write_trajectory_csv(path, traj: Trajectory, schedule=None) -> Path:
    """One row per grid point; control columns only when a schedule is given."""
    path = Path(path)
    header = ["t", *STATE_NAMES]
    controls = None
    if schedule is not None:
        header += list(CONTROL_NAMES)
        controls = control_nodes(schedule, len(traj), traj.dt)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, t in enumerate(traj.grid):
            row = [_fmt(t), *(_fmt(v) for v in traj.states[i])]
            if controls is not None:
                row += [_fmt(v) for v in controls[i]]
            writer.writerow(row)
    return path


def write_ranking_csv(path, report: RankingReport) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["strategy", "cost", "effectiveness", "acer", "rank"])
        for rank_no, rec in enumerate(report.ranked, start=1):
            writer.writerow([
                rec.strategy, _fmt(rec.cost), _fmt(rec.effectiveness),
                _fmt(rec.acer), rank_no,
            ])
    return path


def write_elimination_log(path, report: RankingReport) -> Path:
    """Human-readable trace of every pairwise elimination decision."""
    path = Path(path)
    lines = []
    for s in report.steps:
        if s.icer is None:
            detail = "equal effectiveness"
        else:
            detail = f"ICER={s.icer:.6g} vs ACER({s.cheaper})={s.acer_cheaper:.6g}"
        lines.append(
            f"round {s.round}: {s.cheaper} vs {s.costlier}: {detail}; "
            f"{s.rule}; dropped {s.dropped}"
        )
    for rank_no, rec in enumerate(report.ranked, start=1):
        lines.append(f"rank {rank_no}: {rec.strategy}")
    path.write_text("\n".join(lines) + "\n")
    return path


def write_comparisons_csv(path, rows) -> Path:
    """Cross-strategy ICER/ACER rows from the pairwise comparisons."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["first", "second", "icer", "acer_first", "acer_second"])
        for row in rows:
            writer.writerow([
                row["first"], row["second"], _fmt(row["icer"]),
                _fmt(row["acer_first"]), _fmt(row["acer_second"]),
            ])
    return path


def write_summary_json(path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def write_summary_text(path, lines) -> Path:
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def render_trajectory_figure(path, traj: Trajectory, title: str) -> Path:
    """Compartment fractions over time, female and male panels."""
    path = Path(path)
    fig, (ax_f, ax_m) = plt.subplots(1, 2, figsize=(10, 4), sharex=True)
    t = traj.grid
    for name in ("S_f", "U_f", "I_f", "V_f"):
        ax_f.plot(t, traj.column(name), label=name)
    for name in ("S_m", "I_m", "V_m"):
        ax_m.plot(t, traj.column(name), label=name)
    for ax, sub in ((ax_f, "females"), (ax_m, "males")):
        ax.set_xlabel("time (years)")
        ax.set_ylabel("fraction")
        ax.set_title(sub)
        ax.legend(loc="best", fontsize="small")
        ax.grid(True, alpha=0.3)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_controls_figure(path, schedule, grid, title: str) -> Path:
    """Control effort profiles over time (active controls only)."""
    path = Path(path)
    grid = np.asarray(grid, dtype=float)
    values = control_nodes(schedule, grid.size, float(grid[1] - grid[0]))
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, name in enumerate(CONTROL_NAMES):
        if np.any(values[:, i] != 0.0):
            ax.plot(grid, values[:, i], label=name)
    ax.set_xlabel("time (years)")
    ax.set_ylabel("control level")
    ax.set_ylim(bottom=0.0)
    ax.set_title(title)
    ax.legend(loc="best", fontsize="small")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_ce_plane_figure(path, records, ranks: dict, title: str) -> Path:
    """Cost-effectiveness plane with strategies labeled by rank."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 5))
    for rec in records:
        ax.scatter(rec.effectiveness, rec.cost, color="tab:blue")
        ax.annotate(
            f"{rec.strategy} (#{ranks[rec.strategy]})",
            (rec.effectiveness, rec.cost),
            textcoords="offset points", xytext=(6, 4), fontsize="small",
        )
    ax.set_xlabel("effectiveness (averted prevalence-years)")
    ax.set_ylabel("cost")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path

"""Command line interface for scenario runs and one-off queries.

Subcommands mirror the library surface: simulate (trajectories),
reproduction (R_e breakdown at a control point), calibrate (solve a
rate back from a target R_e), rank (cost-effectiveness table for one
strategy family), optimize (sweep solver for one strategy) and compare
(cross-strategy ICER pairs). ``--config`` accepts a filesystem path or
the name of a bundled scenario (fig2a, fig2b, table3, table4,
section42-comparisons).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .model import CONTROL_NAMES, ControlVector
from .reproduction import classify_dfe, compute_dfe, effective_R
from .scenario import ScenarioConfig, calibrate_rate, load_config, run_scenario

__all__ = ["main"]


def _parse_controls(text: str) -> ControlVector:
    parts = [t.strip() for t in text.split(",")]
    if len(parts) != 5:
        raise ValueError(
            f"--controls needs 5 comma-separated values ({','.join(CONTROL_NAMES)}), "
            f"got {len(parts)}"
        )
    return ControlVector.from_array([float(t) for t in parts])


def _restrict(config: ScenarioConfig, strategies, pairs=()) -> ScenarioConfig:
    return replace(
        config, strategies=tuple(strategies), pairs=tuple(pairs), calibrations=()
    )


def _report_failures(result) -> int:
    for name, message in sorted(result.failures.items()):
        print(f"error: strategy {name}: {message}", file=sys.stderr)
    return 0 if result.ok else 1


def _cmd_simulate(args) -> int:
    config = load_config(args.config)
    chosen = [config.strategy(args.strategy)] if args.strategy else []
    result = run_scenario(
        _restrict(config, chosen), outdir=args.outdir,
        figures=not args.no_figures,
    )
    final = result.baseline.final
    print(
        f"baseline: final infected U_f={final.U_f:.6g} I_f={final.I_f:.6g} "
        f"I_m={final.I_m:.6g}"
    )
    for name, rec in sorted(result.records.items()):
        print(
            f"{name}: cost={rec.cost:.4f} effectiveness={rec.effectiveness:.4f} "
            f"acer={rec.acer:.4f}"
        )
    print(f"reports written to {args.outdir}")
    return _report_failures(result)


def _cmd_reproduction(args) -> int:
    config = load_config(args.config)
    controls = _parse_controls(args.controls)
    breakdown = effective_R(controls, config.params)
    dfe = compute_dfe(controls, config.params)
    print(f"R_e = {breakdown.R_e:.10f}")
    print(f"T_m_f = {breakdown.T_m_f:.10f}")
    print(f"T_f_m = {breakdown.T_f_m:.10f}")
    print(
        f"infection-free equilibrium: S_f={dfe.S_f:.10f} V_f={dfe.V_f:.10f} "
        f"S_m={dfe.S_m:.10f} V_m={dfe.V_m:.10f}"
    )
    print(f"verdict: {classify_dfe(breakdown.R_e)}")
    return 0


def _cmd_calibrate(args) -> int:
    config = load_config(args.config)
    spec = config.calibration(args.mask)
    target = spec.target if args.target is None else args.target
    result = calibrate_rate(
        spec.mask, spec.fixed, spec.free, target, config.params, name=spec.name
    )
    print(f"{' = '.join(result.free)} = {result.rate:.9f}")
    print(f"R_e = {result.r_e:.9f} (target {target}) after {result.iterations} bisections")
    print(
        "controls: "
        + " ".join(f"{n}={v:.9g}" for n, v in zip(CONTROL_NAMES, result.controls.as_tuple()))
    )
    return 0


def _cmd_rank(args) -> int:
    config = load_config(args.config)
    wanted = "optimal" if args.family == "optimal" else "constant"
    chosen = [s for s in config.strategies if s.optimize == (wanted == "optimal")]
    if not chosen:
        raise ValueError(f"scenario has no {wanted} strategies to rank")
    result = run_scenario(
        _restrict(config, chosen), outdir=args.outdir,
        figures=not args.no_figures,
    )
    report = result.rankings.get(wanted)
    if report is not None:
        print("strategy  cost        effectiveness  acer      rank")
        for rank_no, rec in enumerate(report.ranked, start=1):
            print(
                f"{rec.strategy:<9} {rec.cost:<11.4f} {rec.effectiveness:<14.4f} "
                f"{rec.acer:<9.4f} {rank_no}"
            )
    for name, sol in sorted(result.solutions.items()):
        print(f"{name}: converged={sol.converged} iterations={sol.iterations}")
    print(f"reports written to {args.outdir}")
    return _report_failures(result)


def _cmd_optimize(args) -> int:
    config = load_config(args.config)
    spec = config.strategy(args.mask)
    if not spec.optimize:
        raise ValueError(
            f"strategy {spec.name} is a constant strategy; use simulate instead"
        )
    result = run_scenario(
        _restrict(config, [spec]), outdir=args.outdir,
        figures=not args.no_figures,
    )
    if spec.name in result.records:
        sol = result.solutions[spec.name]
        rec = result.records[spec.name]
        print(
            f"{spec.name}: converged={sol.converged} iterations={sol.iterations} "
            f"J={sol.j_value:.6f} residual={sol.final_residual:.3e}"
        )
        print(
            f"{spec.name}: cost={rec.cost:.4f} effectiveness={rec.effectiveness:.4f} "
            f"acer={rec.acer:.4f}"
        )
    print(f"reports written to {args.outdir}")
    return _report_failures(result)


def _cmd_compare(args) -> int:
    config = load_config(args.config)
    if args.pairs:
        pairs = []
        for item in args.pairs.split(","):
            item = item.strip()
            if not item:
                continue
            first, sep, second = item.partition(":")
            if not sep or not first.strip() or not second.strip():
                raise ValueError(f"pair {item!r} must look like FIRST:SECOND")
            pairs.append((first.strip(), second.strip()))
    else:
        pairs = list(config.pairs)
    if not pairs:
        raise ValueError("no pairs given and the scenario defines none")
    needed = {name for pair in pairs for name in pair}
    chosen = [s for s in config.strategies if s.name in needed]
    missing = needed - {s.name for s in chosen}
    if missing:
        raise ValueError(f"pairs reference unknown strategies {sorted(missing)}")
    result = run_scenario(
        _restrict(config, chosen, pairs), outdir=args.outdir,
        figures=not args.no_figures,
    )
    for row in result.comparisons:
        print(
            f"{row['first']} vs {row['second']}: ICER={row['icer']:.4f} "
            f"ACER({row['first']})={row['acer_first']:.4f} "
            f"ACER({row['second']})={row['acer_second']:.4f}"
        )
    print(f"reports written to {args.outdir}")
    return _report_failures(result)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hpvcea",
        description=(
            "Two-sex transmission model with vaccination and screening: "
            "simulation, reproduction numbers, cost-effectiveness ranking "
            "and optimal control."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, handler, help_text, outputs=True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument(
            "--config", required=True,
            help="scenario file path or bundled scenario name",
        )
        if outputs:
            p.add_argument(
                "--outdir", default="hpvcea-out",
                help="directory for CSV/JSON/figure reports (default: hpvcea-out)",
            )
            p.add_argument(
                "--no-figures", action="store_true",
                help="skip figure rendering",
            )
        p.set_defaults(handler=handler)
        return p

    p = add("simulate", _cmd_simulate, "integrate the model and write trajectories")
    p.add_argument("--strategy", help="strategy name from the scenario (default: baseline only)")

    p = add("reproduction", _cmd_reproduction,
            "reproduction numbers at a constant control point", outputs=False)
    p.add_argument(
        "--controls", required=True,
        help="five comma-separated values: w1,w2,u1,u2,alpha",
    )

    p = add("calibrate", _cmd_calibrate,
            "solve a free rate back from a target R_e", outputs=False)
    p.add_argument("--mask", required=True, help="calibration name from the scenario")
    p.add_argument("--target", type=float, help="target R_e (default: from the scenario)")

    p = add("rank", _cmd_rank, "rank one strategy family by cost-effectiveness")
    p.add_argument(
        "--family", required=True, choices=("constant", "optimal"),
        help="which strategy family to rank",
    )

    p = add("optimize", _cmd_optimize, "solve the optimal control problem for one strategy")
    p.add_argument("--mask", required=True, help="optimize-flagged strategy name")

    p = add("compare", _cmd_compare, "pairwise ICER comparisons across strategies")
    p.add_argument("--pairs", help="comma-separated FIRST:SECOND pairs (default: from scenario)")

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except Exception as exc:  # CLI contract: nonzero exit with a diagnostic
        # KeyError carries its message as a repr-quoted argument
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

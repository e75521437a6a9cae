"""Fixed-step RK4 integration and quadrature on a shared uniform grid.

Everything downstream (cost integrals, the adjoint sweep, the control
update) lives on one uniform grid, so the integrator is deliberately a
classical fixed-step RK4 rather than an adaptive scheme: state,
adjoint, control and quadrature samples then coincide node for node.
Time-dependent controls are sampled at the RK substage times by linear
interpolation, which for the half step is the mean of the two
surrounding nodes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .model import (
    ControlSchedule,
    ControlVector,
    ModelParameters,
    State,
    Trajectory,
    full_rhs_fn,
)

__all__ = [
    "DivergenceError",
    "SimulationConfig",
    "FIG2_INITIAL_STATE",
    "control_nodes",
    "integrate_forward",
    "integrate_backward",
    "quadrature",
    "simulate",
]

logger = logging.getLogger(__name__)

#: Initial compartment fractions used throughout the study.
FIG2_INITIAL_STATE = State(
    S_f=0.95, U_f=0.03, I_f=0.02, V_f=0.0, S_m=0.95, I_m=0.05, V_m=0.0
)

#: Simplex drift above which a returned model state is renormalized.
DRIFT_TOL = 1e-9

#: Default bound on any solution component before the run is declared
#: divergent. Adjoint sweeps legitimately exceed it and pass a larger
#: limit.
DIVERGENCE_LIMIT = 10.0


class DivergenceError(RuntimeError):
    """A solution component left the plausible range mid-run."""


@dataclass(frozen=True)
class SimulationConfig:
    """Time horizon, step and initial state of a model run."""

    t_final: float = 100.0
    dt: float = 0.02
    initial_state: State = FIG2_INITIAL_STATE

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_final > 0.0:
            raise ValueError(f"t_final must be positive, got {self.t_final}")
        steps = self.t_final / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(
                f"t_final={self.t_final} is not an integer number of dt={self.dt} steps"
            )

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.n_steps + 1)

    def replace(self, **changes) -> "SimulationConfig":
        return replace(self, **changes)


def control_nodes(schedule, n_nodes: int, dt: float) -> np.ndarray:
    """Control values at every grid node as an (n_nodes, 5) array.

    Accepts the same schedule forms as the integrator: None (all
    controls off), a constant ControlVector, or a ControlSchedule whose
    grid matches.
    """
    if schedule is None:
        return np.zeros((n_nodes, 5))
    if isinstance(schedule, ControlVector):
        return np.tile(schedule.as_array(), (n_nodes, 1))
    if isinstance(schedule, ControlSchedule):
        if schedule.grid.size != n_nodes or abs(schedule.dt - dt) > 1e-12:
            raise ValueError(
                "control schedule grid does not match the requested grid: "
                f"{schedule.grid.size} points at dt={schedule.dt} vs "
                f"{n_nodes} points at dt={dt}"
            )
        return schedule.values
    raise TypeError(f"unsupported schedule type {type(schedule).__name__}")


def _control_samples(schedule, config: SimulationConfig):
    """Per-node and per-midpoint control tuples for the RK substages."""
    n = config.n_steps
    if schedule is None:
        flat = [()] * (n + 1)
        return flat, flat[:n]
    if isinstance(schedule, ControlVector):
        c = schedule.as_tuple()
        return [c] * (n + 1), [c] * n
    if isinstance(schedule, ControlSchedule):
        if schedule.grid.size != n + 1 or abs(schedule.dt - config.dt) > 1e-12:
            raise ValueError(
                "schedule grid does not match the simulation grid: "
                f"{schedule.grid.size} points at dt={schedule.dt} vs "
                f"{n + 1} points at dt={config.dt}"
            )
        values = schedule.values
        nodes = [tuple(row) for row in values.tolist()]
        mids = [tuple(row) for row in (0.5 * (values[1:] + values[:-1])).tolist()]
        return nodes, mids
    raise TypeError(f"unsupported schedule type {type(schedule).__name__}")


def _check_bounds(y, limit: float, t: float) -> None:
    for v in y:
        if not -limit < v < limit:
            raise DivergenceError(
                f"solution component reached {v!r} at t={t:g} "
                f"(divergence limit {limit:g}); the run is unstable"
            )


def integrate_forward(
    rhs,
    initial,
    schedule=None,
    config: SimulationConfig = SimulationConfig(),
    divergence_limit: float = DIVERGENCE_LIMIT,
) -> np.ndarray:
    """Classical RK4 over the configured grid.

    Parameters
    ----------
    rhs:
        Callable ``rhs(y, c) -> sequence`` with ``y`` the current
        state (a list of floats) and ``c`` the control tuple at the
        substage time (empty when no schedule is given).
    initial:
        Initial state values (any sequence; State works via
        ``State.as_array``).
    schedule:
        None, a constant ControlVector, or a ControlSchedule on the
        exact simulation grid.

    Returns
    -------
    Array of shape (n_steps + 1, dim) with one row per grid node.
    """
    if isinstance(initial, State):
        initial = initial.as_array()
    y = [float(v) for v in np.asarray(initial, dtype=float)]
    n = config.n_steps
    h = config.dt
    hh = 0.5 * h
    h6 = h / 6.0
    nodes, mids = _control_samples(schedule, config)
    out = np.empty((n + 1, len(y)))
    out[0] = y
    f = rhs
    for k in range(n):
        c0 = nodes[k]
        cm = mids[k]
        c1 = nodes[k + 1]
        k1 = f(y, c0)
        z = [a + hh * b for a, b in zip(y, k1)]
        k2 = f(z, cm)
        z = [a + hh * b for a, b in zip(y, k2)]
        k3 = f(z, cm)
        z = [a + h * b for a, b in zip(y, k3)]
        k4 = f(z, c1)
        y = [
            a + h6 * (b1 + 2.0 * (b2 + b3) + b4)
            for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
        ]
        _check_bounds(y, divergence_limit, (k + 1) * h)
        out[k + 1] = y
    return out


def integrate_backward(
    rhs,
    frozen: np.ndarray,
    schedule=None,
    config: SimulationConfig = SimulationConfig(),
    terminal=None,
    divergence_limit: float = DIVERGENCE_LIMIT,
) -> np.ndarray:
    """RK4 on reversed time with a frozen forward trajectory.

    Integrates ``dpsi/dt = rhs(psi, y(t), c(t))`` from t_final down to
    0 starting from ``terminal`` (zero by default, the free-endpoint
    transversality condition). Values of the frozen trajectory and the
    controls at substage times are linear interpolants of the
    surrounding nodes.

    Returns an array shaped like ``frozen`` in forward time order, so
    row 0 is psi(0) and the last row is the terminal condition.
    """
    frozen = np.asarray(frozen, dtype=float)
    n = config.n_steps
    if frozen.shape[0] != n + 1:
        raise ValueError(
            f"frozen trajectory has {frozen.shape[0]} rows, expected {n + 1}"
        )
    nodes, mids = _control_samples(schedule, config)
    y_nodes = [tuple(row) for row in frozen.tolist()]
    y_mids = [tuple(row) for row in (0.5 * (frozen[1:] + frozen[:-1])).tolist()]
    dim = frozen.shape[1] if terminal is None else len(terminal)
    psi = [0.0] * dim if terminal is None else [float(v) for v in terminal]
    h = config.dt
    hh = 0.5 * h
    h6 = h / 6.0
    out = np.empty((n + 1, dim))
    out[n] = psi
    f = rhs
    # stepping t_k -> t_{k-1}: an RK4 step of size -h
    for k in range(n, 0, -1):
        y1 = y_nodes[k]
        ym = y_mids[k - 1]
        y0 = y_nodes[k - 1]
        c1 = nodes[k]
        cm = mids[k - 1]
        c0 = nodes[k - 1]
        k1 = f(psi, y1, c1)
        z = [a - hh * b for a, b in zip(psi, k1)]
        k2 = f(z, ym, cm)
        z = [a - hh * b for a, b in zip(psi, k2)]
        k3 = f(z, ym, cm)
        z = [a - h * b for a, b in zip(psi, k3)]
        k4 = f(z, y0, c0)
        psi = [
            a - h6 * (b1 + 2.0 * (b2 + b3) + b4)
            for a, b1, b2, b3, b4 in zip(psi, k1, k2, k3, k4)
        ]
        _check_bounds(psi, divergence_limit, (k - 1) * h)
        out[k - 1] = psi
    return out


def quadrature(values, dt: float) -> float:
    """Composite trapezoid rule on a uniform grid.

    Trapezoid (not a higher-order rule) matches the piecewise-linear
    control representation used by the sweep solver.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise ValueError("quadrature needs a 1-d array of at least two samples")
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    return float(np.trapezoid(values, dx=dt))


def simulate(
    schedule,
    params: ModelParameters = ModelParameters(),
    config: SimulationConfig = SimulationConfig(),
) -> Trajectory:
    """Integrate the 7-compartment model under a control schedule.

    ``schedule`` may be None (no intervention), a constant
    ControlVector, or a ControlSchedule on the simulation grid. States
    are renormalized onto the population simplices only when the
    accumulated drift exceeds DRIFT_TOL, and any such event is logged:
    visible drift is a solver-health signal, not routine cleanup.
    """
    if schedule is None:
        schedule = ControlVector.zero()
    states = integrate_forward(
        full_rhs_fn(params), config.initial_state, schedule, config
    )
    female = states[:, :4].sum(axis=1)
    male = states[:, 4:].sum(axis=1)
    drift = max(np.abs(female - 1.0).max(), np.abs(male - 1.0).max())
    if drift > DRIFT_TOL:
        logger.warning(
            "renormalizing trajectory onto the population simplices: "
            "max drift %.3e exceeds %.1e", drift, DRIFT_TOL,
        )
        states = states.copy()
        states[:, :4] /= female[:, None]
        states[:, 4:] /= male[:, None]
    return Trajectory(config.grid, states)

"""Optimal time-dependent controls by forward-backward sweep.

The control problem minimizes female prevalence burden plus quadratic
control effort over the reduced model (the susceptible classes are
eliminated through the constant population sizes). Pontryagin's
principle gives an adjoint system integrated backward from a zero
terminal condition and a pointwise characterization of each control as
a clipped ratio of adjoint quantities. The sweep alternates forward
state integration, backward adjoint integration, and a relaxed control
update until state, adjoint input and control all stop moving in a
relative sup sense.

Convergence of the plain sweep is not guaranteed for aggressive
relaxation; with relaxation 0.5 the iteration can settle into a
two-cycle on this model, while 0.1 converges for every strategy
considered here. The relaxation factor is therefore part of the
configuration rather than a constant.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cea import CostWeights
from .integrate import (
    SimulationConfig,
    control_nodes,
    integrate_backward,
    integrate_forward,
    quadrature,
)
from .model import (
    ControlSchedule,
    ControlVector,
    ModelParameters,
    STRATEGIES,
    StrategyMask,
    Trajectory,
    control_rhs_fn,
    lift_reduced,
)

__all__ = [
    "ADJOINT_NAMES",
    "AdjointState",
    "AdjointTrajectory",
    "FbsmConfig",
    "OptimalSolution",
    "ObjectiveDivergenceError",
    "objective_J",
    "hamiltonian",
    "adjoint_rhs",
    "adjoint_rhs_fn",
    "characterize_controls",
    "fbsm_solve",
]

logger = logging.getLogger(__name__)

#: Adjoint components; psi1..psi5 pair with (U_f, I_f, V_f, I_m, V_m).
ADJOINT_NAMES = ("psi1", "psi2", "psi3", "psi4", "psi5")

# consecutive relative objective increases tolerated before the sweep
# is declared divergent (an oscillating sweep resets the counter)
_GROWTH_PATIENCE = 25
_GROWTH_RTOL = 1e-6
_GROWTH_WARMUP = 10


class ObjectiveDivergenceError(RuntimeError):
    """The sweep objective grew iteration after iteration."""


@dataclass(frozen=True)
class AdjointState:
    """Costate values paired with the reduced state (U_f..V_m)."""

    psi1: float = 0.0
    psi2: float = 0.0
    psi3: float = 0.0
    psi4: float = 0.0
    psi5: float = 0.0

    @classmethod
    def zero(cls) -> "AdjointState":
        return cls()

    @classmethod
    def from_array(cls, values) -> "AdjointState":
        p1, p2, p3, p4, p5 = (float(v) for v in values)
        return cls(p1, p2, p3, p4, p5)

    def as_array(self) -> np.ndarray:
        return np.array([self.psi1, self.psi2, self.psi3, self.psi4, self.psi5])

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.psi1, self.psi2, self.psi3, self.psi4, self.psi5)


@dataclass(frozen=True)
class FbsmConfig:
    """Sweep iteration controls and per-control upper bounds.

    A bound below 1 expresses a deliverability ceiling on that
    intervention; the characterized controls are clipped to it. The
    adjoint divergence limit is far looser than the state limit
    because adjoint magnitudes scale with the burden weights and the
    horizon (peaks in the hundreds are routine for healthy runs).
    """

    max_iterations: int = 2000
    tolerance: float = 1e-3
    relaxation: float = 0.5
    w1_max: float = 1.0
    w2_max: float = 1.0
    u1_max: float = 1.0
    u2_max: float = 1.0
    alpha_max: float = 1.0
    adjoint_divergence_limit: float = 1e6

    def __post_init__(self) -> None:
        if not (isinstance(self.max_iterations, int) and self.max_iterations >= 1):
            raise ValueError(
                f"max_iterations must be a positive integer, got {self.max_iterations!r}"
            )
        if not (math.isfinite(self.tolerance) and self.tolerance > 0.0):
            raise ValueError(f"tolerance must be positive, got {self.tolerance!r}")
        if not 0.0 < self.relaxation <= 1.0:
            raise ValueError(
                f"relaxation must lie in (0, 1], got {self.relaxation!r}"
            )
        for name in ("w1_max", "w2_max", "u1_max", "u2_max", "alpha_max"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if not self.adjoint_divergence_limit > 0.0:
            raise ValueError(
                "adjoint_divergence_limit must be positive, got "
                f"{self.adjoint_divergence_limit!r}"
            )

    @property
    def caps(self) -> np.ndarray:
        return np.array(
            [self.w1_max, self.w2_max, self.u1_max, self.u2_max, self.alpha_max]
        )

    def replace(self, **changes) -> "FbsmConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class AdjointTrajectory:
    """Adjoint components sampled on the simulation grid."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.shape != (grid.size, len(ADJOINT_NAMES)):
            raise ValueError(
                f"adjoint values shaped {values.shape}, expected "
                f"({grid.size}, {len(ADJOINT_NAMES)})"
            )
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.grid.size)

    @property
    def dt(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def terminal(self) -> AdjointState:
        return AdjointState.from_array(self.values[-1])

    def state(self, index: int) -> AdjointState:
        return AdjointState.from_array(self.values[index])

    def column(self, name: str) -> np.ndarray:
        return self.values[:, ADJOINT_NAMES.index(name)]


@dataclass(frozen=True)
class OptimalSolution:
    """Converged (or abandoned) output of one sweep run."""

    strategy: str
    schedule: ControlSchedule
    state: Trajectory
    adjoint: AdjointTrajectory
    j_value: float
    iterations: int
    converged: bool
    final_residual: float
    j_history: tuple[float, ...] = field(repr=False)

    @property
    def trajectory(self) -> Trajectory:
        """Alias for the state trajectory."""
        return self.state

    def as_summary(self) -> dict:
        """Flat JSON-friendly run record (no trajectories)."""
        return {
            "strategy": self.strategy,
            "converged": self.converged,
            "iterations": self.iterations,
            "j_value": self.j_value,
            "final_residual": self.final_residual,
            "peak_controls": {
                name: float(self.schedule.values[:, i].max())
                for i, name in enumerate(("w1", "w2", "u1", "u2", "alpha"))
            },
        }


def objective_J(
    traj: Trajectory,
    schedule,
    weights: CostWeights = CostWeights(),
) -> float:
    """Value of the control objective along a trajectory.

    Burden is linear in the female infected classes; effort enters
    quadratically so the characterization stays single-valued.
    """
    c = control_nodes(schedule, len(traj), traj.dt)
    w = weights
    running = (
        w.b1 * traj.column("U_f")
        + w.b2 * traj.column("I_f")
        + 0.5 * (
            w.a1 * (c[:, 0] ** 2 + c[:, 1] ** 2)
            + w.a2 * (c[:, 2] ** 2 + c[:, 3] ** 2)
            + w.a3 * c[:, 4] ** 2
        )
    )
    return quadrature(running, traj.dt)


def hamiltonian(
    reduced_state,
    adjoint,
    controls,
    params: ModelParameters = ModelParameters(),
    weights: CostWeights = CostWeights(),
):
    """Pointwise Hamiltonian: running cost plus adjoint-weighted drift.

    ``controls`` may carry leading batch dimensions (shape (..., 5));
    state and adjoint are single points. Used to check the minimum
    principle against brute-force control grids.
    """
    u_f, i_f, v_f, i_m, v_m = (float(v) for v in np.asarray(reduced_state))
    if isinstance(adjoint, AdjointState):
        adjoint = adjoint.as_array()
    p1, p2, p3, p4, p5 = (float(v) for v in np.asarray(adjoint))
    c = np.asarray(controls, dtype=float)
    if c.shape[-1] != 5:
        raise ValueError(f"controls must have 5 components, got shape {c.shape}")
    w1, w2, u1, u2, alpha = (c[..., i] for i in range(5))
    p = params
    s_f = 1.0 - u_f - i_f - v_f
    s_m = 1.0 - i_m - v_m
    sigma_f = s_f + p.epsilon * v_f
    foi_f = p.beta_m * i_m
    foi_m = p.beta_f * u_f + p.beta_f_tilde * i_f
    f1 = sigma_f * (1.0 - p.p) * foi_f - (p.gamma_f + p.mu_f) * u_f - alpha * u_f
    f2 = sigma_f * p.p * foi_f + alpha * u_f - (p.gamma_f + p.mu_f) * i_f
    f3 = w1 * p.mu_f + u1 * s_f - p.epsilon * foi_f * v_f - (p.mu_f + p.theta) * v_f
    f4 = foi_m * (s_m + p.epsilon * v_m) - (p.gamma_m + p.mu_m) * i_m
    f5 = w2 * p.mu_m - foi_m * p.epsilon * v_m + u2 * s_m - (p.mu_m + p.theta) * v_m
    wt = weights
    running = (
        wt.b1 * u_f + wt.b2 * i_f
        + 0.5 * (
            wt.a1 * (w1 ** 2 + w2 ** 2)
            + wt.a2 * (u1 ** 2 + u2 ** 2)
            + wt.a3 * alpha ** 2
        )
    )
    value = running + p1 * f1 + p2 * f2 + p3 * f3 + p4 * f4 + p5 * f5
    return float(value) if np.ndim(value) == 0 else value


def adjoint_rhs_fn(
    params: ModelParameters, weights: CostWeights = CostWeights()
):
    """Adjoint right-hand side as a plain callable for the sweep.

    Maps (adjoint sequence, frozen state sequence, control sequence)
    to a 5-tuple of time derivatives; equals minus the state gradient
    of the Hamiltonian at that point.
    """
    eps = params.epsilon
    theta = params.theta
    beta_m = params.beta_m
    beta_f = params.beta_f
    beta_ft = params.beta_f_tilde
    p = params.p
    mu_f = params.mu_f
    mu_m = params.mu_m
    d_uf = params.gamma_f + mu_f
    d_im = params.gamma_m + mu_m
    k_vf = mu_f + theta
    k_vm = mu_m + theta
    q1 = (1.0 - p) * beta_m
    q2 = p * beta_m
    b1 = weights.b1
    b2 = weights.b2

    def rhs(psi, y, c):
        u_f, i_f, v_f, i_m, v_m = y
        w1, w2, u1, u2, alpha = c
        p1, p2, p3, p4, p5 = psi
        sigma_m = (1.0 - i_m - v_m) + eps * v_m
        sigma_f = (1.0 - u_f - i_f - v_f) + eps * v_f
        foi_m = beta_f * u_f + beta_ft * i_f
        return (
            -b1 + (q1 * i_m + d_uf + alpha) * p1 + (q2 * i_m - alpha) * p2
            + u1 * p3 - beta_f * sigma_m * p4 + beta_f * eps * v_m * p5,
            -b2 + q1 * i_m * p1 + (q2 * i_m + d_uf) * p2
            + u1 * p3 - beta_ft * sigma_m * p4 + beta_ft * eps * v_m * p5,
            ((1.0 - p) * p1 + p * p2) * (1.0 - eps) * beta_m * i_m
            + (eps * beta_m * i_m + u1 + k_vf) * p3,
            -beta_m * sigma_f * ((1.0 - p) * p1 + p * p2)
            + eps * beta_m * v_f * p3 + (foi_m + d_im) * p4 + u2 * p5,
            foi_m * ((1.0 - eps) * p4 + eps * p5) + (u2 + k_vm) * p5,
        )

    return rhs


def adjoint_rhs(
    adjoint,
    reduced_state,
    controls,
    params: ModelParameters = ModelParameters(),
    weights: CostWeights = CostWeights(),
) -> np.ndarray:
    """Checked single-point evaluation of the adjoint system."""
    if isinstance(adjoint, AdjointState):
        adjoint = adjoint.as_array()
    psi = np.asarray(adjoint, dtype=float)
    y = np.asarray(reduced_state, dtype=float)
    if psi.shape != (5,) or y.shape != (5,):
        raise ValueError(
            f"adjoint and state must have 5 components, got {psi.shape} and {y.shape}"
        )
    if isinstance(controls, ControlVector):
        controls = controls.as_tuple()
    c = tuple(float(v) for v in controls)
    if len(c) != 5:
        raise ValueError(f"controls must have 5 components, got {len(c)}")
    return np.array(adjoint_rhs_fn(params, weights)(psi.tolist(), y.tolist(), c))


def characterize_controls(
    reduced_state,
    adjoint,
    mask: StrategyMask | None = None,
    caps=None,
    params: ModelParameters = ModelParameters(),
    weights: CostWeights = CostWeights(),
):
    """Pointwise minimizers of the Hamiltonian over the control box.

    Each control solves a scalar quadratic, so the unconstrained
    stationary point is clipped into [0, cap] and masked-off controls
    are zeroed. A single point (shape (5,)) yields a ControlVector;
    stacked points (shape (n, 5)) yield an (n, 5) array.
    """
    single = np.ndim(reduced_state) == 1
    y = np.atleast_2d(np.asarray(reduced_state, dtype=float))
    if isinstance(adjoint, AdjointState):
        adjoint = adjoint.as_array()
    psi = np.atleast_2d(np.asarray(adjoint, dtype=float))
    if y.shape != psi.shape or y.shape[1] != 5:
        raise ValueError(
            f"states and adjoints must align as (n, 5), got {y.shape} and {psi.shape}"
        )
    caps = np.ones(5) if caps is None else np.asarray(caps, dtype=float)
    s_f = 1.0 - y[:, 0] - y[:, 1] - y[:, 2]
    s_m = 1.0 - y[:, 3] - y[:, 4]
    w = weights
    p = params
    out = np.column_stack([
        np.clip(-p.mu_f * psi[:, 2] / w.a1, 0.0, caps[0]),
        np.clip(-p.mu_m * psi[:, 4] / w.a1, 0.0, caps[1]),
        np.clip(-s_f * psi[:, 2] / w.a2, 0.0, caps[2]),
        np.clip(-s_m * psi[:, 4] / w.a2, 0.0, caps[3]),
        np.clip((psi[:, 0] - psi[:, 1]) * y[:, 0] / w.a3, 0.0, caps[4]),
    ])
    if mask is not None:
        out *= mask.as_array()
    return ControlVector.from_array(out[0]) if single else out


def _relsup(delta: np.ndarray, reference: np.ndarray) -> float:
    """Column-wise relative sup change, with a floor for dead columns."""
    num = np.abs(delta).max(axis=0)
    den = np.maximum(np.abs(reference).max(axis=0), 1e-12)
    return float((num / den).max())


def fbsm_solve(
    mask,
    params: ModelParameters = ModelParameters(),
    weights: CostWeights = CostWeights(),
    sim_config: SimulationConfig = SimulationConfig(),
    fbsm_config: FbsmConfig = FbsmConfig(),
) -> OptimalSolution:
    """Run the forward-backward sweep for one strategy.

    ``mask`` is a StrategyMask or the id of a bundled one. The sweep
    declares convergence only when the control update residual, the
    last control change and the last state change all fall below the
    tolerance together, so a returned solution is a self-consistent
    (state, adjoint, control) triple. Iterations count control updates
    actually applied.

    A sweep that merely fails to settle returns converged=False;
    ObjectiveDivergenceError is raised only when the objective keeps
    growing, which points at too aggressive a relaxation factor.
    """
    if isinstance(mask, str):
        mask = STRATEGIES[mask]
    if not isinstance(mask, StrategyMask):
        raise TypeError(
            f"mask must be a StrategyMask or strategy id, got {type(mask).__name__}"
        )
    rhs = control_rhs_fn(params)
    adj = adjoint_rhs_fn(params, weights)
    grid = sim_config.grid
    n = sim_config.n_steps
    y0 = sim_config.initial_state.reduced()
    caps = fbsm_config.caps
    rho = fbsm_config.relaxation
    tol = fbsm_config.tolerance

    def sweep_forward(schedule):
        return integrate_forward(rhs, y0, schedule, sim_config)

    def sweep_backward(states, schedule):
        return integrate_backward(
            adj, states, schedule, sim_config,
            divergence_limit=fbsm_config.adjoint_divergence_limit,
        )

    def as_schedule(values):
        return ControlSchedule(grid, values, mask)

    def j_of(states, schedule):
        return objective_J(Trajectory(grid, lift_reduced(states)), schedule, weights)

    controls = as_schedule(np.zeros((n + 1, 5)))
    states = sweep_forward(controls)
    adjoints = sweep_backward(states, controls)
    j_history = [j_of(states, controls)]
    prev_dc = prev_dy = math.inf
    residual = math.inf
    converged = False
    iterations = 0
    growth_run = 0
    growth_events = 0
    for it in range(1, fbsm_config.max_iterations + 1):
        proposal = characterize_controls(
            states, adjoints, mask, caps, params, weights
        )
        residual = _relsup(proposal - controls.values, proposal)
        if prev_dc < tol and prev_dy < tol and residual < tol:
            converged = True
            iterations = it - 1
            break
        new_values = rho * proposal + (1.0 - rho) * controls.values
        new_controls = as_schedule(new_values)
        new_states = sweep_forward(new_controls)
        prev_dc = _relsup(new_values - controls.values, new_values)
        prev_dy = _relsup(new_states - states, new_states)
        controls, states = new_controls, new_states
        adjoints = sweep_backward(states, controls)
        j_history.append(j_of(states, controls))
        iterations = it
        if it > _GROWTH_WARMUP:
            j_prev, j_new = j_history[-2], j_history[-1]
            if j_new - j_prev > _GROWTH_RTOL * max(1.0, abs(j_prev)):
                growth_run += 1
                growth_events += 1
                logger.debug(
                    "objective grew at iteration %d of %s: %.9g -> %.9g",
                    it, mask.id, j_prev, j_new,
                )
                if growth_run >= _GROWTH_PATIENCE:
                    raise ObjectiveDivergenceError(
                        f"objective for {mask.id} grew over {growth_run} "
                        f"consecutive updates (J={j_new:.6g} after {it} "
                        "iterations); lower the relaxation factor"
                    )
            else:
                growth_run = 0
    if growth_events:
        logger.warning(
            "sweep for %s saw %d objective increases beyond tolerance",
            mask.id, growth_events,
        )
    if not converged:
        logger.warning(
            "sweep for %s stopped at max_iterations=%d with residual %.3e "
            "(tolerance %.1e); returning the last iterate unconverged",
            mask.id, fbsm_config.max_iterations, residual, tol,
        )
    return OptimalSolution(
        strategy=mask.id,
        schedule=controls,
        state=Trajectory(grid, lift_reduced(states)),
        adjoint=AdjointTrajectory(grid, adjoints),
        j_value=j_history[-1],
        iterations=iterations,
        converged=converged,
        final_residual=residual,
        j_history=tuple(j_history),
    )

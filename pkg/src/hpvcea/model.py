"""Core model data types and right-hand sides.

Two-sex SIVS dynamics for HPV transmission. Females move between
susceptible (S_f), unaware infected (U_f), aware infected (I_f) and
vaccinated (V_f); males between susceptible (S_m), infected (I_m) and
vaccinated (V_m). Both populations are normalized to 1, so the feasible
region is the product of the two probability simplices.

Five interventions enter as controls: juvenile vaccination fractions
(w1 females, w2 males), adult vaccination rates (u1, u2) and the
screening rate alpha that moves unaware infected females to the aware
class. The module provides the full 7-dimensional right-hand side and
the reduced 5-dimensional form obtained by eliminating the susceptible
classes, which is the one the optimal-control machinery works with.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, fields, replace

import numpy as np

__all__ = [
    "ParameterRangeWarning",
    "ModelParameters",
    "ControlVector",
    "StrategyMask",
    "STRATEGIES",
    "CONTROL_NAMES",
    "ControlSchedule",
    "State",
    "StateDerivative",
    "Trajectory",
    "rhs_full",
    "rhs_control",
    "full_rhs_fn",
    "control_rhs_fn",
]

CONTROL_NAMES = ("w1", "w2", "u1", "u2", "alpha")

STATE_NAMES = ("S_f", "U_f", "I_f", "V_f", "S_m", "I_m", "V_m")

REDUCED_NAMES = ("U_f", "I_f", "V_f", "I_m", "V_m")

# Tolerance for membership checks on the population simplices.
SIMPLEX_TOL = 1e-9


class ParameterRangeWarning(UserWarning):
    """A parameter lies outside its plausible literature range."""


# Plausibility ranges for each rate/fraction, expressed on the stored
# field (rates, not durations). Values outside warn but do not error.
_PLAUSIBLE = {
    "epsilon": (0.0, 0.1),            # vaccine efficacy 0.9..1
    "theta": (1.0 / 50.0, 1.0 / 5.0),  # protection lasts 5..50 years
    "beta_m": (0.05, 5.0),
    "beta_f": (0.05, 5.0),
    "beta_f_tilde": (0.025, 2.5),
    "gamma_f": (1.0 / 2.0, 1.0 / 0.83),   # infectious 0.83..2 years
    "gamma_m": (1.0 / 1.2, 1.0 / 0.33),   # infectious 0.33..1.2 years
    "p": (0.0, 1.0),
    "mu_f": (0.02, 1.0),
    "mu_m": (0.02, 1.0),
}


@dataclass(frozen=True)
class ModelParameters:
    """Epidemiological constants, defaulting to the baseline estimates.

    All rates are per year. ``epsilon`` is the vaccine leakage
    (efficacy is ``1 - epsilon``), ``theta`` the waning rate of vaccine
    protection, ``beta_m`` the male-to-female transmission rate,
    ``beta_f``/``beta_f_tilde`` the transmission rates of unaware/aware
    infected females, ``gamma_f``/``gamma_m`` the female/male clearance
    rates, ``p`` the fraction of female infections that are immediately
    symptomatic, and ``mu_f``/``mu_m`` the rates of ceasing sexual
    activity.
    """

    epsilon: float = 0.05
    theta: float = 1.0 / 20.0
    beta_m: float = 2.0
    beta_f: float = 2.0
    beta_f_tilde: float = 0.5
    gamma_f: float = 1.0 / 1.3
    gamma_m: float = 1.0 / 0.6
    p: float = 0.4
    mu_f: float = 1.0 / 20.0
    mu_m: float = 1.0 / 25.0

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0.0:
                raise ValueError(f"{f.name} must be finite and >= 0, got {v}")
        for name in ("epsilon", "p"):
            v = getattr(self, name)
            if v > 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        # an aware female takes precautions, so she cannot transmit
        # more than an unaware one
        if not self.beta_f_tilde < self.beta_f:
            raise ValueError(
                "beta_f_tilde must be strictly smaller than beta_f, got "
                f"{self.beta_f_tilde} >= {self.beta_f}"
            )
        for name, (lo, hi) in _PLAUSIBLE.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                warnings.warn(
                    f"{name}={v:g} is outside the plausible range [{lo:g}, {hi:g}]",
                    ParameterRangeWarning,
                    stacklevel=2,
                )

    def replace(self, **changes: float) -> "ModelParameters":
        return replace(self, **changes)


@dataclass(frozen=True)
class ControlVector:
    """The five interventions (w1, w2, u1, u2, alpha), each in [0, 1]."""

    w1: float = 0.0
    w2: float = 0.0
    u1: float = 0.0
    u2: float = 0.0
    alpha: float = 0.0

    def __post_init__(self) -> None:
        for name in CONTROL_NAMES:
            v = getattr(self, name)
            if not np.isfinite(v) or not 0.0 <= v <= 1.0:
                raise ValueError(f"control {name} must lie in [0, 1], got {v}")

    @classmethod
    def zero(cls) -> "ControlVector":
        return cls()

    @classmethod
    def from_array(cls, values) -> "ControlVector":
        w1, w2, u1, u2, alpha = (float(v) for v in values)
        return cls(w1, w2, u1, u2, alpha)

    def as_array(self) -> np.ndarray:
        return np.array([self.w1, self.w2, self.u1, self.u2, self.alpha])

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.w1, self.w2, self.u1, self.u2, self.alpha)


@dataclass(frozen=True)
class StrategyMask:
    """Which of the five controls a strategy is allowed to use."""

    id: str
    active: tuple[bool, bool, bool, bool, bool]

    def __post_init__(self) -> None:
        if len(self.active) != 5:
            raise ValueError("active must have one flag per control")
        object.__setattr__(self, "active", tuple(bool(a) for a in self.active))

    @property
    def active_names(self) -> tuple[str, ...]:
        return tuple(n for n, a in zip(CONTROL_NAMES, self.active) if a)

    def allows(self, name: str) -> bool:
        if name not in CONTROL_NAMES:
            raise ValueError(f"unknown control {name!r}")
        return self.active[CONTROL_NAMES.index(name)]

    def apply(self, c: ControlVector) -> ControlVector:
        """Zero out the controls this strategy does not use."""
        vals = [v if a else 0.0 for v, a in zip(c.as_tuple(), self.active)]
        return ControlVector(*vals)

    def as_array(self) -> np.ndarray:
        return np.array(self.active, dtype=float)


def _mask(sid: str, *names: str) -> StrategyMask:
    return StrategyMask(sid, tuple(n in names for n in CONTROL_NAMES))


#: The eight intervention strategies under study: combinations of
#: juvenile vaccination (w), adult vaccination (u) and screening (alpha).
STRATEGIES: dict[str, StrategyMask] = {
    "S1": _mask("S1", "w1", "w2", "u1", "u2", "alpha"),
    "S2": _mask("S2", "w1", "w2"),
    "S3": _mask("S3", "u1", "u2"),
    "S4": _mask("S4", "w1", "u1"),
    "S5": _mask("S5", "w2", "u2"),
    "S6": _mask("S6", "w1", "w2", "alpha"),
    "S7": _mask("S7", "u1", "u2", "alpha"),
    "S8": _mask("S8", "w1", "u1", "alpha"),
}


@dataclass(frozen=True)
class ControlSchedule:
    """Per-control values sampled on a uniform time grid.

    ``values`` has shape (len(grid), 5) with columns ordered as
    CONTROL_NAMES. Controls not active under ``mask`` must be
    identically zero.
    """

    grid: np.ndarray
    values: np.ndarray
    mask: StrategyMask

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid must be 1-d with at least two points")
        steps = np.diff(grid)
        if np.any(steps <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
            raise ValueError("grid must be uniform")
        if values.shape != (grid.size, 5):
            raise ValueError(
                f"values must have shape ({grid.size}, 5), got {values.shape}"
            )
        if np.any(values < -1e-12) or np.any(values > 1.0 + 1e-12):
            raise ValueError("control samples must lie in [0, 1]")
        inactive = ~np.array(self.mask.active)
        if np.any(values[:, inactive] != 0.0):
            raise ValueError(
                f"strategy {self.mask.id} has nonzero samples on inactive controls"
            )

    @classmethod
    def constant(
        cls, c: ControlVector, grid, mask: StrategyMask | None = None
    ) -> "ControlSchedule":
        """Broadcast a constant control vector onto a grid."""
        grid = np.asarray(grid, dtype=float)
        if mask is None:
            mask = StrategyMask("custom", tuple(v != 0.0 for v in c.as_tuple()))
        values = np.tile(mask.apply(c).as_array(), (grid.size, 1))
        return cls(grid, values, mask)

    @property
    def dt(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def control_at(self, index: int) -> ControlVector:
        return ControlVector.from_array(self.values[index])


def _check_simplex(female_sum: float, male_sum: float, tol: float) -> None:
    if abs(female_sum - 1.0) > tol or abs(male_sum - 1.0) > tol:
        raise ValueError(
            "state is off the population simplices: "
            f"female sum {female_sum!r}, male sum {male_sum!r}"
        )


@dataclass(frozen=True)
class State:
    """Compartment fractions (S_f, U_f, I_f, V_f, S_m, I_m, V_m)."""

    S_f: float
    U_f: float
    I_f: float
    V_f: float
    S_m: float
    I_m: float
    V_m: float

    def __post_init__(self) -> None:
        for name in STATE_NAMES:
            v = getattr(self, name)
            if not np.isfinite(v) or v < -SIMPLEX_TOL:
                raise ValueError(f"compartment {name} must be >= 0, got {v}")
        _check_simplex(self.female_sum, self.male_sum, SIMPLEX_TOL)

    @property
    def female_sum(self) -> float:
        return self.S_f + self.U_f + self.I_f + self.V_f

    @property
    def male_sum(self) -> float:
        return self.S_m + self.I_m + self.V_m

    @classmethod
    def from_array(cls, values) -> "State":
        return cls(*(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in STATE_NAMES])

    def reduced(self) -> np.ndarray:
        """Project onto (U_f, I_f, V_f, I_m, V_m)."""
        return np.array([self.U_f, self.I_f, self.V_f, self.I_m, self.V_m])


@dataclass(frozen=True)
class StateDerivative:
    """Time derivative of a State, in fractions per year.

    Kept distinct from State: derivatives are signed rates, not
    simplex points.
    """

    S_f: float
    U_f: float
    I_f: float
    V_f: float
    S_m: float
    I_m: float
    V_m: float

    @property
    def female_sum(self) -> float:
        return self.S_f + self.U_f + self.I_f + self.V_f

    @property
    def male_sum(self) -> float:
        return self.S_m + self.I_m + self.V_m

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in STATE_NAMES])


@dataclass(frozen=True)
class Trajectory:
    """States sampled on a time grid.

    ``states`` is an array of shape (len(grid), 7) with columns in
    STATE_NAMES order.
    """

    grid: np.ndarray
    states: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        states = np.asarray(self.states, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "states", states)
        if states.shape != (grid.size, 7):
            raise ValueError(
                f"states must have shape ({grid.size}, 7), got {states.shape}"
            )

    def __len__(self) -> int:
        return int(self.grid.size)

    @property
    def dt(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def state(self, index: int) -> State:
        return State.from_array(self.states[index])

    @property
    def initial(self) -> State:
        return self.state(0)

    @property
    def final(self) -> State:
        return self.state(-1)

    def column(self, name: str) -> np.ndarray:
        return self.states[:, STATE_NAMES.index(name)]


# Box tolerance accepted by the right-hand sides before declaring the
# input a solver blow-up.
_BOX_TOL = 1e-2


def _check_box(values, names, tol: float = _BOX_TOL) -> None:
    for name, v in zip(names, values):
        if not np.isfinite(v) or v < -tol or v > 1.0 + tol:
            raise ValueError(
                f"compartment {name}={v!r} outside [-{tol}, 1+{tol}]; "
                "the solver has likely blown up"
            )


def full_rhs_fn(params: ModelParameters):
    """Right-hand side of the 7-compartment model, as a plain callable.

    The returned function maps (state sequence, control sequence) to a
    7-tuple of derivatives and performs no validation; it is the kernel
    the integrator drives. Use :func:`rhs_full` for a checked,
    typed evaluation at a single point.
    """
    eps = params.epsilon
    theta = params.theta
    beta_m = params.beta_m
    beta_f = params.beta_f
    beta_ft = params.beta_f_tilde
    gamma_f = params.gamma_f
    gamma_m = params.gamma_m
    p = params.p
    mu_f = params.mu_f
    mu_m = params.mu_m

    def rhs(y, c):
        S_f, U_f, I_f, V_f, S_m, I_m, V_m = y
        w1, w2, u1, u2, alpha = c
        foi_f = beta_m * I_m                      # force of infection on females
        foi_m = beta_f * U_f + beta_ft * I_f      # force of infection on males
        return (
            (1.0 - w1) * mu_f - foi_f * S_f - (u1 + mu_f) * S_f
            + gamma_f * (U_f + I_f) + theta * V_f,
            (S_f + eps * V_f) * (1.0 - p) * foi_f - (gamma_f + alpha + mu_f) * U_f,
            (S_f + eps * V_f) * p * foi_f + alpha * U_f - (gamma_f + mu_f) * I_f,
            w1 * mu_f + u1 * S_f - eps * foi_f * V_f - (mu_f + theta) * V_f,
            (1.0 - w2) * mu_m - foi_m * S_m - (u2 + mu_m) * S_m
            + gamma_m * I_m + theta * V_m,
            foi_m * (S_m + eps * V_m) - (gamma_m + mu_m) * I_m,
            w2 * mu_m - foi_m * eps * V_m + u2 * S_m - (mu_m + theta) * V_m,
        )

    return rhs


def control_rhs_fn(params: ModelParameters):
    """Right-hand side of the reduced 5-dimensional control model.

    State order is (U_f, I_f, V_f, I_m, V_m); the susceptible classes
    are recovered as S_f = 1 - U_f - I_f - V_f and S_m = 1 - I_m - V_m.
    Same calling convention as :func:`full_rhs_fn`.
    """
    eps = params.epsilon
    theta = params.theta
    beta_m = params.beta_m
    beta_f = params.beta_f
    beta_ft = params.beta_f_tilde
    gamma_f = params.gamma_f
    gamma_m = params.gamma_m
    p = params.p
    mu_f = params.mu_f
    mu_m = params.mu_m

    def rhs(y, c):
        U_f, I_f, V_f, I_m, V_m = y
        w1, w2, u1, u2, alpha = c
        S_f = 1.0 - U_f - I_f - V_f
        S_m = 1.0 - I_m - V_m
        sigma_f = S_f + eps * V_f
        foi_f = beta_m * I_m
        foi_m = beta_f * U_f + beta_ft * I_f
        return (
            sigma_f * (1.0 - p) * foi_f - (gamma_f + alpha + mu_f) * U_f,
            sigma_f * p * foi_f + alpha * U_f - (gamma_f + mu_f) * I_f,
            w1 * mu_f + u1 * S_f - eps * foi_f * V_f - (mu_f + theta) * V_f,
            foi_m * (S_m + eps * V_m) - (gamma_m + mu_m) * I_m,
            w2 * mu_m - foi_m * eps * V_m + u2 * S_m - (mu_m + theta) * V_m,
        )

    return rhs


def rhs_full(
    state: State, c: ControlVector, params: ModelParameters
) -> StateDerivative:
    """Evaluate the 7-compartment right-hand side at one point."""
    y = state.as_array()
    _check_box(y, STATE_NAMES)
    return StateDerivative(*full_rhs_fn(params)(y.tolist(), c.as_tuple()))


def rhs_control(reduced_state, c_at_t: ControlVector, params: ModelParameters):
    """Evaluate the reduced right-hand side at one point.

    ``reduced_state`` is a sequence (U_f, I_f, V_f, I_m, V_m); the
    implied susceptible fractions must be nonnegative.

    Returns a numpy array of the five derivatives.
    """
    y = np.asarray(reduced_state, dtype=float)
    if y.shape != (5,):
        raise ValueError(f"reduced state must have 5 components, got {y.shape}")
    _check_box(y, REDUCED_NAMES)
    s_f = 1.0 - y[0] - y[1] - y[2]
    s_m = 1.0 - y[3] - y[4]
    _check_box((s_f, s_m), ("S_f", "S_m"))
    return np.array(control_rhs_fn(params)(y.tolist(), c_at_t.as_tuple()))


def lift_reduced(reduced: np.ndarray) -> np.ndarray:
    """Lift reduced states (n, 5) to full 7-column states."""
    reduced = np.asarray(reduced, dtype=float)
    s_f = 1.0 - reduced[:, 0] - reduced[:, 1] - reduced[:, 2]
    s_m = 1.0 - reduced[:, 3] - reduced[:, 4]
    return np.column_stack([
        s_f, reduced[:, 0], reduced[:, 1], reduced[:, 2],
        s_m, reduced[:, 3], reduced[:, 4],
    ])

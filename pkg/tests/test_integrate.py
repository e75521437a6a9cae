"""Integrator: RK4 accuracy/order, backward sweep, quadrature, simulate."""

import math

import numpy as np
import pytest

from hpvcea.integrate import (
    FIG2_INITIAL_STATE,
    DivergenceError,
    SimulationConfig,
    control_nodes,
    integrate_backward,
    integrate_forward,
    quadrature,
    simulate,
)
from hpvcea.model import (
    ControlSchedule,
    ControlVector,
    ModelParameters,
    State,
    full_rhs_fn,
)

PARAMS = ModelParameters()


class TestSimulationConfig:
    def test_defaults(self):
        cfg = SimulationConfig()
        assert cfg.t_final == 100.0 and cfg.dt == 0.02
        assert cfg.n_steps == 5000
        grid = cfg.grid
        assert grid[0] == 0.0 and grid[-1] == 100.0 and grid.size == 5001
        assert cfg.initial_state == FIG2_INITIAL_STATE

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            SimulationConfig(dt=0.0)
        with pytest.raises(ValueError):
            SimulationConfig(t_final=-1.0)
        with pytest.raises(ValueError):
            SimulationConfig(t_final=1.0, dt=0.3)  # not an integer step count

    def test_replace(self):
        cfg = SimulationConfig().replace(t_final=10.0, dt=0.1)
        assert cfg.n_steps == 100


class TestControlNodes:
    def test_none_gives_zeros(self):
        nodes = control_nodes(None, 11, 0.1)
        assert nodes.shape == (11, 5) and not nodes.any()

    def test_constant_tiles(self):
        c = ControlVector(w1=0.3)
        nodes = control_nodes(c, 4, 0.5)
        assert np.all(nodes == c.as_array())

    def test_schedule_passthrough_and_mismatch(self):
        grid = np.linspace(0.0, 1.0, 11)
        sched = ControlSchedule.constant(ControlVector(u1=0.2), grid)
        assert np.array_equal(control_nodes(sched, 11, 0.1), sched.values)
        with pytest.raises(ValueError):
            control_nodes(sched, 21, 0.05)
        with pytest.raises(TypeError):
            control_nodes(0.3, 11, 0.1)


class TestForward:
    def test_exponential_decay(self):
        # dx/dt = -x, x(0)=1: global RK4 error at dt=0.1 is ~3e-7
        cfg = SimulationConfig(t_final=1.0, dt=0.1)
        out = integrate_forward(lambda y, c: (-y[0],), [1.0], None, cfg)
        assert out.shape == (11, 1)
        assert abs(out[-1, 0] - math.exp(-1.0)) < 1e-6

    def test_fourth_order_convergence(self):
        # halving the step must shrink the error ~16x on the real model
        controls = ControlVector(0.1, 0.07, 0.05, 0.03, 0.1)
        rhs = full_rhs_fn(PARAMS)
        y0 = FIG2_INITIAL_STATE

        def final_at(dt):
            cfg = SimulationConfig(t_final=5.0, dt=dt)
            return integrate_forward(rhs, y0, controls, cfg)[-1]

        ref = final_at(0.2 / 64.0)
        err_coarse = np.abs(final_at(0.2) - ref).max()
        err_fine = np.abs(final_at(0.1) - ref).max()
        order = math.log2(err_coarse / err_fine)
        assert 3.7 < order < 4.3

    def test_population_drift_stays_tiny(self):
        # a good solver keeps the conserved sums to rounding over 100y
        out = integrate_forward(
            full_rhs_fn(PARAMS),
            FIG2_INITIAL_STATE,
            ControlVector.zero(),
            SimulationConfig(),
        )
        female = out[:, :4].sum(axis=1)
        male = out[:, 4:].sum(axis=1)
        assert np.abs(female - 1.0).max() < 1e-9
        assert np.abs(male - 1.0).max() < 1e-9

    def test_divergence_guard(self):
        cfg = SimulationConfig(t_final=10.0, dt=0.1)
        with pytest.raises(DivergenceError):
            integrate_forward(lambda y, c: (y[0],), [1.0], None, cfg, 100.0)

    def test_time_dependent_schedule(self):
        # ramping u1 vaccinates more than holding its mean constant
        # only near the end; totals integrate the same control mass
        cfg = SimulationConfig(t_final=10.0, dt=0.1)
        grid = cfg.grid
        values = np.zeros((grid.size, 5))
        values[:, 2] = np.linspace(0.0, 0.4, grid.size)
        from hpvcea.model import STRATEGIES

        sched = ControlSchedule(grid, values, STRATEGIES["S3"])
        ramp = integrate_forward(full_rhs_fn(PARAMS), FIG2_INITIAL_STATE, sched, cfg)
        flat = integrate_forward(
            full_rhs_fn(PARAMS), FIG2_INITIAL_STATE, ControlVector(u1=0.2), cfg
        )
        # same average rate: end states agree loosely but not exactly
        assert abs(ramp[-1, 3] - flat[-1, 3]) < 0.05
        assert not np.array_equal(ramp, flat)


class TestBackward:
    def test_scalar_linear_adjoint(self):
        # dpsi/dt = a psi - b, psi(T) = 0 has psi(t) = (b/a)(1 - e^{a(t-T)})
        a, b, t_final = 0.7, 1.3, 5.0
        cfg = SimulationConfig(t_final=t_final, dt=0.01)
        frozen = np.zeros((cfg.n_steps + 1, 1))
        out = integrate_backward(
            lambda psi, y, c: (a * psi[0] - b,), frozen, None, cfg
        )
        t = cfg.grid
        exact = (b / a) * (1.0 - np.exp(a * (t - t_final)))
        assert np.abs(out[:, 0] - exact).max() < 1e-7

    def test_terminal_condition_is_exact(self):
        cfg = SimulationConfig(t_final=1.0, dt=0.1)
        frozen = np.zeros((cfg.n_steps + 1, 2))
        out = integrate_backward(
            lambda psi, y, c: (psi[1], -psi[0]), frozen, None, cfg,
            terminal=[2.0, 3.0],
        )
        assert out[-1].tolist() == [2.0, 3.0]
        default = integrate_backward(
            lambda psi, y, c: (psi[1], -psi[0]), frozen, None, cfg
        )
        assert default[-1].tolist() == [0.0, 0.0]

    def test_zero_source_stays_zero(self):
        # rhs linear in psi with psi(T)=0 must stay identically zero
        cfg = SimulationConfig(t_final=2.0, dt=0.05)
        frozen = np.random.default_rng(0).uniform(size=(cfg.n_steps + 1, 3))
        out = integrate_backward(
            lambda psi, y, c: (psi[0] * y[0], psi[1] + psi[2], psi[2] * y[1]),
            frozen, None, cfg,
        )
        assert not out.any()

    def test_frozen_shape_checked(self):
        cfg = SimulationConfig(t_final=1.0, dt=0.1)
        with pytest.raises(ValueError):
            integrate_backward(lambda psi, y, c: (0.0,), np.zeros((5, 1)), None, cfg)

    def test_reverses_forward_flow(self):
        # integrating x' = f backward from x(T) must recover x(0)
        a = -0.8
        cfg = SimulationConfig(t_final=3.0, dt=0.01)
        fwd = integrate_forward(lambda y, c: (a * y[0],), [1.0], None, cfg)
        frozen = np.zeros((cfg.n_steps + 1, 1))
        back = integrate_backward(
            lambda psi, y, c: (a * psi[0],), frozen, None, cfg,
            terminal=[fwd[-1, 0]],
        )
        assert abs(back[0, 0] - 1.0) < 1e-9


class TestQuadrature:
    def test_exact_on_linear(self):
        assert quadrature(np.linspace(0.0, 1.0, 11), 0.1) == pytest.approx(0.5)
        assert quadrature(np.full(101, 1.0), 1.0) == pytest.approx(100.0)

    def test_sin_integral(self):
        t = np.linspace(0.0, math.pi, 1001)
        assert quadrature(np.sin(t), t[1] - t[0]) == pytest.approx(2.0, abs=1e-4)

    def test_validation(self):
        with pytest.raises(ValueError):
            quadrature([1.0], 0.1)
        with pytest.raises(ValueError):
            quadrature([1.0, 2.0], 0.0)
        with pytest.raises(ValueError):
            quadrature(np.ones((3, 2)), 0.1)


class TestSimulate:
    def test_returns_trajectory_on_grid(self):
        cfg = SimulationConfig(t_final=10.0, dt=0.1)
        traj = simulate(None, config=cfg)
        assert len(traj) == 101
        assert traj.initial == FIG2_INITIAL_STATE
        assert traj.grid[-1] == 10.0

    def test_uncontrolled_epidemic_grows(self):
        # R_0 > 1, so prevalence rises from the small seed
        cfg = SimulationConfig(t_final=20.0, dt=0.02)
        traj = simulate(None, config=cfg)
        seed = FIG2_INITIAL_STATE.U_f + FIG2_INITIAL_STATE.I_f
        assert traj.final.U_f + traj.final.I_f > seed

    def test_controlled_epidemic_declines(self):
        # the reference controls push R_e below 1: infections decay
        traj = simulate(ControlVector(0.1, 0.07, 0.05, 0.03, 0.1))
        infected = traj.column("U_f") + traj.column("I_f") + traj.column("I_m")
        assert infected[-1] < 1e-3
        assert infected[-1] < infected[0] / 50.0

    def test_constant_vector_equals_constant_schedule(self):
        cfg = SimulationConfig(t_final=5.0, dt=0.1)
        c = ControlVector(0.1, 0.07, 0.05, 0.03, 0.1)
        a = simulate(c, config=cfg)
        b = simulate(ControlSchedule.constant(c, cfg.grid), config=cfg)
        assert np.array_equal(a.states, b.states)

    def test_deterministic(self):
        cfg = SimulationConfig(t_final=5.0, dt=0.1)
        a = simulate(ControlVector(u1=0.1), config=cfg)
        b = simulate(ControlVector(u1=0.1), config=cfg)
        assert np.array_equal(a.states, b.states)

    def test_states_stay_on_simplices(self):
        traj = simulate(ControlVector(w1=0.8, w2=0.8), config=SimulationConfig())
        assert np.abs(traj.states[:, :4].sum(axis=1) - 1.0).max() < 1e-9
        assert np.abs(traj.states[:, 4:].sum(axis=1) - 1.0).max() < 1e-9
        assert traj.states.min() > -1e-12

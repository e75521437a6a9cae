"""Optimal control: Hamiltonian, adjoint system, characterization, sweep."""

import logging
import math

import numpy as np
import pytest

from hpvcea.cea import CostWeights
from hpvcea.control import (
    ADJOINT_NAMES,
    AdjointState,
    AdjointTrajectory,
    FbsmConfig,
    ObjectiveDivergenceError,
    OptimalSolution,
    adjoint_rhs,
    adjoint_rhs_fn,
    characterize_controls,
    fbsm_solve,
    hamiltonian,
    objective_J,
)
from hpvcea.integrate import SimulationConfig, simulate
from hpvcea.model import (
    STRATEGIES,
    ControlVector,
    ModelParameters,
    rhs_control,
)

PARAMS = ModelParameters()
WEIGHTS = CostWeights()

# small horizon the sweep solves in well under a second
FAST_SIM = SimulationConfig(t_final=10.0, dt=0.1)
FAST_FBSM = FbsmConfig(relaxation=0.1, tolerance=1e-3)


def random_point(rng):
    f = rng.dirichlet(np.ones(4))
    m = rng.dirichlet(np.ones(3))
    y = np.array([f[1], f[2], f[3], m[1], m[2]])
    psi = rng.normal(scale=5.0, size=5)
    c = rng.uniform(0.0, 1.0, size=5)
    return y, psi, c


class TestFbsmConfig:
    def test_defaults(self):
        cfg = FbsmConfig()
        assert cfg.max_iterations == 2000
        assert cfg.tolerance == 1e-3
        assert cfg.relaxation == 0.5
        assert cfg.caps.tolist() == [1.0] * 5

    def test_validation(self):
        with pytest.raises(ValueError):
            FbsmConfig(max_iterations=0)
        with pytest.raises(ValueError):
            FbsmConfig(tolerance=0.0)
        with pytest.raises(ValueError):
            FbsmConfig(relaxation=0.0)
        with pytest.raises(ValueError):
            FbsmConfig(relaxation=1.5)
        with pytest.raises(ValueError):
            FbsmConfig(u1_max=1.2)
        with pytest.raises(ValueError):
            FbsmConfig(adjoint_divergence_limit=-1.0)

    def test_caps_order(self):
        cfg = FbsmConfig(w1_max=0.1, w2_max=0.2, u1_max=0.3, u2_max=0.4, alpha_max=0.5)
        assert cfg.caps.tolist() == [0.1, 0.2, 0.3, 0.4, 0.5]


class TestAdjointState:
    def test_round_trip(self):
        a = AdjointState(1.0, -2.0, 3.0, -4.0, 5.0)
        assert AdjointState.from_array(a.as_array()) == a
        assert AdjointState.zero().as_tuple() == (0.0,) * 5

    def test_trajectory_accessors(self):
        grid = np.linspace(0.0, 1.0, 5)
        values = np.arange(25.0).reshape(5, 5)
        traj = AdjointTrajectory(grid, values)
        assert len(traj) == 5
        assert traj.terminal == AdjointState(20.0, 21.0, 22.0, 23.0, 24.0)
        assert traj.column("psi3").tolist() == [2.0, 7.0, 12.0, 17.0, 22.0]
        with pytest.raises(ValueError):
            AdjointTrajectory(grid, np.zeros((5, 4)))


class TestObjective:
    def test_constant_case_exact(self):
        # flat state and controls: J = T * (b1 U + b2 I + effort/2)
        traj = simulate(None, config=SimulationConfig(t_final=10.0, dt=0.1))
        flat = np.tile(traj.states[0], (len(traj), 1))
        from hpvcea.model import Trajectory

        c = ControlVector(w1=0.4, u1=0.2)
        frozen = Trajectory(traj.grid, flat)
        expected = 10.0 * (
            15.0 * 0.03 + 10.0 * 0.02
            + 0.5 * (1.0 * 0.4 ** 2 + 5.0 * 0.2 ** 2)
        )
        assert objective_J(frozen, c) == pytest.approx(expected, abs=1e-9)

    def test_zero_below_burden_free(self):
        traj = simulate(None, config=FAST_SIM)
        assert objective_J(traj, None, CostWeights(b1=0.0, b2=0.0)) == 0.0


class TestHamiltonian:
    def test_zero_adjoint_reduces_to_running_cost(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            y, _, c = random_point(rng)
            h = hamiltonian(y, AdjointState.zero(), c)
            w1, w2, u1, u2, alpha = c
            expected = (
                15.0 * y[0] + 10.0 * y[1]
                + 0.5 * (w1 ** 2 + w2 ** 2 + 5.0 * (u1 ** 2 + u2 ** 2) + alpha ** 2)
            )
            assert h == pytest.approx(expected, rel=1e-12)

    def test_adjoint_term_is_linear_in_dynamics(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            y, psi, c = random_point(rng)
            h = hamiltonian(y, psi, c)
            h0 = hamiltonian(y, np.zeros(5), c)
            drift = rhs_control(y, ControlVector.from_array(c), PARAMS)
            assert h - h0 == pytest.approx(float(psi @ drift), rel=1e-9, abs=1e-12)

    def test_batched_controls(self):
        rng = np.random.default_rng(12)
        y, psi, _ = random_point(rng)
        batch = rng.uniform(0.0, 1.0, size=(7, 5))
        values = hamiltonian(y, psi, batch)
        assert values.shape == (7,)
        for row, v in zip(batch, values):
            assert hamiltonian(y, psi, row) == pytest.approx(float(v), rel=1e-12)

    def test_control_gradient_matches_finite_difference(self):
        # dH/dw1 = a1 w1 + psi3 mu_f at any interior point
        rng = np.random.default_rng(21)
        y, psi, c = random_point(rng)
        c = np.clip(c, 0.1, 0.9)
        eps = 1e-6
        up, dn = c.copy(), c.copy()
        up[0] += eps
        dn[0] -= eps
        fd = (hamiltonian(y, psi, up) - hamiltonian(y, psi, dn)) / (2.0 * eps)
        analytic = WEIGHTS.a1 * c[0] + psi[2] * PARAMS.mu_f
        assert fd == pytest.approx(analytic, rel=1e-5)


class TestAdjointRhs:
    def test_zero_adjoint_gives_burden_gradient(self):
        # at psi = 0 only the running-cost gradient remains
        rng = np.random.default_rng(33)
        y, _, c = random_point(rng)
        d = adjoint_rhs(np.zeros(5), y, c)
        assert d.tolist() == [-15.0, -10.0, 0.0, 0.0, 0.0]

    def test_equals_minus_state_gradient_of_hamiltonian(self):
        # the costate equation is dpsi/dt = -dH/dx; check by central
        # differences in every state coordinate at random points
        rng = np.random.default_rng(55)
        eps = 1e-7
        for _ in range(100):
            y, psi, c = random_point(rng)
            y = np.clip(y, 0.05, 0.25)  # keep fd stencils inside the box
            d = adjoint_rhs(psi, y, c)
            for j in range(5):
                up, dn = y.copy(), y.copy()
                up[j] += eps
                dn[j] -= eps
                grad = (hamiltonian(up, psi, c) - hamiltonian(dn, psi, c)) / (2 * eps)
                assert d[j] == pytest.approx(-grad, rel=2e-5, abs=1e-6)

    def test_checked_wrapper_validates(self):
        with pytest.raises(ValueError):
            adjoint_rhs(np.zeros(4), np.zeros(5), ControlVector.zero())
        with pytest.raises(ValueError):
            adjoint_rhs(np.zeros(5), np.zeros(5), (0.0, 0.0))

    def test_fn_matches_checked(self):
        rng = np.random.default_rng(77)
        fn = adjoint_rhs_fn(PARAMS, WEIGHTS)
        y, psi, c = random_point(rng)
        direct = fn(psi.tolist(), y.tolist(), tuple(c))
        assert np.allclose(adjoint_rhs(psi, y, c), direct, rtol=0.0, atol=0.0)


class TestCharacterization:
    def test_zero_adjoint_gives_zero_controls(self):
        y = np.array([0.03, 0.02, 0.0, 0.05, 0.0])
        c = characterize_controls(y, AdjointState.zero())
        assert c == ControlVector.zero()

    def test_negative_psi3_pushes_vaccination_up(self):
        y = np.array([0.03, 0.02, 0.0, 0.05, 0.0])
        psi = np.array([0.0, 0.0, -WEIGHTS.a1 / PARAMS.mu_f, 0.0, 0.0])
        c = characterize_controls(y, psi)
        assert c.w1 == 1.0  # the unconstrained optimum hits the cap

    def test_caps_and_mask_respected(self):
        y = np.array([0.03, 0.02, 0.0, 0.05, 0.0])
        psi = np.array([5.0, -5.0, -100.0, 0.0, -100.0])
        caps = np.array([0.3, 0.6, 0.127, 1.0, 0.4])
        c = characterize_controls(y, psi, STRATEGIES["S4"], caps)
        assert c.w1 == 0.3 and c.u1 == 0.127
        assert c.w2 == c.u2 == c.alpha == 0.0

    def test_batched_matches_single(self):
        rng = np.random.default_rng(91)
        ys, psis = [], []
        for _ in range(6):
            y, psi, _ = random_point(rng)
            ys.append(y)
            psis.append(psi)
        batch = characterize_controls(np.array(ys), np.array(psis))
        for y, psi, row in zip(ys, psis, batch):
            single = characterize_controls(y, psi)
            assert single.as_array().tolist() == row.tolist()

    def test_minimizes_hamiltonian_over_grid(self):
        # the closed form must beat every control on a dense box grid
        rng = np.random.default_rng(123)
        axis = np.linspace(0.0, 1.0, 11)
        grid = np.stack(np.meshgrid(*([axis] * 5), indexing="ij"), axis=-1)
        grid = grid.reshape(-1, 5)
        for _ in range(5):
            y, psi, _ = random_point(rng)
            best = characterize_controls(y, psi)
            h_best = hamiltonian(y, psi, best.as_array())
            h_grid = hamiltonian(y, psi, grid)
            assert h_best <= h_grid.min() + 1e-12

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            characterize_controls(np.zeros(5), np.zeros((2, 5)))


class TestSweep:
    def test_burden_free_problem_is_trivial(self):
        # with b1 = b2 = 0 doing nothing is optimal: one update settles it
        sol = fbsm_solve(
            "S1",
            weights=CostWeights(b1=0.0, b2=0.0),
            sim_config=FAST_SIM,
            fbsm_config=FAST_FBSM,
        )
        assert sol.converged
        assert sol.iterations <= 2
        assert sol.j_value == 0.0
        assert not sol.schedule.values.any()

    def test_short_horizon_fixed_point(self):
        sol = fbsm_solve("S4", sim_config=FAST_SIM, fbsm_config=FAST_FBSM)
        assert sol.converged
        assert sol.final_residual < FAST_FBSM.tolerance
        # transversality: the costate vanishes at the horizon exactly
        assert sol.adjoint.terminal.as_tuple() == (0.0,) * 5
        # controls satisfy their own characterization at the fixed point
        reduced = sol.state.states[:, [1, 2, 3, 5, 6]]
        proposal = characterize_controls(
            reduced, sol.adjoint.values, STRATEGIES["S4"], FAST_FBSM.caps
        )
        rel = np.abs(proposal - sol.schedule.values).max()
        assert rel < 5.0 * FAST_FBSM.tolerance
        # box and mask respected everywhere
        assert sol.schedule.values.min() >= 0.0
        assert sol.schedule.values.max() <= 1.0
        assert not sol.schedule.values[:, [1, 3, 4]].any()

    def test_objective_improves_on_no_action(self):
        sol = fbsm_solve("S4", sim_config=FAST_SIM, fbsm_config=FAST_FBSM)
        passive = simulate(None, config=FAST_SIM)
        assert sol.j_value < objective_J(passive, None)

    def test_accepts_mask_object_and_id(self):
        a = fbsm_solve("S2", sim_config=FAST_SIM, fbsm_config=FAST_FBSM)
        b = fbsm_solve(STRATEGIES["S2"], sim_config=FAST_SIM, fbsm_config=FAST_FBSM)
        assert np.array_equal(a.schedule.values, b.schedule.values)
        with pytest.raises(TypeError):
            fbsm_solve(3.14)

    def test_caps_bind(self):
        tight = FAST_FBSM.replace(w1_max=0.05, u1_max=0.02)
        sol = fbsm_solve("S4", sim_config=FAST_SIM, fbsm_config=tight)
        assert sol.schedule.values[:, 0].max() <= 0.05 + 1e-15
        assert sol.schedule.values[:, 2].max() <= 0.02 + 1e-15

    def test_unconverged_run_is_reported(self, caplog):
        cfg = FbsmConfig(max_iterations=3, relaxation=0.1)
        with caplog.at_level(logging.WARNING, logger="hpvcea.control"):
            sol = fbsm_solve("S4", sim_config=FAST_SIM, fbsm_config=cfg)
        assert not sol.converged
        assert sol.iterations == 3
        assert any("max_iterations" in r.message for r in caplog.records)

    def test_solution_summary(self):
        sol = fbsm_solve("S2", sim_config=FAST_SIM, fbsm_config=FAST_FBSM)
        summary = sol.as_summary()
        assert summary["strategy"] == "S2"
        assert summary["converged"] is True
        assert set(summary["peak_controls"]) == {"w1", "w2", "u1", "u2", "alpha"}
        assert summary["peak_controls"]["alpha"] == 0.0
        assert sol.trajectory is sol.state

    def test_tighter_tolerance_refines_solution(self):
        # the loose solve's J should already be close to the tight one's
        loose = fbsm_solve(
            "S2", sim_config=FAST_SIM, fbsm_config=FAST_FBSM.replace(tolerance=1e-2)
        )
        tight = fbsm_solve(
            "S2", sim_config=FAST_SIM, fbsm_config=FAST_FBSM.replace(tolerance=1e-5)
        )
        assert loose.converged and tight.converged
        assert tight.iterations > loose.iterations
        assert loose.j_value == pytest.approx(tight.j_value, rel=5e-3)

    def test_deterministic(self):
        a = fbsm_solve("S8", sim_config=FAST_SIM, fbsm_config=FAST_FBSM)
        b = fbsm_solve("S8", sim_config=FAST_SIM, fbsm_config=FAST_FBSM)
        assert np.array_equal(a.schedule.values, b.schedule.values)
        assert a.j_value == b.j_value


class TestJHistory:
    def test_history_tracks_iterations(self):
        sol = fbsm_solve("S4", sim_config=FAST_SIM, fbsm_config=FAST_FBSM)
        assert len(sol.j_history) == sol.iterations + 1
        assert sol.j_history[-1] == sol.j_value
        # after the early oscillations the objective must settle downward
        assert sol.j_history[-1] <= sol.j_history[0]

"""Two-sex SIVS transmission model with vaccination and screening.

Library surface: compartmental dynamics and strategy masks (model),
fixed-step integration (integrate), next-generation reproduction
numbers (reproduction), cost-effectiveness ratios and ranking (cea),
optimal control by forward-backward sweep (control), and scenario
configuration/batch execution (scenario). The ``hpvcea`` console
script exposes the same workflows.
"""

from .model import (
    CONTROL_NAMES,
    STATE_NAMES,
    STRATEGIES,
    ControlSchedule,
    ControlVector,
    ModelParameters,
    ParameterRangeWarning,
    State,
    StrategyMask,
    Trajectory,
)
from .integrate import (
    FIG2_INITIAL_STATE,
    DivergenceError,
    SimulationConfig,
    integrate_backward,
    integrate_forward,
    quadrature,
    simulate,
)
from .reproduction import (
    ReproductionBreakdown,
    basic_R,
    classify_dfe,
    compute_dfe,
    effective_R,
    next_generation_matrix,
)
from .cea import (
    CostWeights,
    EliminationStep,
    OutcomeRecord,
    RankingReport,
    UndefinedRatioError,
    acer,
    cost,
    effectiveness,
    icer,
    rank,
)
from .control import (
    AdjointState,
    AdjointTrajectory,
    FbsmConfig,
    ObjectiveDivergenceError,
    OptimalSolution,
    adjoint_rhs,
    characterize_controls,
    fbsm_solve,
    hamiltonian,
    objective_J,
)
from .scenario import (
    CalibrationError,
    CalibrationResult,
    ScenarioConfig,
    ScenarioResult,
    StrategySpec,
    bundled_config_path,
    calibrate_rate,
    load_config,
    run_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "CONTROL_NAMES",
    "STATE_NAMES",
    "STRATEGIES",
    "FIG2_INITIAL_STATE",
    "AdjointState",
    "AdjointTrajectory",
    "CalibrationError",
    "CalibrationResult",
    "ControlSchedule",
    "ControlVector",
    "CostWeights",
    "DivergenceError",
    "EliminationStep",
    "FbsmConfig",
    "ModelParameters",
    "ObjectiveDivergenceError",
    "OptimalSolution",
    "OutcomeRecord",
    "ParameterRangeWarning",
    "RankingReport",
    "ReproductionBreakdown",
    "ScenarioConfig",
    "ScenarioResult",
    "SimulationConfig",
    "State",
    "StrategyMask",
    "StrategySpec",
    "Trajectory",
    "UndefinedRatioError",
    "acer",
    "adjoint_rhs",
    "basic_R",
    "bundled_config_path",
    "calibrate_rate",
    "characterize_controls",
    "classify_dfe",
    "compute_dfe",
    "cost",
    "effective_R",
    "effectiveness",
    "fbsm_solve",
    "hamiltonian",
    "icer",
    "integrate_backward",
    "integrate_forward",
    "load_config",
    "next_generation_matrix",
    "objective_J",
    "quadrature",
    "rank",
    "run_scenario",
    "simulate",
]

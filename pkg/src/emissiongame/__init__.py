"""Closed-form solver for n-player linear-state emission games.

Computes open-loop Nash and cooperative emission strategies in closed form,
values coalitions against Nash-playing outsiders, allocates the cooperative
surplus by the Shapley value, and cross-checks everything with an independent
discretized optimal-control oracle.
"""

from .coalitions import (
    Allocation,
    CharacteristicFunction,
    Coalition,
    GainReport,
    all_coalitions,
    characteristic_function,
    coalition,
    cooperation_gains,
    shapley_value,
)
from .model import (
    ConfigError,
    GameInputError,
    GameSpec,
    PlayerParams,
    RawCompanyData,
    RegimeInfo,
    RegimeReport,
    classify_regimes,
    derive_coefficients,
    player_regime,
    split_joint_profit,
)
from .oracle import (
    GridControl,
    OracleConvergenceError,
    OracleReport,
    PontryaginCheck,
    best_response,
    iterated_best_response,
    joint_optimum,
    pontryagin_residual,
    sample_profile,
    simulate,
)
from .solver import (
    AffinePayoff,
    ControlSegment,
    PiecewiseControl,
    StockTrajectory,
    TrajectoryPiece,
    cooperative_controls,
    nash_controls,
    player_payoff,
    stock_gap_closed_form,
    stock_trajectory,
    total_emission_gap,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # model
    "GameInputError",
    "ConfigError",
    "RawCompanyData",
    "PlayerParams",
    "GameSpec",
    "RegimeInfo",
    "RegimeReport",
    "derive_coefficients",
    "split_joint_profit",
    "classify_regimes",
    "player_regime",
    # solver
    "ControlSegment",
    "PiecewiseControl",
    "TrajectoryPiece",
    "StockTrajectory",
    "AffinePayoff",
    "nash_controls",
    "cooperative_controls",
    "stock_trajectory",
    "player_payoff",
    "total_emission_gap",
    "stock_gap_closed_form",
    # coalitions
    "Coalition",
    "coalition",
    "all_coalitions",
    "CharacteristicFunction",
    "Allocation",
    "GainReport",
    "characteristic_function",
    "shapley_value",
    "cooperation_gains",
    # oracle
    "GridControl",
    "OracleReport",
    "PontryaginCheck",
    "OracleConvergenceError",
    "simulate",
    "sample_profile",
    "best_response",
    "iterated_best_response",
    "joint_optimum",
    "pontryagin_residual",
]

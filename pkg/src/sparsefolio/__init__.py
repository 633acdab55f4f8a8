"""Exact l1-penalized least-squares paths and sparse portfolio construction."""

from .errors import (
    CardinalityUnreachable,
    CurrentPortfolioInvalid,
    DegeneratePanel,
    EmptyBin,
    EmptyFile,
    EpsilonPhaseStall,
    InfeasibleConstraints,
    InputError,
    LengthMismatch,
    MalformedRow,
    NoFeasiblePattern,
    NotConverged,
    NotNonnegativeStart,
    SingularActiveSystem,
    SolverError,
    SparsefolioError,
    TauBelowStop,
    WindowOutOfRange,
    WrongColumnCount,
    ZeroVolatility,
)
from .path_unconstrained import (
    Event,
    PathBreakpoint,
    PenalizedProblem,
    SolutionPath,
    eval_at,
    initial_tau,
    solve_path,
)
from .path_constrained import (
    AffineConstraints,
    ConstrainedBreakpoint,
    FirstOrderState,
    find_constrained_start,
    multipliers_at,
    solve_constrained_path,
)
from .market_data import (
    MomentEstimates,
    ReturnPanel,
    add_months,
    estimate_moments,
    month_index,
    panel_from_csv,
    panel_to_csv,
    parse_ff_file,
    window,
)
from .portfolio import (
    HedgingScenario,
    MarkowitzSpec,
    Policy,
    PortfolioSelection,
    build_adjustment_problem,
    build_hedging_problem,
    build_markowitz_problem,
    build_tracking_problem,
    select_binned,
    select_exact_k,
    select_no_short,
    solve_portfolio_path,
)
from .backtest import (
    BacktestConfig,
    BacktestReport,
    MonthlySeries,
    PerformanceStats,
    compute_stats,
    default_evaluation_periods,
    run_exercise,
    run_k_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "SparsefolioError",
    "InputError",
    "SolverError",
    "SingularActiveSystem",
    "TauBelowStop",
    "InfeasibleConstraints",
    "EpsilonPhaseStall",
    "NotNonnegativeStart",
    "CardinalityUnreachable",
    "EmptyBin",
    "ZeroVolatility",
    "NoFeasiblePattern",
    "NotConverged",
    "DegeneratePanel",
    "LengthMismatch",
    "CurrentPortfolioInvalid",
    "MalformedRow",
    "WrongColumnCount",
    "EmptyFile",
    "WindowOutOfRange",
    # unconstrained path
    "PenalizedProblem",
    "PathBreakpoint",
    "SolutionPath",
    "Event",
    "initial_tau",
    "solve_path",
    "eval_at",
    # constrained path
    "AffineConstraints",
    "ConstrainedBreakpoint",
    "FirstOrderState",
    "find_constrained_start",
    "solve_constrained_path",
    "multipliers_at",
    # market data
    "ReturnPanel",
    "MomentEstimates",
    "parse_ff_file",
    "window",
    "month_index",
    "add_months",
    "estimate_moments",
    "panel_to_csv",
    "panel_from_csv",
    # portfolio engine
    "Policy",
    "MarkowitzSpec",
    "PortfolioSelection",
    "HedgingScenario",
    "build_markowitz_problem",
    "solve_portfolio_path",
    "select_no_short",
    "select_exact_k",
    "select_binned",
    "build_tracking_problem",
    "build_hedging_problem",
    "build_adjustment_problem",
    # backtest
    "BacktestConfig",
    "MonthlySeries",
    "PerformanceStats",
    "BacktestReport",
    "compute_stats",
    "default_evaluation_periods",
    "run_exercise",
    "run_k_sweep",
]

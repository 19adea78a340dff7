"""Cooperative EV charging stations: shared-battery dispatch, peer trading,
and multi-agent reinforcement learning over hourly scenarios."""

from .core import (
    ConstraintViolation,
    EssParams,
    InfeasibleIntervalError,
    PriceOrderingError,
    PriceQuote,
    ProfitBreakdown,
    StationAction,
    StationState,
    StepOutcome,
    TradeOutcome,
    clear_trades,
    curtail_renewable,
    ess_bounds,
    profit,
    soc,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "ConstraintViolation", "EssParams", "InfeasibleIntervalError",
    "PriceOrderingError", "PriceQuote", "ProfitBreakdown", "StationAction",
    "StationState", "StepOutcome", "TradeOutcome", "clear_trades",
    "curtail_renewable", "ess_bounds", "profit", "soc", "step",
    "__version__",
]

"""Feature selection by expected marginal effects under a matched coalition prior."""

from mdselect.game_core import (
    CapacityError,
    FeatureSet,
    GameOracle,
    MatchedPrior,
    exact_lambda,
    exact_shapley,
    expected_payoff,
    prior_mass,
)
from mdselect.linmodel import Dataset, PayoffKind, PayoffSpec, ols_fit, payoff, payoff_game
from mdselect.mc_valuation import OrderingSampleConfig, ValuationEstimate, decide, estimate
from mdselect.selector import SelectionReport, sequential_select

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "FeatureSet",
    "GameOracle",
    "MatchedPrior",
    "exact_lambda",
    "exact_shapley",
    "expected_payoff",
    "prior_mass",
    "Dataset",
    "PayoffKind",
    "PayoffSpec",
    "ols_fit",
    "payoff",
    "payoff_game",
    "OrderingSampleConfig",
    "ValuationEstimate",
    "decide",
    "estimate",
    "SelectionReport",
    "sequential_select",
]

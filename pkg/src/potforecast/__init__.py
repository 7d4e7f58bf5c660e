"""Potential-based forecasters for prediction with expert advice."""
from .core import (
    LossFunction,
    absolute_loss,
    combine_advice,
    cumulative_regret,
    evaluate_loss,
    regret_increment,
    squared_loss,
)
from .forecaster import ForecasterState, RoundRecord, observe, predict, run_forecast
from .game import GameConfig, GameTranscript, run_game, sweep
from .minimax import DiscreteGameSpec, bound_audit, minimax_value
from .potentials import (
    ExponentialPotential,
    certify_supersolution,
    default_eta,
    potential_gradient,
    potential_value,
    weights_from_potential,
)

__version__ = "0.1.0"

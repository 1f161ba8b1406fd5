from .gradcheck import GradCheckReport, gradient_check
from .layers import mse_loss
from .network import (
    Network,
    build_dueling_network,
    build_expert_network,
    build_q_network,
    load_network,
)
from .optim import Adam, NonFiniteGradientError

__all__ = [
    "Adam",
    "GradCheckReport",
    "Network",
    "NonFiniteGradientError",
    "build_dueling_network",
    "build_expert_network",
    "build_q_network",
    "gradient_check",
    "load_network",
    "mse_loss",
]

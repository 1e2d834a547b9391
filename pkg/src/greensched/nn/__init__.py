from . import autodiff
from .autodiff import Tensor, stop_gradient
from .gradcheck import composite_check, full_report, layer_checks, negative_control
from .networks import AgentNets, NetworkConfig, featurize, masked_probs, np_softmax
from .optim import Adam

__all__ = [
    "Adam",
    "AgentNets",
    "NetworkConfig",
    "Tensor",
    "autodiff",
    "composite_check",
    "featurize",
    "full_report",
    "layer_checks",
    "masked_probs",
    "negative_control",
    "np_softmax",
    "stop_gradient",
]

"""Neural controller: autodiff tape, networks, and BPTT training."""
from .autodiff import Node, Tape
from .backend import epoch_pass, fastpath_available, fastpath_enabled
from .graph import build_loss, numpy_epoch
from .network import (
    Layer,
    Network,
    celu_value,
    empirical_architecture,
    forward_batch,
    forward_policy,
    init_weights,
    load,
    make_network,
    orders_from_outputs,
    save,
    synthetic_architecture,
)
from .training import (
    OptimizerState,
    TrainingConfig,
    TrainResult,
    rmsprop_step,
    train,
    train_empirical,
)

celu = celu_value

__all__ = [
    "Node", "Tape", "epoch_pass", "fastpath_available", "fastpath_enabled",
    "build_loss", "numpy_epoch", "Layer", "Network", "celu", "celu_value",
    "empirical_architecture", "forward_batch", "forward_policy", "init_weights",
    "load", "make_network", "orders_from_outputs", "save", "synthetic_architecture",
    "OptimizerState", "TrainingConfig", "TrainResult", "rmsprop_step", "train",
    "train_empirical",
]

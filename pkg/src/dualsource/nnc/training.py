"""Controller training: RMSprop over full-horizon BPTT gradients.

Each epoch simulates M trajectories for T periods through the stochastic
dynamics, differentiates the discounted mean period cost through the whole
recurrence (no truncation, no gradient clipping), and applies RMSprop.
The best parameters seen are tracked and returned.
"""
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..demand import Rng, TruncatedNormalProcess, sample, sample_path
from . import backend
from .network import Network


@dataclass
class TrainingConfig:
    T: int
    M: int
    gamma: float = 1.0
    eta: float = 3e-3
    eta_init_inv: float = 1e-1
    alpha_rms: float = 0.99
    eps_rms: float = 1e-8
    max_epochs: int = 5000
    seed: int = 0
    eta_drop_epoch: int = None
    eta_drop_factor: float = 10.0

    def __post_init__(self):
        if self.M < 1 or self.T < 1:
            raise ValueError("require M >= 1 and T >= 1")
        if not self.eta > 0:
            raise ValueError("require eta > 0")
        if not 0 < self.gamma <= 1:
            raise ValueError("require 0 < gamma <= 1")


@dataclass
class OptimizerState:
    """Per-parameter moving average of the squared gradient."""

    v: object = 0.0


def rmsprop_step(p, g, st, eta, alpha_rms=0.99, eps_rms=1e-8):
    """RMSprop update; the freshly updated average divides the step."""
    st.v = alpha_rms * st.v + (1.0 - alpha_rms) * (g * g)
    return p - eta * g / (np.sqrt(st.v) + eps_rms)


class TrainResult(NamedTuple):
    best_loss: float
    best_net: Network
    history: list


def _fresh_optimizer(net):
    layer_states = [
        (OptimizerState(np.zeros_like(l.W)), OptimizerState(np.zeros_like(l.e)))
        for l in net.layers
    ]
    return layer_states, OptimizerState(0.0)


def _run_epochs(net, params, cfg, epochs, demand_fn, process, eta_fn):
    """Shared epoch loop; mutates `net` in place and tracks the best copy."""
    layer_states, inv_state = _fresh_optimizer(net)
    best_loss = math.inf
    best_net = net.copy()
    history = []
    for epoch in range(epochs):
        demands = demand_fn(epoch)
        loss, layer_grads, init_grad = backend.epoch_pass(
            net, demands, params, cfg.gamma, process=process
        )
        if not np.isfinite(loss):
            raise RuntimeError(
                f"non-finite loss {loss!r} at epoch {epoch}; "
                "check learning rates and input scaling"
            )
        history.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_net = net.copy()
        eta = eta_fn(epoch, history)
        for lay, (gW, ge), (stW, ste) in zip(net.layers, layer_grads, layer_states):
            lay.W[...] = rmsprop_step(lay.W, gW, stW, eta, cfg.alpha_rms, cfg.eps_rms)
            lay.e[...] = rmsprop_step(lay.e, ge, ste, eta, cfg.alpha_rms, cfg.eps_rms)
        net.init_inventory = float(
            rmsprop_step(
                net.init_inventory, init_grad, inv_state,
                cfg.eta_init_inv, cfg.alpha_rms, cfg.eps_rms,
            )
        )
    return best_loss, best_net, history


def _two_stage_eta(cfg):
    def eta_fn(epoch, history):
        if cfg.eta_drop_epoch is not None and epoch >= cfg.eta_drop_epoch:
            return cfg.eta / cfg.eta_drop_factor
        return cfg.eta

    return eta_fn


def train(params, model, net, cfg):
    """Train a controller on freshly sampled demand every epoch.

    Returns TrainResult(best_loss, best_net, history). Time-varying demand
    processes feed per-period moments to reduced-input networks and must
    cover cfg.T periods.
    """
    net = net.copy()
    rng = Rng(cfg.seed)
    streams = [rng.substream(k) for k in range(cfg.M)]
    process = model if isinstance(model, TruncatedNormalProcess) else None
    if process is not None and cfg.T > process.horizon:
        raise ValueError("training horizon exceeds demand process length")

    if process is not None:
        demand_fn = lambda epoch: np.stack(
            [sample_path(model, streams[k], cfg.T) for k in range(cfg.M)]
        )
    else:
        demand_fn = lambda epoch: np.stack(
            [sample(model, 0, streams[k], size=cfg.T) for k in range(cfg.M)]
        )
    best_loss, best_net, history = _run_epochs(
        net, params, cfg, cfg.max_epochs, demand_fn, process, _two_stage_eta(cfg)
    )
    return TrainResult(best_loss, best_net, history)


def train_empirical(process, params, net, cfg, phase1_epochs=None, phase2_epochs=None,
                    eta_phase2=2e-4, loss_threshold=None):
    """Two-phase training for time-varying demand.

    Phase 1 pretrains on ONE fixed realization of the process (the learning
    rate drops to eta_phase2 once the loss first falls below
    loss_threshold); phase 2 fine-tunes on 4 fixed realizations. Returns
    TrainResult for the fine-tuned controller.
    """
    if cfg.T != process.horizon:
        raise ValueError(
            f"training horizon {cfg.T} must match process length {process.horizon}"
        )
    net = net.copy()
    rng = Rng(cfg.seed)
    n1 = cfg.max_epochs if phase1_epochs is None else int(phase1_epochs)
    n2 = cfg.max_epochs if phase2_epochs is None else int(phase2_epochs)

    fixed1 = sample_path(process, rng.substream(0), cfg.T)[None, :]
    dropped = [False]

    def phase1_eta(epoch, history):
        if loss_threshold is not None and history and history[-1] < loss_threshold:
            dropped[0] = True
        return eta_phase2 if dropped[0] else cfg.eta

    _, net1, hist1 = _run_epochs(
        net, params, cfg, n1, lambda epoch: fixed1, process, phase1_eta
    )

    fixed4 = np.stack([sample_path(process, rng.substream(k), cfg.T) for k in range(1, 5)])
    best_loss, best_net, hist2 = _run_epochs(
        net1.copy(), params, cfg, n2, lambda epoch: fixed4, process,
        lambda epoch, history: eta_phase2,
    )
    return TrainResult(best_loss, best_net, hist1 + hist2)

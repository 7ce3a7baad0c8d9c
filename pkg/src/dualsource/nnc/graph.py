"""Builds the simulated-trajectory loss graph for one training epoch.

The whole horizon (M parallel trajectories, T periods) is recorded on one
tape: controller forward passes, integer order materialization, inventory
updates, and per-period costs, ending in a single scalar loss node. The
backward pass then differentiates through the full recurrence.
"""
import numpy as np

from ..dynamics import CostParams, SingleParams
from .autodiff import Tape


class ParamNodes:
    """Tape leaves for every trainable array of a network."""

    def __init__(self, tape, net):
        self.layers = [(tape.param(l.W), tape.param(l.e)) for l in net.layers]
        self.init_inv = tape.param(np.asarray(float(net.init_inventory)))

    def grads(self):
        """Gradients aligned with ((W, e) per layer, init_inventory)."""
        out = []
        for wn, en in self.layers:
            gw = wn.grad if wn.grad is not None else np.zeros_like(wn.value)
            ge = en.grad if en.grad is not None else np.zeros_like(en.value)
            out.append((gw, ge))
        gi = self.init_inv.grad
        return out, float(gi) if gi is not None else 0.0


def _forward(tape, x, net, pnodes):
    h = x
    if net.input_scale != 1.0:
        h = tape.scale(h, 1.0 / net.input_scale)
    for lay, (wn, en) in zip(net.layers, pnodes.layers):
        h = tape.linear(h, wn, en)
        if lay.activation == "celu":
            h = tape.celu(h, net.alpha)
    if net.out_scale != 1.0:
        h = tape.scale(h, net.out_scale)
    return h


def _fixed_charge_node(tape, params, qr, qe, M):
    charge = np.zeros(M)
    if params.f_r:
        charge = charge + params.f_r * (qr.value > 0)
    if params.f_e:
        charge = charge + params.f_e * (qe.value > 0)
    return tape.const(charge)


def build_loss(tape, net, demands, params, gamma, surrogate=False, process=None):
    """Record one epoch; returns (loss_node, ParamNodes).

    demands: (M, T) array consumed as constants. With surrogate=True every
    integer materialization is replaced by its smooth positive-part
    surrogate (used by gradient checks). For time-varying nets, `process`
    supplies mu_t/sigma_t input features.
    """
    M, T = demands.shape
    pnodes = ParamNodes(tape, net)
    materialize = tape.pos if surrogate else tape.decouple
    I = materialize(tape.broadcast(pnodes.init_inv, M))
    zero = lambda: tape.const(np.zeros(M))
    period_means = []

    if isinstance(params, SingleParams):
        pipe = [zero() for _ in range(params.l)]
        for t in range(T):
            x = tape.stack([I] + pipe)
            y = _forward(tape, x, net, pnodes)
            q = materialize(tape.col(y, 0))
            arrive = pipe[0] if params.l >= 1 else q
            I1 = tape.sub(tape.add(I, arrive), tape.const(demands[:, t]))
            cost = tape.add(
                tape.scale(tape.pos(I1), params.h),
                tape.scale(tape.pos(tape.neg(I1)), params.b),
            )
            if params.c:
                cost = tape.add(cost, tape.scale(q, params.c))
            period_means.append(tape.mean(cost))
            if params.l >= 1:
                pipe = pipe[1:] + [q]
            I = I1
    elif isinstance(params, CostParams):
        if net.input_mode == "reduced_moments":
            if params.l_e != 0:
                raise ValueError("reduced-state inputs require l_e = 0")
            if process is None:
                raise ValueError("reduced_moments input mode needs a demand process")
        Qr = [zero() for _ in range(params.l_r)]
        Qe = [zero() for _ in range(params.l_e)]
        for t in range(T):
            if net.input_mode == "reduced_moments":
                cols = [tape.add(I, Qr[0])] + Qr[1:]
                cols.append(tape.const(np.full(M, float(process.mu[t]))))
                cols.append(tape.const(np.full(M, float(process.sigma[t]))))
            else:
                cols = [I] + Qr + Qe
            x = tape.stack(cols)
            y = _forward(tape, x, net, pnodes)
            qr = materialize(tape.col(y, 0))
            qe = materialize(tape.col(y, 1))
            arrive_e = Qe[0] if params.l_e >= 1 else qe
            I1 = tape.sub(
                tape.add(tape.add(I, Qr[0]), arrive_e), tape.const(demands[:, t])
            )
            cost = tape.add(
                tape.scale(tape.pos(I1), params.h),
                tape.scale(tape.pos(tape.neg(I1)), params.b),
            )
            if params.c_r:
                cost = tape.add(cost, tape.scale(qr, params.c_r))
            if params.c_e:
                cost = tape.add(cost, tape.scale(qe, params.c_e))
            if params.f_r or params.f_e:
                cost = tape.add(cost, _fixed_charge_node(tape, params, qr, qe, M))
            period_means.append(tape.mean(cost))
            Qr = Qr[1:] + [qr]
            if params.l_e >= 1:
                Qe = Qe[1:] + [qe]
            I = I1
    else:
        raise TypeError(f"unsupported params type {type(params).__name__}")

    weights = [gamma**j / T for j in range(T)]
    return tape.wsum(period_means, weights), pnodes


def numpy_epoch(net, demands, params, gamma, surrogate=False, process=None):
    """One full forward/backward epoch on the numpy tape.

    Returns (loss, layer_grads, init_grad).
    """
    tape = Tape()
    loss, pnodes = build_loss(tape, net, demands, params, gamma, surrogate, process)
    tape.backward(loss)
    layer_grads, init_grad = pnodes.grads()
    return float(loss.value), layer_grads, init_grad

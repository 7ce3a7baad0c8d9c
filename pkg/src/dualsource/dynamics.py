"""Dual-sourcing inventory dynamics: states, transitions, and period costs.

Events in each period: orders are placed, pipeline arrivals are received,
demand is revealed, then holding/backlog cost is charged on the resulting
net inventory. A compressed representation is available for the reduced
problem (immediate expedited delivery, zero regular unit cost).
"""
from dataclasses import dataclass


@dataclass(frozen=True)
class CostParams:
    h: float
    b: float
    c_r: float
    c_e: float
    f_r: float
    f_e: float
    l_r: int
    l_e: int

    def __post_init__(self):
        if not self.h > 0 or not self.b > 0:
            raise ValueError("require h > 0 and b > 0")
        if not self.c_e >= self.c_r >= 0:
            raise ValueError("require c_e >= c_r >= 0")
        if self.f_r < 0 or self.f_e < 0:
            raise ValueError("fixed order costs must be >= 0")
        if not 0 <= self.l_e < self.l_r:
            raise ValueError("require 0 <= l_e < l_r")

    @property
    def l(self):
        return self.l_r - self.l_e


@dataclass(frozen=True)
class InventoryState:
    """Net inventory plus order pipelines, oldest entries first."""

    I: float
    Q_r: tuple
    Q_e: tuple

    def __post_init__(self):
        if any(q < 0 for q in self.Q_r) or any(q < 0 for q in self.Q_e):
            raise ValueError("pipeline entries must be >= 0")


@dataclass(frozen=True)
class CompressedState:
    """Expedited inventory position plus the most recent regular orders."""

    I_e: float
    tail: tuple

    def __post_init__(self):
        if any(q < 0 for q in self.tail):
            raise ValueError("tail entries must be >= 0")


@dataclass(frozen=True)
class Action:
    q_r: int
    q_e: int

    def __post_init__(self):
        if self.q_r < 0 or self.q_e < 0:
            raise ValueError("order quantities must be >= 0")


def holding_backlog(x, params):
    """Piecewise-linear inventory cost h*[x]+ + b*[-x]+."""
    return params.h * max(x, 0.0) + params.b * max(-x, 0.0)


def step(state, action, demand, params):
    """Advance the full state by one period; returns (next_state, cost)."""
    if demand < 0:
        raise ValueError("demand must be >= 0")
    if len(state.Q_r) != params.l_r or len(state.Q_e) != params.l_e:
        raise ValueError("pipeline lengths must match lead times")
    arrive_r = state.Q_r[0]
    arrive_e = state.Q_e[0] if params.l_e >= 1 else action.q_e
    next_I = state.I + arrive_r + arrive_e - demand
    next_Q_r = state.Q_r[1:] + (action.q_r,)
    next_Q_e = state.Q_e[1:] + (action.q_e,) if params.l_e >= 1 else ()
    cost = (
        params.c_r * action.q_r
        + params.c_e * action.q_e
        + (params.f_r if action.q_r > 0 else 0.0)
        + (params.f_e if action.q_e > 0 else 0.0)
        + holding_backlog(next_I, params)
    )
    return InventoryState(next_I, next_Q_r, next_Q_e), cost


def compress(state):
    """Project a full state with immediate expedited delivery onto its sufficient statistics."""
    if len(state.Q_e) != 0:
        raise ValueError("compression requires an empty expedited pipeline (l_e = 0)")
    return CompressedState(I_e=state.I + state.Q_r[0], tail=state.Q_r[1:])


def compressed_step(state, action, demand, params):
    """Advance the compressed state by one period; returns (next_state, cost).

    Valid only for l_e = 0 and c_r = 0. The period cost charges holding and
    backlog on the expedited position net of demand; the oldest tail entry
    joins the position one period later.
    """
    if params.l_e != 0:
        raise ValueError("compressed dynamics require l_e = 0")
    if params.c_r != 0:
        raise ValueError("compressed dynamics require c_r = 0")
    if demand < 0:
        raise ValueError("demand must be >= 0")
    l = params.l
    if len(state.tail) != l - 1:
        raise ValueError("tail length must be l - 1")
    incoming = state.tail[0] if l >= 2 else action.q_r
    next_I_e = state.I_e + action.q_e + incoming - demand
    next_tail = state.tail[1:] + (action.q_r,) if l >= 2 else ()
    cost = (
        params.c_e * action.q_e
        + (params.f_r if action.q_r > 0 else 0.0)
        + (params.f_e if action.q_e > 0 else 0.0)
        + holding_backlog(state.I_e + action.q_e - demand, params)
    )
    return CompressedState(next_I_e, next_tail), cost


@dataclass(frozen=True)
class SingleParams:
    """Single-supplier system: one channel with lead time l >= 0."""

    h: float
    b: float
    c: float = 0.0
    l: int = 0

    def __post_init__(self):
        if not self.h > 0 or not self.b > 0:
            raise ValueError("require h > 0 and b > 0")
        if self.c < 0 or self.l < 0:
            raise ValueError("require c >= 0 and l >= 0")


def single_step(I, pipeline, q, demand, params):
    """One period of the single-supplier system; returns (I', pipeline', cost)."""
    if q < 0 or demand < 0:
        raise ValueError("order and demand must be >= 0")
    if len(pipeline) != params.l:
        raise ValueError("pipeline length must equal lead time")
    arrive = pipeline[0] if params.l >= 1 else q
    next_I = I + arrive - demand
    next_pipe = pipeline[1:] + (q,) if params.l >= 1 else ()
    cost = params.c * q + params.h * max(next_I, 0.0) + params.b * max(-next_I, 0.0)
    return next_I, next_pipe, cost

"""Vectorized batch simulation of inventory trajectories.

One lane per realization; a controller callback maps the pre-order state to
order quantities for every lane at once. Shared by the heuristic parameter
searches and the Monte-Carlo evaluation front end.
"""
import numpy as np


def batch_mean_costs(orders_fn, params, demands, I0=0.0):
    """Mean cost per period for each of R parallel trajectories.

    demands has shape (R, T). orders_fn(I, Qr, Qe, d_prev, t) is called once
    per period before arrivals and must return (q_r, q_e) arrays of shape
    (R,). Pipelines start empty; I0 may be a scalar or an (R,) array.
    """
    demands = np.asarray(demands, dtype=np.float64)
    R, T = demands.shape
    if T < 1:
        raise ValueError("need at least one period")
    I = np.full(R, I0, dtype=np.float64) if np.ndim(I0) == 0 else np.array(I0, dtype=np.float64)
    Qr = np.zeros((R, params.l_r))
    Qe = np.zeros((R, params.l_e))
    total = np.zeros(R)
    d_prev = np.zeros(R)
    for t in range(T):
        q_r, q_e = orders_fn(I, Qr, Qe, d_prev, t)
        arrive = Qr[:, 0] + (Qe[:, 0] if params.l_e >= 1 else q_e)
        d = demands[:, t]
        I = I + arrive - d
        total += (
            params.c_r * q_r
            + params.c_e * q_e
            + params.f_r * (q_r > 0)
            + params.f_e * (q_e > 0)
            + params.h * np.maximum(I, 0.0)
            + params.b * np.maximum(-I, 0.0)
        )
        Qr[:, :-1] = Qr[:, 1:]
        Qr[:, -1] = q_r
        if params.l_e >= 1:
            Qe[:, :-1] = Qe[:, 1:]
            Qe[:, -1] = q_e
        d_prev = d
    return total / T


def batch_trajectories(orders_fn, params, demands, I0=0.0):
    """Stepping loop of batch_mean_costs, recording states and orders.

    Returns (I_hist, Qr_hist, Qe_hist, qr_hist, qe_hist) where I_hist,
    qr_hist, qe_hist have shape (R, T) and the pipeline histories have
    shape (R, T, lead time). All states are pre-order, pre-arrival.
    """
    demands = np.asarray(demands, dtype=np.float64)
    R, T = demands.shape
    if T < 1:
        raise ValueError("need at least one period")
    I = np.full(R, I0, dtype=np.float64) if np.ndim(I0) == 0 else np.array(I0, dtype=np.float64)
    Qr = np.zeros((R, params.l_r))
    Qe = np.zeros((R, params.l_e))
    d_prev = np.zeros(R)
    I_hist = np.zeros((R, T))
    Qr_hist = np.zeros((R, T, params.l_r))
    Qe_hist = np.zeros((R, T, params.l_e))
    qr_hist = np.zeros((R, T))
    qe_hist = np.zeros((R, T))
    for t in range(T):
        I_hist[:, t] = I
        Qr_hist[:, t] = Qr
        Qe_hist[:, t] = Qe
        q_r, q_e = orders_fn(I, Qr, Qe, d_prev, t)
        qr_hist[:, t] = q_r
        qe_hist[:, t] = q_e
        arrive = Qr[:, 0] + (Qe[:, 0] if params.l_e >= 1 else q_e)
        I = I + arrive - demands[:, t]
        Qr[:, :-1] = Qr[:, 1:]
        Qr[:, -1] = q_r
        if params.l_e >= 1:
            Qe[:, :-1] = Qe[:, 1:]
            Qe[:, -1] = q_e
        d_prev = demands[:, t]
    return I_hist, Qr_hist, Qe_hist, qr_hist, qe_hist


def batch_mean_costs_single(orders_fn, params, demands, I0=0.0):
    """Single-supplier analog of batch_mean_costs; orders_fn returns one array."""
    demands = np.asarray(demands, dtype=np.float64)
    R, T = demands.shape
    if T < 1:
        raise ValueError("need at least one period")
    I = np.full(R, I0, dtype=np.float64) if np.ndim(I0) == 0 else np.array(I0, dtype=np.float64)
    pipe = np.zeros((R, params.l))
    total = np.zeros(R)
    d_prev = np.zeros(R)
    for t in range(T):
        q = orders_fn(I, pipe, d_prev, t)
        arrive = pipe[:, 0] if params.l >= 1 else q
        d = demands[:, t]
        I = I + arrive - d
        total += params.c * q + params.h * np.maximum(I, 0.0) + params.b * np.maximum(-I, 0.0)
        if params.l >= 1:
            pipe[:, :-1] = pipe[:, 1:]
            pipe[:, -1] = q
        d_prev = d
    return total / T

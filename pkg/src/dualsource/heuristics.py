"""Classical replenishment policies and their parameter searches.

Implements base stock, single index (SI), dual index (DI), capped dual index
(CDI), and tailored base-surge (TBS) rules, each as a pure function of the
inventory state, plus the optimization procedures that fit their parameters
to a demand model: newsvendor fractiles on sampled lead-time demand for SI
and DI, and a common-random-number grid search for CDI.
"""
import json
import math
from dataclasses import dataclass

import numpy as np

from ._sim import batch_mean_costs
from .demand import Rng, convolve_pmf, demand_max, pmf_vector, quantile, sample
from .dynamics import Action, InventoryState, SingleParams


@dataclass(frozen=True)
class BaseStockPolicy:
    z: int

    def __post_init__(self):
        if self.z < 0:
            raise ValueError("base stock level must be >= 0")


@dataclass(frozen=True)
class SingleIndexPolicy:
    z_r: int
    delta: int

    def __post_init__(self):
        if self.z_r < 0 or self.delta < 0:
            raise ValueError("require z_r >= 0 and delta >= 0")


@dataclass(frozen=True)
class DualIndexPolicy:
    z_e: int
    delta: int

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("require delta >= 0")


@dataclass(frozen=True)
class CdiPolicy:
    """Order-up-to levels and regular-order cap, constant or per-period."""

    S_r: object
    S_e: object
    cap: object

    def __post_init__(self):
        seq_lens = {len(v) for v in (self.S_r, self.S_e, self.cap) if _is_seq(v)}
        if len(seq_lens) > 1:
            raise ValueError("per-period parameter sequences must share one length")
        caps = self.cap if _is_seq(self.cap) else (self.cap,)
        if any(c < 0 for c in caps):
            raise ValueError("cap must be >= 0")

    @property
    def horizon(self):
        for v in (self.S_r, self.S_e, self.cap):
            if _is_seq(v):
                return len(v)
        return None


@dataclass(frozen=True)
class TbsPolicy:
    r: int
    z_e: int

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("constant regular order must be >= 0")


def _is_seq(v):
    return isinstance(v, (tuple, list, np.ndarray))


def _at(v, t):
    """Parameter value for period t: scalar passthrough or sequence lookup."""
    return v[t] if _is_seq(v) else v


def base_stock_order(state, policy):
    """Order-up-to rule on the inventory position I + sum of pipeline."""
    position = state.I + sum(state.Q_r) + sum(state.Q_e)
    return max(policy.z - position, 0)


def optimize_base_stock(params, model):
    """Exact newsvendor base stock for a single-supplier system.

    z* is the b/(b+h) fractile of demand over l+1 periods, computed from the
    exact convolution of the single-period pmf.
    """
    p = params.b / (params.b + params.h)
    return BaseStockPolicy(z=quantile(model, p, k=params.l + 1))


def base_stock_expected_cost(policy, params, model):
    """Exact long-run cost per period of a base stock policy.

    With the position held at z every period, net inventory after demand is
    z minus the (l+1)-period demand sum; orders replace demand on average.
    """
    offset, probs = pmf_vector(model)
    total_off, total = offset, probs
    for _ in range(params.l):
        total_off, total = convolve_pmf(total_off, total, offset, probs)
    xs = total_off + np.arange(len(total))
    slack = policy.z - xs
    hold = params.h * float(total @ np.maximum(slack, 0))
    short = params.b * float(total @ np.maximum(-slack, 0))
    return hold + short + params.c * model.mean(0)


def si_order(state, policy, last_demand):
    """Single index rule: q_e = [D_prev - delta]+, q_r = min(delta, D_prev)."""
    q_e = max(last_demand - policy.delta, 0)
    return Action(q_r=min(policy.delta, last_demand), q_e=q_e)


def di_order(state, policy, last_demand, params):
    """Dual index rule: expedite up to z_e, then restore the full position to z_r.

    The expedited position counts all stock arriving within the expedited
    lead time, including the regular order placed l periods ago. On the
    policy's own trajectory the regular order equals D_prev - q_e.
    """
    window = params.l_e + 1
    exp_pos = state.I + sum(state.Q_e) + sum(state.Q_r[:window])
    q_e = max(policy.z_e - exp_pos, 0)
    full_pos = state.I + sum(state.Q_r) + sum(state.Q_e)
    q_r = max(policy.z_e + policy.delta - full_pos - q_e, 0)
    return Action(q_r=q_r, q_e=q_e)


def cdi_order(state, policy, t):
    """Capped dual index rule (requires l_e = 0).

    q_e tops the current position I + Q_r[0] up to S_e; q_r tops the full
    position up to S_r, capped at cap.
    """
    if len(state.Q_e) != 0:
        raise ValueError("capped dual index requires an empty expedited pipeline")
    pos_now = state.I + state.Q_r[0]
    pos_full = state.I + sum(state.Q_r)
    q_e = max(_at(policy.S_e, t) - pos_now, 0)
    q_r = min(max(_at(policy.S_r, t) - pos_full, 0), _at(policy.cap, t))
    return Action(q_r=q_r, q_e=q_e)


def tbs_order(state, policy):
    """Tailored base-surge rule: constant regular order, expedite up to z_e."""
    pos_now = state.I + state.Q_r[0]
    return Action(q_r=policy.r, q_e=max(policy.z_e - pos_now, 0))


def si_controller(policy):
    """Batch controller for _sim.batch_mean_costs."""

    def orders(I, Qr, Qe, d_prev, t):
        q_e = np.maximum(d_prev - policy.delta, 0.0)
        return np.minimum(float(policy.delta), d_prev), q_e

    return orders


def di_controller(policy, params):
    window = params.l_e + 1
    z_r = policy.z_e + policy.delta

    def orders(I, Qr, Qe, d_prev, t):
        exp_pos = I + Qe.sum(axis=1) + Qr[:, :window].sum(axis=1)
        q_e = np.maximum(policy.z_e - exp_pos, 0.0)
        full_pos = I + Qr.sum(axis=1) + Qe.sum(axis=1)
        q_r = np.maximum(z_r - full_pos - q_e, 0.0)
        return q_r, q_e

    return orders


def cdi_controller(policy):
    def orders(I, Qr, Qe, d_prev, t):
        pos_now = I + Qr[:, 0]
        pos_full = I + Qr.sum(axis=1)
        q_e = np.maximum(_at(policy.S_e, t) - pos_now, 0.0)
        q_r = np.minimum(np.maximum(_at(policy.S_r, t) - pos_full, 0.0), _at(policy.cap, t))
        return q_r, q_e

    return orders


def tbs_controller(policy):
    def orders(I, Qr, Qe, d_prev, t):
        q_e = np.maximum(policy.z_e - (I + Qr[:, 0]), 0.0)
        return np.full(len(I), float(policy.r)), q_e

    return orders


def _crn_demands(model, n_reps, horizon, seed, first_stream=1):
    rng = Rng(seed)
    return np.stack(
        [sample(model, 0, rng.substream(first_stream + k), size=horizon) for k in range(n_reps)]
    )


def _empirical_fractile(samples, p):
    return int(np.quantile(samples, p, method="inverted_cdf"))


MIN_FRACTILE_SAMPLES = 10_000


def optimize_si(params, model, n_samples=100_000, n_reps=100, horizon=500, seed=0):
    """Scan delta in 0..D_max, fit z_r(delta) by newsvendor, keep the cheapest.

    For each delta the lead-time demand d1 = sum of the first l demands
    capped at delta plus the last l_e+1 demands is sampled n_samples times;
    z_r(delta) is its b/(b+h) empirical fractile. Candidates are ranked by
    simulated mean cost under common random numbers, starting from I = z_r.
    """
    if n_samples < MIN_FRACTILE_SAMPLES:
        raise ValueError(f"need at least {MIN_FRACTILE_SAMPLES} samples for a stable fractile")
    d_max = demand_max(model)
    l = params.l
    p = params.b / (params.b + params.h)
    rng = Rng(seed)
    draws = sample(model, 0, rng.substream(0), size=n_samples * (params.l_r + 1))
    draws = draws.reshape(n_samples, params.l_r + 1)
    demands = _crn_demands(model, n_reps, horizon, seed)
    best = None
    for delta in range(d_max + 1):
        d1 = np.minimum(draws[:, :l], delta).sum(axis=1) + draws[:, l:].sum(axis=1)
        policy = SingleIndexPolicy(z_r=_empirical_fractile(d1, p), delta=delta)
        cost = float(batch_mean_costs(si_controller(policy), params, demands, I0=policy.z_r).mean())
        if best is None or cost < best[0]:
            best = (cost, policy)
    return best[1]


def _overshoot_d2_samples(model, params, delta, n_samples, rng, warmup=200, lanes=256):
    """Sample d2 = (l_e+1)-period demand minus the lagged overshoot for one delta.

    The overshoot chain is autonomous in the gap delta: O + (last l regular
    orders) = delta holds along the trajectory, so target levels shift it
    without changing its law. Chains start at O = delta with zero pipelines.
    """
    l = params.l
    le = params.l_e
    steps = warmup + math.ceil(n_samples / lanes) + le
    d = sample(model, 0, rng, size=lanes * steps).reshape(lanes, steps)
    O = np.full(lanes, float(delta))
    pipe = np.zeros((lanes, l))
    o_hist = np.zeros((lanes, le + 1))
    collected = []
    for t in range(steps):
        o_hist[:, :-1] = o_hist[:, 1:]
        o_hist[:, -1] = O
        if t >= warmup + le:
            win = d[:, t - le : t + 1].sum(axis=1)
            collected.append(win - o_hist[:, 0])
        w = O + pipe[:, 0] - d[:, t]
        q_e = np.maximum(-w, 0.0)
        O = np.maximum(w, 0.0)
        pipe[:, :-1] = pipe[:, 1:]
        pipe[:, -1] = d[:, t] - q_e
    return np.concatenate(collected)[:n_samples]


def optimize_di(params, model, n_samples=100_000, n_reps=100, horizon=500, seed=0):
    """Scan delta, fit z_e(delta) on the simulated overshoot law, keep the cheapest.

    delta runs to (l+1)*D_max: beyond that the expedited channel is never
    used and larger gaps only shift z_e by the same amount.
    """
    if n_samples < MIN_FRACTILE_SAMPLES:
        raise ValueError(f"need at least {MIN_FRACTILE_SAMPLES} samples for a stable fractile")
    d_max = demand_max(model)
    p = params.b / (params.b + params.h)
    rng = Rng(seed)
    demands = _crn_demands(model, n_reps, horizon, seed)
    best = None
    for delta in range((params.l + 1) * d_max + 1):
        d2 = _overshoot_d2_samples(model, params, delta, n_samples, rng.substream(0))
        policy = DualIndexPolicy(z_e=_empirical_fractile(d2, p), delta=delta)
        controller = di_controller(policy, params)
        cost = float(
            batch_mean_costs(controller, params, demands, I0=policy.z_e + delta).mean()
        )
        if best is None or cost < best[0]:
            best = (cost, policy)
    return best[1]


def cdi_seed_levels(params, model):
    """Closed-form CDI levels from extreme cumulative demands over the gap."""
    d_min = int(model.values[0])
    d_max = demand_max(model)
    l = params.l
    level = (params.h * d_min + params.b * d_max) / (params.h + params.b)
    s_r = (params.h * (l + 1) * d_min + params.b * (l + 1) * d_max) / (params.h + params.b)
    return s_r, level, level


def optimize_cdi(params, model, horizon=500, n_reps=100, seed=0, window=None, chunk=128):
    """Grid search for (S_r, S_e, cap) around the closed-form seeds.

    Integer triples within seed +- max(5, D_max) per coordinate, evaluated by
    simulated mean cost per period under common random numbers from the
    all-zero start; exact ties keep the lexicographically smallest triple.
    """
    if params.l_e != 0:
        raise ValueError("capped dual index requires l_e = 0")
    s_r0, s_e0, cap0 = cdi_seed_levels(params, model)
    w = max(5, demand_max(model)) if window is None else int(window)
    s_r_vals = range(round(s_r0) - w, round(s_r0) + w + 1)
    s_e_vals = range(round(s_e0) - w, round(s_e0) + w + 1)
    cap_vals = range(max(0, round(cap0) - w), round(cap0) + w + 1)
    candidates = [(sr, se, c) for sr in s_r_vals for se in s_e_vals for c in cap_vals]
    if not candidates:
        raise ValueError("empty search grid")
    demands = _crn_demands(model, n_reps, horizon, seed)
    best = None
    for lo in range(0, len(candidates), chunk):
        group = candidates[lo : lo + chunk]
        tiled = np.tile(demands, (len(group), 1))
        arr = np.array(group, dtype=np.float64)
        lane = np.repeat(arr, n_reps, axis=0)

        def orders(I, Qr, Qe, d_prev, t):
            pos_now = I + Qr[:, 0]
            pos_full = I + Qr.sum(axis=1)
            q_e = np.maximum(lane[:, 1] - pos_now, 0.0)
            q_r = np.minimum(np.maximum(lane[:, 0] - pos_full, 0.0), lane[:, 2])
            return q_r, q_e

        means = batch_mean_costs(orders, params, tiled, I0=0.0)
        scores = means.reshape(len(group), n_reps).mean(axis=1)
        for cand, score in zip(group, scores):
            if best is None or score < best[0]:
                best = (float(score), cand)
    sr, se, cap = best[1]
    return CdiPolicy(S_r=sr, S_e=se, cap=cap)


def cdi_time_varying_params(process, params, variant):
    """Per-period CDI levels from 99% confidence bounds of the demand process.

    `current` extrapolates the period-t moments over the whole gap (S_r is l
    times the single-period level); `future` uses the known moments through
    t+l, summing per-period levels for S_r and taking the t+l level as cap.
    Moments past the horizon end are held at their final value.
    """
    if params.l_e != 0:
        raise ValueError("capped dual index requires l_e = 0")
    if variant not in ("current", "future"):
        raise ValueError("variant must be 'current' or 'future'")
    l = params.l
    n = process.horizon
    h, b = params.h, params.b
    lo = np.maximum(np.asarray(process.mu) - 2.58 * np.asarray(process.sigma), 0.0)
    hi = np.asarray(process.mu) + 2.58 * np.asarray(process.sigma)
    level = (h * lo + b * hi) / (h + b)
    if variant == "current":
        return CdiPolicy(S_r=tuple(l * level), S_e=tuple(level), cap=tuple(level))
    idx = np.minimum(np.arange(n)[:, None] + np.arange(l + 1)[None, :], n - 1)
    s_r = level[idx].sum(axis=1)
    cap = level[np.minimum(np.arange(n) + l, n - 1)]
    return CdiPolicy(S_r=tuple(s_r), S_e=tuple(level), cap=tuple(cap))


_POLICY_KINDS = {
    "base_stock": BaseStockPolicy,
    "si": SingleIndexPolicy,
    "di": DualIndexPolicy,
    "cdi": CdiPolicy,
    "tbs": TbsPolicy,
}


def policy_to_json(policy):
    """Serialize any heuristic policy to a tagged JSON string."""
    for kind, cls in _POLICY_KINDS.items():
        if isinstance(policy, cls):
            fields = {
                k: (list(v) if _is_seq(v) else v) for k, v in vars(policy).items()
            }
            return json.dumps({"kind": kind, **fields}, sort_keys=True)
    raise TypeError(f"not a heuristic policy: {type(policy).__name__}")


def policy_from_json(text):
    data = json.loads(text)
    kind = data.pop("kind", None)
    if kind not in _POLICY_KINDS:
        raise ValueError(f"unknown policy kind {kind!r}")
    fields = {k: (tuple(v) if isinstance(v, list) else v) for k, v in data.items()}
    return _POLICY_KINDS[kind](**fields)

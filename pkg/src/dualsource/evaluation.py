"""Monte-Carlo policy evaluation, RMSE against the optimal table, a paired
rank test, and steady-state policy projection.

Every policy kind (base stock, single index, dual index, capped dual index,
tailored base-surge, solved table, network controller) evaluates through one
front end with common random numbers: under a fixed seed, realization k sees
the same demand path no matter which policy is being measured.
"""
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from ._sim import batch_mean_costs, batch_mean_costs_single, batch_trajectories
from .demand import DiscreteUniform, Empirical, Rng, TruncatedNormalProcess, sample_path
from .dp import PolicyTable
from .dynamics import CostParams, SingleParams
from .heuristics import (
    BaseStockPolicy,
    CdiPolicy,
    DualIndexPolicy,
    SingleIndexPolicy,
    TbsPolicy,
    cdi_controller,
    di_controller,
    policy_to_json,
    si_controller,
    tbs_controller,
)
from .nnc.network import Network, forward_batch, orders_from_outputs

# uniform handle over every evaluable policy kind
PolicyHandle = (
    BaseStockPolicy,
    SingleIndexPolicy,
    DualIndexPolicy,
    CdiPolicy,
    TbsPolicy,
    PolicyTable,
    Network,
)

_KIND_NAMES = (
    (BaseStockPolicy, "base_stock"),
    (SingleIndexPolicy, "si"),
    (DualIndexPolicy, "di"),
    (CdiPolicy, "cdi"),
    (TbsPolicy, "tbs"),
    (PolicyTable, "table"),
    (Network, "network"),
)


def policy_kind(policy):
    """Tag string for any member of PolicyHandle."""
    for cls, name in _KIND_NAMES:
        if isinstance(policy, cls):
            return name
    raise TypeError(f"unsupported policy type {type(policy).__name__}")


@dataclass(frozen=True)
class EvalReport:
    """Per-realization average costs plus summary statistics for one policy."""

    costs: np.ndarray
    mean: float
    median: float
    se: float
    n_reps: int
    horizon: int
    seed: int
    instance: dict
    demand_sha256: str

    def __post_init__(self):
        if len(self.costs) != self.n_reps:
            raise ValueError("realization count does not match cost vector")
        if not np.isfinite(self.costs).all():
            raise ValueError("costs must be finite")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    def cdf_points(self):
        """Empirical CDF polyline (x, F): F steps from 0 to 1 over sorted costs."""
        xs = np.sort(self.costs)
        x = np.concatenate([xs[:1], xs])
        F = np.arange(xs.size + 1) / xs.size
        return x, F


def report_csv_rows(report):
    """(header, rows) with one row per realization; floats via repr."""
    header = ["realization", "mean_cost"]
    rows = [[str(k), repr(float(c))] for k, c in enumerate(report.costs)]
    return header, rows


def report_summary(report):
    """JSON-ready summary dict (deterministic for a fixed seed and policy)."""
    return {
        "mean": float(report.mean),
        "median": float(report.median),
        "se": float(report.se),
        "n_reps": int(report.n_reps),
        "horizon": int(report.horizon),
        "seed": int(report.seed),
        "instance": report.instance,
        "demand_sha256": report.demand_sha256,
    }


def _model_descriptor(model):
    if isinstance(model, DiscreteUniform):
        return {"kind": "uniform", "lo": int(model.lo), "hi": int(model.hi)}
    if isinstance(model, Empirical):
        return {"kind": "empirical", "pmf": [[float(v), float(p)] for v, p in model.pmf]}
    if isinstance(model, TruncatedNormalProcess):
        return {
            "kind": "truncated_normal_process",
            "mu": [float(m) for m in model.mu],
            "sigma": [float(s) for s in model.sigma],
            "trunc": [float(model.trunc_lo), float(model.trunc_hi)],
        }
    raise TypeError(f"unsupported demand model {type(model).__name__}")


def _policy_descriptor(policy):
    kind = policy_kind(policy)
    if kind == "table":
        sp = policy.space
        return {
            "kind": "table",
            "space": {"lo": sp.lo, "hi": sp.hi, "q_max": sp.q_max, "l": sp.l},
        }
    if kind == "network":
        return {
            "kind": "network",
            "dims": [policy.n_in] + [lay.W.shape[0] for lay in policy.layers],
            "input_mode": policy.input_mode,
            "init_inventory": float(policy.init_inventory),
        }
    return json.loads(policy_to_json(policy))


def _params_descriptor(params):
    if isinstance(params, SingleParams):
        return {"h": params.h, "b": params.b, "c": params.c, "l": params.l}
    return {
        "h": params.h,
        "b": params.b,
        "c_r": params.c_r,
        "c_e": params.c_e,
        "f_r": params.f_r,
        "f_e": params.f_e,
        "l_r": params.l_r,
        "l_e": params.l_e,
    }


def _demand_panel(model, n_reps, horizon, seed):
    """CRN demand matrix (n_reps, horizon): realization k uses substream k+1."""
    rng = Rng(seed)
    return np.stack([sample_path(model, rng.substream(1 + k), horizon) for k in range(n_reps)])


def table_controller(table):
    """Vectorized batch lookup of a solved policy table."""
    space = table.space
    powers = np.array(
        [(space.q_max + 1) ** (space.tail_len - 1 - j) for j in range(space.tail_len)],
        dtype=np.int64,
    )
    q_r = table.q_r.astype(np.float64)
    q_e = table.q_e.astype(np.float64)

    def orders(I, Qr, Qe, d_prev, t):
        # out-of-range inventories take the nearest modeled state's action
        ie = np.clip(np.rint(I + Qr[:, 0]).astype(np.int64), space.lo, space.hi)
        code = np.rint(Qr[:, 1:]).astype(np.int64) @ powers if space.tail_len else 0
        idx = (ie - space.lo) * space.tail_span + code
        return q_r[idx], q_e[idx]

    return orders


def network_controller(net, params, process=None):
    """Batch controller around a two-output network's forward pass."""
    if net.n_out != 2:
        raise ValueError("dual-sourcing evaluation needs a two-output network")
    if net.input_mode == "reduced_moments":
        if process is None:
            raise ValueError("reduced-state networks need a demand process for mu/sigma")
        if net.n_in != params.l_r + 2:
            raise ValueError(f"input dim {net.n_in} does not match instance ({params.l_r + 2})")
        mu = np.asarray(process.mu, dtype=np.float64)
        sigma = np.asarray(process.sigma, dtype=np.float64)

        def orders(I, Qr, Qe, d_prev, t):
            cols = [(I + Qr[:, 0])[:, None], Qr[:, 1:]]
            cols.append(np.full((len(I), 1), mu[t]))
            cols.append(np.full((len(I), 1), sigma[t]))
            q = orders_from_outputs(forward_batch(net, np.concatenate(cols, axis=1)))
            return q[:, 0], q[:, 1]

        return orders

    n_in = 1 + params.l_r + params.l_e
    if net.n_in != n_in:
        raise ValueError(f"input dim {net.n_in} does not match instance ({n_in})")

    def orders(I, Qr, Qe, d_prev, t):
        X = np.concatenate([I[:, None], Qr, Qe], axis=1)
        q = orders_from_outputs(forward_batch(net, X))
        return q[:, 0], q[:, 1]

    return orders


def _network_init(net):
    return float(np.floor(max(net.init_inventory, 0.0)))


def _dual_controller(policy, params, model, horizon):
    """(orders_fn, initial inventory) for a dual-sourcing policy."""
    kind = policy_kind(policy)
    if kind == "si":
        return si_controller(policy), float(policy.z_r)
    if kind == "di":
        return di_controller(policy, params), float(policy.z_e + policy.delta)
    if kind == "cdi":
        if policy.horizon is not None and horizon > policy.horizon:
            raise ValueError("policy horizon is shorter than the evaluation horizon")
        return cdi_controller(policy), 0.0
    if kind == "tbs":
        return tbs_controller(policy), 0.0
    if kind == "table":
        if params.l_e != 0:
            raise ValueError("policy tables are defined on instances with l_e = 0")
        if policy.space.l != params.l_r:
            raise ValueError(
                f"table lead time {policy.space.l} does not match instance ({params.l_r})"
            )
        return table_controller(policy), 0.0
    if kind == "network":
        process = model if isinstance(model, TruncatedNormalProcess) else None
        return network_controller(policy, params, process), _network_init(policy)
    raise TypeError("base stock policies evaluate on single-supplier instances")


def _single_controller(policy):
    kind = policy_kind(policy)
    if kind == "base_stock":

        def orders(I, pipe, d_prev, t):
            return np.maximum(policy.z - (I + pipe.sum(axis=1)), 0.0)

        return orders, 0.0
    if kind == "network":
        if policy.n_out != 1:
            raise ValueError("single-supplier evaluation needs a one-output network")
        net = policy

        def orders(I, pipe, d_prev, t):
            X = np.concatenate([I[:, None], pipe], axis=1)
            return orders_from_outputs(forward_batch(net, X))[:, 0]

        return orders, _network_init(net)
    raise TypeError(f"{kind} policies need a dual-sourcing instance")


def evaluate(policy, params, model, n_reps=500, horizon=1000, seed=0):
    """Simulate n_reps CRN realizations and report per-realization mean costs.

    Table and heuristic policies start from the all-zero state, except the
    single and dual index rules which start at their own base stock level;
    networks start at their trained initial inventory.
    """
    if n_reps < 1:
        raise ValueError("need at least one realization")
    demands = _demand_panel(model, n_reps, horizon, seed)
    if isinstance(params, SingleParams):
        orders_fn, I0 = _single_controller(policy)
        costs = batch_mean_costs_single(orders_fn, params, demands, I0=I0)
    else:
        orders_fn, I0 = _dual_controller(policy, params, model, horizon)
        costs = batch_mean_costs(orders_fn, params, demands, I0=I0)
    if not np.isfinite(costs).all():
        raise FloatingPointError("simulation produced non-finite costs")
    se = float(costs.std(ddof=1) / math.sqrt(n_reps)) if n_reps > 1 else 0.0
    instance = {
        "policy": _policy_descriptor(policy),
        "params": _params_descriptor(params),
        "model": _model_descriptor(model),
    }
    return EvalReport(
        costs=costs,
        mean=float(costs.mean()),
        median=float(np.median(costs)),
        se=se,
        n_reps=n_reps,
        horizon=horizon,
        seed=seed,
        instance=instance,
        demand_sha256=hashlib.sha256(demands.tobytes()).hexdigest(),
    )


def _compact_action(policy, state):
    """(q_r, q_e) of a stationary policy at a compressed state."""
    kind = policy_kind(policy)
    if kind == "table":
        sp = policy.space
        if not (sp.lo <= state.I_e <= sp.hi) or any(q > sp.q_max for q in state.tail):
            raise ValueError("state outside the candidate table's space")
        a = policy.action(state)
        return float(a.q_r), float(a.q_e)
    if kind == "cdi":
        if policy.horizon is not None:
            raise TypeError("time-varying policies have no stationary projection")
        q_e = max(policy.S_e - state.I_e, 0.0)
        q_r = min(max(policy.S_r - (state.I_e + sum(state.tail)), 0.0), policy.cap)
        return float(q_r), float(q_e)
    if kind == "tbs":
        return float(policy.r), float(max(policy.z_e - state.I_e, 0.0))
    raise TypeError(f"{kind} policies are not expressible on the compressed space")


def _simulate_states(policy, params, model, periods, burn_in, lanes, seed):
    """Post-burn-in flat trajectories: (I, Qr, Qe, q_r, q_e) arrays."""
    per_lane = -(-periods // lanes)
    demands = _demand_panel(model, lanes, burn_in + per_lane, seed)
    orders_fn, I0 = _dual_controller(policy, params, model, burn_in + per_lane)
    I_h, Qr_h, Qe_h, qr_h, qe_h = batch_trajectories(orders_fn, params, demands, I0=I0)
    sl = slice(burn_in, None)
    n = lanes * per_lane
    return (
        I_h[:, sl].ravel(),
        Qr_h[:, sl].reshape(n, params.l_r),
        Qe_h[:, sl].reshape(n, params.l_e),
        qr_h[:, sl].ravel(),
        qe_h[:, sl].ravel(),
    )


def _network_compact_averages(net, params, model, periods, burn_in, lanes, seed):
    """Frequency-weighted mean orders per visited compressed state."""
    I, Qr, _, qr, qe = _simulate_states(net, params, model, periods, burn_in, lanes, seed)
    ie = np.rint(I + Qr[:, 0]).astype(np.int64)
    tails = np.rint(Qr[:, 1:]).astype(np.int64)
    base = int(tails.max()) + 1 if tails.size else 1
    code = ie - ie.min()
    for j in range(tails.shape[1]):
        code = code * base + tails[:, j]
    uniq, inverse = np.unique(code, return_inverse=True)
    counts = np.bincount(inverse)
    sum_qr = np.bincount(inverse, weights=qr)
    sum_qe = np.bincount(inverse, weights=qe)
    # map back to (I_e, tail) keys via one representative row per group
    first = np.zeros(len(uniq), dtype=np.int64)
    first[inverse[::-1]] = np.arange(len(code))[::-1]
    out = {}
    for g, row in enumerate(first):
        key = (int(ie[row]), tuple(int(q) for q in tails[row]))
        out[key] = (sum_qr[g] / counts[g], sum_qe[g] / counts[g])
    return out


def policy_rmse(candidate, optimal, params, model, periods=1_000_000, burn_in=1_000,
                lanes=100, seed=0):
    """Root-mean-square order difference from the optimal table over its
    recurrent states, both order components pooled.

    Network candidates are projected onto the compressed space by long
    simulation: visited full states are grouped by compressed coordinate and
    their orders averaged, so projected entries may be fractional. Recurrent
    states the network never visits fall back to the zero-arrival preimage
    (I = I_e, empty incoming slot).
    """
    if params.l_e != 0:
        raise ValueError("RMSE comparison requires l_e = 0")
    states = optimal.S_DP
    if not states:
        raise ValueError("the optimal policy has no recurrent states")
    kind = policy_kind(candidate)
    if kind == "network":
        if candidate.input_mode != "full":
            raise TypeError("time-varying controllers have no stationary projection")
        averages = _network_compact_averages(
            candidate, params, model, periods, burn_in, lanes, seed
        )

        def act(state):
            key = (int(state.I_e), tuple(int(q) for q in state.tail))
            if key in averages:
                return averages[key]
            x = np.array([state.I_e, 0.0, *state.tail])
            q = orders_from_outputs(forward_batch(candidate, x[None, :]))[0]
            return float(q[0]), float(q[1])

    else:
        act = lambda state: _compact_action(candidate, state)

    total = 0.0
    for s in states:
        a_opt = optimal.action(s)
        q_r, q_e = act(s)
        total += (q_r - a_opt.q_r) ** 2 + (q_e - a_opt.q_e) ** 2
    return math.sqrt(total / len(states))


def wilcoxon_signed_rank(diffs):
    """One-sided signed-rank p-value for median(diffs) > 0.

    Zero differences are dropped and tied magnitudes mid-ranked. The null
    distribution is enumerated exactly for up to 20 non-zero differences;
    beyond that a normal approximation with continuity correction and
    tie-adjusted variance is used.
    """
    d = np.asarray(diffs, dtype=np.float64)
    if not np.isfinite(d).all():
        raise ValueError("differences must be finite")
    d = d[d != 0]
    if d.size == 0:
        raise ValueError("all differences are zero")
    if d.size < 5:
        raise ValueError("need at least 5 non-zero differences")
    n = d.size
    absd = np.abs(d)
    order = np.argsort(absd, kind="stable")
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j < n and absd[order[j]] == absd[order[i]]:
            j += 1
        ranks[order[i:j]] = (i + j + 1) / 2.0
        i = j
    w_plus = float(ranks[d > 0].sum())

    if n <= 20:
        # subset-sum count over doubled ranks (integers); exact tail mass
        scaled = np.rint(2 * ranks).astype(np.int64)
        counts = np.zeros(int(scaled.sum()) + 1)
        counts[0] = 1.0
        for r in scaled:
            counts[r:] += counts[:-r].copy()
        w2 = int(round(2 * w_plus))
        return float(counts[w2:].sum() / 2.0**n)

    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(absd, return_counts=True)
    var -= float((tie_counts**3 - tie_counts).sum()) / 48.0
    z = (w_plus - 0.5 - mu) / math.sqrt(var)
    return 0.5 * math.erfc(z / math.sqrt(2.0))


@dataclass(frozen=True)
class ProjectionTable:
    """Steady-state orders over (net inventory, inventory position)."""

    rows: tuple  # (I, position, q_r, q_e, frequency) sorted by coordinates
    periods: int

    def __post_init__(self):
        total = sum(r[4] for r in self.rows)
        if self.rows and not math.isclose(total, 1.0, rel_tol=1e-9):
            raise ValueError("visit frequencies must sum to 1")


def projection_csv_rows(table):
    header = ["I", "position", "q_r", "q_e", "frequency"]
    rows = [[repr(float(v)) for v in row] for row in table.rows]
    return header, rows


def project_policy(policy, params, model, periods=1_000_000, burn_in=1_000, lanes=100,
                   seed=0):
    """Tabulate steady-state orders against the net inventory including the
    arrival due now, and the inventory position covering everything due
    within the regular lead time.

    Coordinates visited under several pipeline configurations report the
    frequency-weighted average order.
    """
    I, Qr, Qe, qr, qe = _simulate_states(policy, params, model, periods, burn_in, lanes, seed)
    net = I + Qr[:, 0] + (Qe[:, 0] if params.l_e >= 1 else 0.0)
    pos = I + Qr.sum(axis=1) + Qe[:, : params.l_r].sum(axis=1)
    coords = np.stack([net, pos], axis=1)
    uniq, inverse = np.unique(coords, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    counts = np.bincount(inverse)
    sum_qr = np.bincount(inverse, weights=qr)
    sum_qe = np.bincount(inverse, weights=qe)
    total = len(I)
    rows = tuple(
        (
            float(uniq[g, 0]),
            float(uniq[g, 1]),
            float(sum_qr[g] / counts[g]),
            float(sum_qe[g] / counts[g]),
            float(counts[g] / total),
        )
        for g in range(len(uniq))
    )
    return ProjectionTable(rows=rows, periods=total)

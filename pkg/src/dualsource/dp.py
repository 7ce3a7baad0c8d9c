"""Exact average-cost value iteration on the compressed state space.

States are (expedited inventory position, recent regular orders) with the
position confined to [lo, hi]. Transitions that would fall below lo are
clamped and charged a large penalty, so the minimizer never selects an
action that risks escaping downward (expediting always prevents it).
Transitions above hi clamp without penalty: they are driven by arrivals
already in the pipeline, and any policy living near the upper bound pays
holding costs far above the optimal average cost, so the clamp cannot
distort the optimum (the bound-insensitivity check guards this).
"""
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .demand import DiscreteUniform, Empirical, demand_max
from .dynamics import Action, CompressedState

PENALTY = 1e9


@dataclass(frozen=True)
class StateSpace:
    lo: int
    hi: int
    q_max: int
    l: int

    def __post_init__(self):
        if not self.lo <= 0 <= self.hi:
            raise ValueError("bounds must straddle zero inventory")
        if self.q_max < 1 or self.l < 1:
            raise ValueError("require q_max >= 1 and l >= 1")

    @staticmethod
    def for_instance(params, model, margin=5, q_max=None):
        d_max = demand_max(model)
        l = params.l
        return StateSpace(
            lo=-((l + 1) * d_max + margin),
            hi=(l + 2) * d_max + margin,
            q_max=int(q_max) if q_max is not None else max(d_max, 1),
            l=l,
        )

    @property
    def tail_len(self):
        return self.l - 1

    @property
    def tail_span(self):
        return (self.q_max + 1) ** self.tail_len

    @property
    def n_states(self):
        return (self.hi - self.lo + 1) * self.tail_span

    @property
    def n_actions(self):
        return (self.q_max + 1) ** 2

    def state_index(self, I_e, tail):
        code = 0
        for q in tail:
            code = code * (self.q_max + 1) + int(q)
        return (int(I_e) - self.lo) * self.tail_span + code

    def state_of(self, idx):
        ie, code = divmod(int(idx), self.tail_span)
        tail = []
        for j in range(self.tail_len):
            tail.append(code // (self.q_max + 1) ** (self.tail_len - 1 - j))
            code %= (self.q_max + 1) ** (self.tail_len - 1 - j)
        return CompressedState(I_e=float(ie + self.lo), tail=tuple(float(q) for q in tail))

    def enumerate_arrays(self):
        """Vector views: IE[s] and TAIL[s, j] for all flat state indices."""
        n = self.n_states
        idx = np.arange(n)
        ie = idx // self.tail_span + self.lo
        code = idx % self.tail_span
        tails = np.zeros((n, self.tail_len), dtype=np.int64)
        for j in range(self.tail_len):
            div = (self.q_max + 1) ** (self.tail_len - 1 - j)
            tails[:, j] = code // div
            code = code % div
        return ie, tails


@dataclass
class ValueTable:
    space: StateSpace
    J: np.ndarray
    lam: np.ndarray
    k: int

    def value(self, state):
        return float(self.J[self.space.state_index(state.I_e, state.tail)])


@dataclass
class PolicyTable:
    space: StateSpace
    q_r: np.ndarray
    q_e: np.ndarray
    recurrent: np.ndarray

    def action(self, state):
        idx = self.space.state_index(state.I_e, state.tail)
        return Action(q_r=int(self.q_r[idx]), q_e=int(self.q_e[idx]))

    @property
    def S_DP(self):
        return [self.space.state_of(i) for i in np.flatnonzero(self.recurrent)]


def _demand_support(model):
    if isinstance(model, (DiscreteUniform, Empirical)):
        return model.values.astype(np.int64), model.probs
    raise TypeError("value iteration requires a discrete demand model")


class _Transitions:
    """Dense transition/cost tables over (action, demand, state)."""

    def __init__(self, space, params, model):
        if params.l_e != 0:
            raise ValueError("dynamic program requires l_e = 0")
        if params.c_r != 0:
            raise ValueError("dynamic program requires c_r = 0")
        if params.l != space.l:
            raise ValueError("state space lead-time gap does not match instance")
        d_vals, d_probs = _demand_support(model)
        if space.q_max < int(d_vals[-1]):
            raise ValueError("q_max must cover the maximum single-period demand")
        self.space = space
        self.d_vals = d_vals
        self.d_probs = d_probs
        ie, tails = space.enumerate_arrays()
        qs = np.arange(space.q_max + 1)
        # action order: q_e major, q_r minor, so the first argmin hit is the
        # smallest q_e and then the smallest q_r
        self.actions = [(int(qr), int(qe)) for qe in qs for qr in qs]
        n_a, n_d, n_s = len(self.actions), len(d_vals), space.n_states
        self.idx = np.empty((n_a, n_d, n_s), dtype=np.int64)
        self.cost = np.empty((n_a, n_d, n_s))
        self.cost_clean = np.empty((n_a, n_d, n_s))
        self.clamped = np.empty((n_a, n_d, n_s), dtype=bool)
        incoming = tails[:, 0] if space.tail_len >= 1 else None
        tail_code = (
            np.zeros(n_s, dtype=np.int64)
            if space.tail_len == 0
            else (ie * 0 + (np.arange(n_s) % space.tail_span))
        )
        for a, (qr, qe) in enumerate(self.actions):
            inc = incoming if space.tail_len >= 1 else np.full(n_s, qr)
            shifted_code = (
                (tail_code % (space.q_max + 1) ** (space.tail_len - 1)) * (space.q_max + 1) + qr
                if space.tail_len >= 1
                else np.zeros(n_s, dtype=np.int64)
            )
            charge = (params.f_r if qr > 0 else 0.0) + (params.f_e if qe > 0 else 0.0)
            for di, d in enumerate(d_vals):
                raw_next = ie + qe + inc - int(d)
                down = raw_next < space.lo
                up = raw_next > space.hi
                nxt = np.clip(raw_next, space.lo, space.hi)
                self.idx[a, di] = (nxt - space.lo) * space.tail_span + shifted_code
                pos = ie + qe - int(d)
                stage = (
                    params.c_e * qe
                    + charge
                    + params.h * np.maximum(pos, 0)
                    + params.b * np.maximum(-pos, 0)
                )
                self.cost_clean[a, di] = stage
                self.cost[a, di] = stage + PENALTY * down
                self.clamped[a, di] = down | up
        self.cbar = np.tensordot(self.d_probs, self.cost, axes=(0, 1))
        self.cbar_clean = np.tensordot(self.d_probs, self.cost_clean, axes=(0, 1))

    def action_values(self, J):
        """Q(a, s) = E_d[cost + J(next)] for every action."""
        return self.cbar + np.tensordot(self.d_probs, J[self.idx], axes=(0, 1))


def value_iteration(params, model, space=None, eps=1e-6, gamma=1.0, max_iter=1_000_000):
    """Average-cost optimality via value iteration with terminal values 0.

    Stops when max_s |J_{k+1}(s)/(k+1) - J_k(s)/k| < eps; the optimal
    average cost is J_k(s_ref)/k at the all-zeros reference state. Returns
    (lambda_star, ValueTable, PolicyTable).
    """
    if gamma != 1.0:
        raise ValueError("average-cost value iteration requires gamma = 1")
    if space is None:
        space = StateSpace.for_instance(params, model)
    trans = _Transitions(space, params, model)
    n = space.n_states
    J = np.zeros(n)
    lam_prev = None
    k = 0
    for k in range(1, int(max_iter) + 1):
        J_new = trans.action_values(J).min(axis=0)
        lam = J_new / k
        if lam_prev is not None and np.max(np.abs(lam - lam_prev)) < eps:
            J = J_new
            break
        J = J_new
        lam_prev = lam
    else:
        raise RuntimeError(f"value iteration did not converge within {int(max_iter)} iterations")

    s_ref = space.state_index(0, (0,) * space.tail_len)
    lam_star = float(J[s_ref] / k)
    q_values = trans.action_values(J)
    best = q_values.argmin(axis=0)
    acts = np.array(trans.actions)
    policy = PolicyTable(
        space=space,
        q_r=acts[best, 0].astype(np.int64),
        q_e=acts[best, 1].astype(np.int64),
        recurrent=np.zeros(n, dtype=bool),
    )
    policy.recurrent = _recurrent_mask(policy, trans)
    values = ValueTable(space=space, J=J, lam=J / k, k=k)
    return lam_star, values, policy


def _policy_edges(policy, trans):
    """Deduplicated (src, dst) transition pairs under the policy."""
    n = policy.space.n_states
    a_of_s = policy.q_e * (policy.space.q_max + 1) + policy.q_r
    srcs = []
    dsts = []
    for di in range(len(trans.d_vals)):
        srcs.append(np.arange(n))
        dsts.append(trans.idx[a_of_s, di, np.arange(n)])
    return np.concatenate(srcs), np.concatenate(dsts)


def _recurrent_mask(policy, trans):
    """States with positive long-run frequency starting from the all-zeros state."""
    space = policy.space
    n = space.n_states
    src, dst = _policy_edges(policy, trans)
    graph = csr_matrix((np.ones_like(src), (src, dst)), shape=(n, n))
    # forward reachability from the reference start state
    s_ref = space.state_index(0, (0,) * space.tail_len)
    reach = np.zeros(n, dtype=bool)
    frontier = np.array([s_ref])
    reach[s_ref] = True
    while frontier.size:
        nxt = np.unique(graph[frontier].indices)
        nxt = nxt[~reach[nxt]]
        reach[nxt] = True
        frontier = nxt
    n_comp, labels = connected_components(graph, directed=True, connection="strong")
    # a strongly connected component is recurrent iff no edge leaves it
    leaves = labels[src] != labels[dst]
    open_comp = np.zeros(n_comp, dtype=bool)
    np.logical_or.at(open_comp, labels[src[leaves]], True)
    closed = ~open_comp[labels]
    return closed & reach


def recurrent_states(policy, params, model):
    """Recurrent states of the chain induced by a table policy."""
    trans = _Transitions(policy.space, params, model)
    mask = _recurrent_mask(policy, trans)
    return [policy.space.state_of(i) for i in np.flatnonzero(mask)]


def policy_long_run_cost(policy, params, model):
    """Exact average cost per period of a table policy via stationary analysis.

    Raises if the policy's recurrent class touches the state-space clamp
    (unbounded drift) or if multiple recurrent classes are reachable.
    """
    space = policy.space
    trans = _Transitions(space, params, model)
    mask = _recurrent_mask(policy, trans)
    idxs = np.flatnonzero(mask)
    if idxs.size == 0:
        raise RuntimeError("no recurrent class reachable from the reference state")
    n = space.n_states
    src, dst = _policy_edges(policy, trans)
    graph = csr_matrix((np.ones_like(src), (src, dst)), shape=(n, n))
    _, labels = connected_components(graph, directed=True, connection="strong")
    if len(set(labels[idxs])) > 1:
        raise RuntimeError("reducible chain: multiple recurrent classes reachable")
    a_of_s = policy.q_e * (space.q_max + 1) + policy.q_r
    if trans.clamped[a_of_s[idxs], :, idxs].any():
        raise RuntimeError(
            "recurrent class touches the state bounds: cost diverges (policy drifts)"
        )
    pos = {int(s): i for i, s in enumerate(idxs)}
    m = idxs.size
    P = np.zeros((m, m))
    cbar = np.zeros(m)
    for i, s in enumerate(idxs):
        a = int(a_of_s[s])
        cbar[i] = trans.cbar_clean[a, s]
        for di, p in enumerate(trans.d_probs):
            nxt = int(trans.idx[a, di, s])
            P[i, pos[nxt]] += p
    # stationary distribution: pi P = pi, sum pi = 1
    A = np.vstack([P.T - np.eye(m), np.ones(m)])
    rhs = np.zeros(m + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    pi = np.maximum(pi, 0)
    pi /= pi.sum()
    return float(pi @ cbar)


def policy_csv_rows(policy, values=None):
    """Tabular export: state coordinates, actions, and value columns."""
    space = policy.space
    header = ["I_e"] + [f"tail_{j+1}" for j in range(space.tail_len)] + ["q_r", "q_e", "J", "lambda"]
    rows = []
    for idx in range(space.n_states):
        st = space.state_of(idx)
        row = [int(st.I_e)] + [int(q) for q in st.tail]
        row += [int(policy.q_r[idx]), int(policy.q_e[idx])]
        if values is not None:
            row += [repr(float(values.J[idx])), repr(float(values.lam[idx]))]
        else:
            row += ["", ""]
        rows.append(row)
    return header, rows

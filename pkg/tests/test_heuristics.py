import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualsource._sim import batch_mean_costs
from dualsource.demand import DiscreteUniform, Rng, TruncatedNormalProcess, sample
from dualsource.dynamics import CostParams, InventoryState, SingleParams, step
from dualsource.heuristics import (
    BaseStockPolicy,
    CdiPolicy,
    DualIndexPolicy,
    SingleIndexPolicy,
    TbsPolicy,
    _crn_demands,
    _overshoot_d2_samples,
    base_stock_expected_cost,
    base_stock_order,
    cdi_controller,
    cdi_order,
    cdi_seed_levels,
    cdi_time_varying_params,
    di_controller,
    di_order,
    optimize_base_stock,
    optimize_cdi,
    optimize_di,
    optimize_si,
    policy_from_json,
    policy_to_json,
    si_controller,
    si_order,
    tbs_order,
)

U04 = DiscreteUniform(0, 4)
ROW1 = CostParams(h=5, b=95, c_r=0, c_e=5, f_r=0, f_e=0, l_r=2, l_e=0)


def test_base_stock_order_examples():
    policy = BaseStockPolicy(z=4)
    assert base_stock_order(InventoryState(1, (), ()), policy) == 3
    assert base_stock_order(InventoryState(6, (), ()), policy) == 0
    assert base_stock_order(InventoryState(1, (2,), ()), policy) == 1


def test_base_stock_newsvendor_instance():
    params = SingleParams(h=5, b=495, c=0, l=0)
    policy = optimize_base_stock(params, U04)
    assert policy.z == 4
    assert base_stock_expected_cost(policy, params, U04) == pytest.approx(10.0)


def test_base_stock_with_lead_time():
    params = SingleParams(h=5, b=95, c=0, l=2)
    policy = optimize_base_stock(params, U04)
    assert policy.z == 10  # 0.95 fractile of three-fold U{0,4} convolution
    cheaper = base_stock_expected_cost(policy, params, U04)
    for z in (policy.z - 1, policy.z + 1):
        assert cheaper <= base_stock_expected_cost(BaseStockPolicy(z), params, U04)


def test_si_order_examples():
    st0 = InventoryState(0, (0, 0), ())
    a = si_order(st0, SingleIndexPolicy(z_r=9, delta=3), last_demand=5)
    assert (a.q_r, a.q_e) == (3, 2)
    a = si_order(st0, SingleIndexPolicy(z_r=9, delta=3), last_demand=0)
    assert (a.q_r, a.q_e) == (0, 0)
    for d in range(5):
        a = si_order(st0, SingleIndexPolicy(z_r=9, delta=4), last_demand=d)
        assert a.q_e == 0  # gap at least max demand: never expedite


@given(delta=st.integers(0, 8), d=st.integers(0, 8))
def test_si_orders_replace_last_demand(delta, d):
    a = si_order(InventoryState(0, (0, 0), ()), SingleIndexPolicy(z_r=9, delta=delta), d)
    assert a.q_r + a.q_e == d
    assert a.q_r >= 0 and a.q_e >= 0


def test_optimize_si_rejects_noisy_sample_size():
    with pytest.raises(ValueError):
        optimize_si(ROW1, U04, n_samples=9_999)


def test_si_fractile_on_uncapped_gap():
    # l_r=1, l_e=0, delta >= D_max: lead-time demand is two independent draws
    params = CostParams(h=5, b=495, c_r=0, c_e=5, f_r=0, f_e=0, l_r=1, l_e=0)
    rng = Rng(0)
    draws = sample(U04, 0, rng, size=100_000 * 2).reshape(100_000, 2)
    d1 = np.minimum(draws[:, 0], 4) + draws[:, 1]
    z = int(np.quantile(d1, 495 / 500, method="inverted_cdf"))
    assert z == 8


def test_optimize_si_deterministic_and_reasonable():
    a = optimize_si(ROW1, U04, seed=0)
    b = optimize_si(ROW1, U04, seed=0)
    assert a == b
    assert 0 <= a.delta <= 4
    demands = _crn_demands(U04, 200, 500, seed=99)
    cost = batch_mean_costs(si_controller(a), ROW1, demands, I0=a.z_r).mean()
    assert 16.77 - 0.2 <= cost < 19.0


def test_di_matches_si_at_zero_gap():
    si_pol = SingleIndexPolicy(z_r=3, delta=0)
    di_pol = DualIndexPolicy(z_e=3, delta=0)
    d = sample(U04, 0, Rng(5), size=200)
    st_a = InventoryState(3.0, (0, 0), ())
    st_b = InventoryState(3.0, (0, 0), ())
    last = 0.0
    for t in range(200):
        a = si_order(st_a, si_pol, last)
        b = di_order(st_b, di_pol, last, ROW1)
        assert (a.q_r, a.q_e) == (b.q_r, b.q_e)
        st_a, _ = step(st_a, a, d[t], ROW1)
        st_b, _ = step(st_b, b, d[t], ROW1)
        last = d[t]


def test_overshoot_law_at_saturating_gap():
    # gap (l+1)*D_max: expediting stops, d2 is the 3-period demand sum shifted
    d2 = _overshoot_d2_samples(U04, ROW1, 12, 50_000, Rng(1))
    assert d2.min() >= -12.0 and d2.max() <= 0.0
    assert d2.mean() == pytest.approx(3 * 2.0 - 12.0, abs=0.1)


def test_optimize_di_deterministic_and_beats_si():
    di = optimize_di(ROW1, U04, seed=0)
    assert di == optimize_di(ROW1, U04, seed=0)
    si = optimize_si(ROW1, U04, seed=0)
    demands = _crn_demands(U04, 300, 800, seed=99)
    di_cost = batch_mean_costs(di_controller(di, ROW1), ROW1, demands, I0=di.z_e + di.delta).mean()
    si_cost = batch_mean_costs(si_controller(si), ROW1, demands, I0=si.z_r).mean()
    assert di_cost <= si_cost + 0.05
    assert di_cost >= 16.77 - 0.05  # cannot beat the optimum


def test_cdi_order_examples():
    policy = CdiPolicy(S_r=6, S_e=1, cap=3)
    a = cdi_order(InventoryState(1, (0, 0), ()), policy, 0)
    assert a.q_r == 3  # min(5, cap)
    assert a.q_e == 0  # position already at S_e
    b = cdi_order(InventoryState(-2, (1, 0), ()), policy, 0)
    assert b.q_e == 2
    with pytest.raises(ValueError):
        cdi_order(InventoryState(0, (0,), (1,)), policy, 0)


def test_cdi_seed_levels_row():
    params = CostParams(h=5, b=495, c_r=0, c_e=20, f_r=0, f_e=0, l_r=2, l_e=0)
    s_r, s_e, cap = cdi_seed_levels(params, U04)
    assert s_e == pytest.approx(3.96)
    assert s_r == pytest.approx(11.88)
    assert cap == pytest.approx(3.96)


def test_optimize_cdi_published_instance():
    params = CostParams(h=5, b=495, c_r=0, c_e=20, f_r=0, f_e=0, l_r=2, l_e=0)
    policy = optimize_cdi(params, U04, seed=0)
    assert policy == optimize_cdi(params, U04, seed=0)
    assert policy.cap == 3
    assert policy.S_e == 4
    assert policy.S_r - policy.cap == 6
    demands = _crn_demands(U04, 400, 2000, seed=99)
    cost = batch_mean_costs(cdi_controller(policy), params, demands, I0=0.0).mean()
    assert cost == pytest.approx(23.26, abs=0.1)


def test_optimize_cdi_degenerate_demand_never_backlogs():
    flat = DiscreteUniform(2, 2)
    policy = optimize_cdi(ROW1, flat, n_reps=4, horizon=200, seed=0)
    demands = np.full((1, 400), 2.0)
    cost = batch_mean_costs(cdi_controller(policy), ROW1, demands, I0=0.0).mean()
    assert cost < 1.0  # steady state carries no holding or backlog cost


def test_cdi_matches_di_while_not_expediting():
    # with the expedited level far below reach, both rules are pure order-up-to
    di_pol = DualIndexPolicy(z_e=-50, delta=56)
    cdi_pol = CdiPolicy(S_r=6, S_e=-50, cap=10**6)
    demands = _crn_demands(U04, 50, 300, seed=3)
    a = batch_mean_costs(di_controller(di_pol, ROW1), ROW1, demands, I0=6)
    b = batch_mean_costs(cdi_controller(cdi_pol), ROW1, demands, I0=6)
    assert np.array_equal(a, b)


def test_cdi_time_varying_current_levels():
    params = CostParams(h=5, b=495, c_r=0, c_e=20, f_r=0, f_e=0, l_r=2, l_e=0)
    proc = TruncatedNormalProcess(mu=(100.0,) * 4, sigma=(10.0,) * 4, trunc_lo=0, trunc_hi=1e8)
    cur = cdi_time_varying_params(proc, params, "current")
    assert cur.S_e[0] == pytest.approx(125.284)
    assert cur.cap[0] == pytest.approx(125.284)
    assert cur.S_r[0] == pytest.approx(2 * 125.284)
    assert cur.horizon == 4
    flat = TruncatedNormalProcess(mu=(50.0,) * 3, sigma=(0.0,) * 3, trunc_lo=0, trunc_hi=1e8)
    z = cdi_time_varying_params(flat, params, "current")
    assert z.S_e[0] == pytest.approx(50.0)


def test_cdi_time_varying_future_levels():
    params = CostParams(h=5, b=495, c_r=0, c_e=20, f_r=0, f_e=0, l_r=2, l_e=0)
    proc = TruncatedNormalProcess(mu=(100.0,) * 6, sigma=(10.0,) * 6, trunc_lo=0, trunc_hi=1e8)
    fut = cdi_time_varying_params(proc, params, "future")
    level = 125.284
    assert fut.S_r[0] == pytest.approx(3 * level)  # sums periods t..t+l
    assert fut.cap[0] == pytest.approx(level)
    assert fut.S_r[-1] == pytest.approx(3 * level)  # end-of-horizon moments held
    with pytest.raises(ValueError):
        cdi_time_varying_params(proc, params, "past")


def test_tbs_order_examples():
    policy = TbsPolicy(r=2, z_e=4)
    a = tbs_order(InventoryState(3, (0, 0), ()), policy)
    assert (a.q_r, a.q_e) == (2, 1)
    b = tbs_order(InventoryState(6, (0, 0), ()), policy)
    assert (b.q_r, b.q_e) == (2, 0)
    assert TbsPolicy(r=1, z_e=3).r == 1


@given(
    I=st.integers(-10, 10),
    q1=st.integers(0, 4),
    q2=st.integers(0, 4),
    d=st.integers(0, 4),
)
@settings(max_examples=60)
def test_discrete_orders_are_nonnegative_integers(I, q1, q2, d):
    state = InventoryState(I, (q1, q2), ())
    actions = [
        si_order(state, SingleIndexPolicy(z_r=6, delta=2), d),
        di_order(state, DualIndexPolicy(z_e=4, delta=3), d, ROW1),
        cdi_order(state, CdiPolicy(S_r=8, S_e=4, cap=3), 0),
        tbs_order(state, TbsPolicy(r=2, z_e=4)),
    ]
    for a in actions:
        assert a.q_r >= 0 and a.q_e >= 0
        assert float(a.q_r).is_integer() and float(a.q_e).is_integer()
    assert actions[2].q_r <= 3  # cap binds


def test_policy_json_round_trips():
    policies = [
        BaseStockPolicy(4),
        SingleIndexPolicy(6, 1),
        DualIndexPolicy(4, 3),
        CdiPolicy(9, 4, 3),
        CdiPolicy(S_r=(1.0, 2.0), S_e=(0.5, 1.5), cap=(1.0, 1.0)),
        TbsPolicy(2, 4),
    ]
    for policy in policies:
        back = policy_from_json(policy_to_json(policy))
        assert back == policy or vars(back) == {
            k: tuple(v) if isinstance(v, (tuple, list, np.ndarray)) else v
            for k, v in vars(policy).items()
        }
    with pytest.raises(ValueError):
        policy_from_json(json.dumps({"kind": "mystery", "z": 1}))
    with pytest.raises(TypeError):
        policy_to_json({"z": 4})


def test_cdi_policy_validation():
    with pytest.raises(ValueError):
        CdiPolicy(S_r=(1.0, 2.0), S_e=(1.0,), cap=1.0)
    with pytest.raises(ValueError):
        CdiPolicy(S_r=5, S_e=3, cap=-1)
    with pytest.raises(ValueError):
        TbsPolicy(r=-1, z_e=0)
    with pytest.raises(ValueError):
        SingleIndexPolicy(z_r=-1, delta=0)

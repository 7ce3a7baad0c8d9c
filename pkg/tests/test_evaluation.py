import json
import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from dualsource.demand import DiscreteUniform, Empirical, TruncatedNormalProcess
from dualsource.dp import PolicyTable, policy_long_run_cost, value_iteration
from dualsource.dynamics import CostParams, SingleParams
from dualsource.evaluation import (
    EvalReport,
    _compact_action,
    evaluate,
    policy_kind,
    policy_rmse,
    project_policy,
    projection_csv_rows,
    report_csv_rows,
    report_summary,
    wilcoxon_signed_rank,
)
from dualsource.heuristics import (
    BaseStockPolicy,
    CdiPolicy,
    DualIndexPolicy,
    SingleIndexPolicy,
    TbsPolicy,
    optimize_cdi,
)
from dualsource.nnc.network import empirical_architecture, make_network

U04 = DiscreteUniform(0, 4)
ROW1 = CostParams(h=5, b=95, c_r=0, c_e=5, f_r=0, f_e=0, l_r=2, l_e=0)
B495 = CostParams(h=5, b=495, c_r=0, c_e=20, f_r=0, f_e=0, l_r=2, l_e=0)
ZERO_DEMAND = Empirical(((0, 1.0),))


@pytest.fixture(scope="module")
def row1_optimal():
    lam, values, policy = value_iteration(ROW1, U04)
    return lam, policy


@pytest.fixture(scope="module")
def b495_optimal():
    lam, values, policy = value_iteration(B495, U04)
    return lam, policy


def test_policy_kind_dispatch():
    assert policy_kind(BaseStockPolicy(z=3)) == "base_stock"
    assert policy_kind(SingleIndexPolicy(z_r=2, delta=1)) == "si"
    assert policy_kind(DualIndexPolicy(z_e=2, delta=1)) == "di"
    assert policy_kind(CdiPolicy(S_r=5, S_e=2, cap=3)) == "cdi"
    assert policy_kind(TbsPolicy(r=2, z_e=1)) == "tbs"
    assert policy_kind(make_network((4, 2))) == "network"
    with pytest.raises(TypeError):
        policy_kind(object())


def test_evaluate_table_matches_published_optimum(row1_optimal):
    lam, policy = row1_optimal
    report = evaluate(policy, ROW1, U04, n_reps=500, horizon=1000, seed=0)
    assert report.mean == pytest.approx(16.77, abs=0.1)
    assert report.n_reps == 500 and report.horizon == 1000
    assert len(report.costs) == 500
    exact = policy_long_run_cost(policy, ROW1, U04)
    assert abs(report.mean - exact) <= 3 * report.se


def test_evaluate_zero_demand_zero_order_costs_nothing():
    report = evaluate(CdiPolicy(S_r=0, S_e=0, cap=0), ROW1, ZERO_DEMAND,
                      n_reps=20, horizon=50, seed=1)
    assert np.all(report.costs == 0.0)
    assert report.mean == 0.0 and report.se == 0.0


def test_evaluate_uses_common_random_numbers(row1_optimal):
    _, policy = row1_optimal
    a = evaluate(policy, ROW1, U04, n_reps=30, horizon=100, seed=7)
    b = evaluate(CdiPolicy(S_r=8, S_e=4, cap=1), ROW1, U04, n_reps=30, horizon=100, seed=7)
    c = evaluate(policy, ROW1, U04, n_reps=30, horizon=100, seed=8)
    assert a.demand_sha256 == b.demand_sha256
    assert a.demand_sha256 != c.demand_sha256


def test_evaluate_si_starts_at_its_base_stock_level():
    # zero demand and zero orders leave the start inventory in place forever
    report = evaluate(SingleIndexPolicy(z_r=3, delta=2), ROW1, ZERO_DEMAND,
                      n_reps=5, horizon=40, seed=0)
    assert np.all(report.costs == 3 * ROW1.h)


def test_evaluate_network_honors_trained_initial_inventory():
    net = make_network((3, 2), init_inventory=2.7)
    report = evaluate(net, ROW1, ZERO_DEMAND, n_reps=4, horizon=25, seed=0)
    # zero weights order nothing; floor(2.7) units held every period
    assert np.all(report.costs == 2 * ROW1.h)


def test_evaluate_network_single_supplier():
    params = SingleParams(h=5, b=495, c=0, l=0)
    base = evaluate(BaseStockPolicy(z=4), params, U04, n_reps=200, horizon=500, seed=2)
    assert base.mean == pytest.approx(10.0, abs=0.5)
    net = make_network((1, 1), init_inventory=0.0)
    rep = evaluate(net, params, U04, n_reps=20, horizon=50, seed=2)
    assert np.isfinite(rep.costs).all()
    assert rep.demand_sha256 == evaluate(BaseStockPolicy(z=4), params, U04, n_reps=20,
                                         horizon=50, seed=2).demand_sha256


def test_evaluate_reduced_state_network_reads_process_moments():
    horizon = 12
    process = TruncatedNormalProcess(mu=(10.0,) * horizon, sigma=(2.0,) * horizon,
                                     trunc_lo=0.0, trunc_hi=20.0)
    net = empirical_architecture(ROW1.l_r + 2, input_scale=10.0, out_scale=10.0)
    report = evaluate(net, ROW1, process, n_reps=6, horizon=horizon, seed=3)
    assert np.isfinite(report.costs).all()


def test_evaluate_errors(row1_optimal):
    _, policy = row1_optimal
    with pytest.raises(TypeError):
        evaluate(BaseStockPolicy(z=4), ROW1, U04, n_reps=3, horizon=5, seed=0)
    with pytest.raises(TypeError):
        evaluate(SingleIndexPolicy(z_r=2, delta=1), SingleParams(h=1, b=9), U04,
                 n_reps=3, horizon=5, seed=0)
    with pytest.raises(ValueError):
        evaluate(policy, ROW1, U04, n_reps=0, horizon=5, seed=0)
    l3 = CostParams(h=5, b=95, c_r=0, c_e=5, f_r=0, f_e=0, l_r=3, l_e=0)
    with pytest.raises(ValueError):
        evaluate(policy, l3, U04, n_reps=3, horizon=5, seed=0)
    tv = CdiPolicy(S_r=(5, 5), S_e=(2, 2), cap=(3, 3))
    with pytest.raises(ValueError):
        evaluate(tv, ROW1, U04, n_reps=3, horizon=5, seed=0)
    wide = make_network((6, 2))
    with pytest.raises(ValueError):
        evaluate(wide, ROW1, U04, n_reps=3, horizon=5, seed=0)


def test_report_csv_and_summary_round_trip(row1_optimal):
    _, policy = row1_optimal
    report = evaluate(policy, ROW1, U04, n_reps=12, horizon=60, seed=5)
    header, rows = report_csv_rows(report)
    assert header == ["realization", "mean_cost"]
    assert len(rows) == 12
    assert float(rows[3][1]) == report.costs[3]
    summary = report_summary(report)
    text = json.dumps(summary, sort_keys=True)
    again = evaluate(policy, ROW1, U04, n_reps=12, horizon=60, seed=5)
    assert json.dumps(report_summary(again), sort_keys=True) == text
    assert json.loads(text)["mean"] == report.mean


@given(st.lists(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), min_size=1,
                max_size=40))
@settings(max_examples=60, deadline=None)
def test_cdf_points_non_decreasing_and_span(costs):
    arr = np.asarray(costs)
    report = EvalReport(
        costs=arr, mean=float(arr.mean()), median=float(np.median(arr)), se=0.0,
        n_reps=len(costs), horizon=1, seed=0, instance={}, demand_sha256="",
    )
    x, F = report.cdf_points()
    assert F[0] == 0.0 and F[-1] == 1.0
    assert np.all(np.diff(F) >= 0)
    assert np.all(np.diff(x) >= 0)


def test_eval_report_rejects_non_finite_costs():
    with pytest.raises(ValueError):
        EvalReport(costs=np.array([1.0, np.inf]), mean=0.0, median=0.0, se=0.0,
                   n_reps=2, horizon=1, seed=0, instance={}, demand_sha256="")


def test_policy_rmse_identity_is_zero(row1_optimal):
    _, policy = row1_optimal
    assert policy_rmse(policy, policy, ROW1, U04) == 0.0


def test_policy_rmse_cdi_matches_published_value(row1_optimal):
    _, policy = row1_optimal
    cdi = optimize_cdi(ROW1, U04)
    assert policy_rmse(cdi, policy, ROW1, U04) == pytest.approx(0.58, abs=0.05)


def test_policy_rmse_enumeration_order_invariant(row1_optimal):
    _, policy = row1_optimal
    cdi = CdiPolicy(S_r=8, S_e=4, cap=1)
    value = policy_rmse(cdi, policy, ROW1, U04)
    total = 0.0
    states = list(reversed(policy.S_DP))
    for s in states:
        a = policy.action(s)
        q_r, q_e = _compact_action(cdi, s)
        total += (q_r - a.q_r) ** 2 + (q_e - a.q_e) ** 2
    assert value == pytest.approx(math.sqrt(total / len(states)), abs=1e-12)


def test_policy_rmse_constant_network_both_projection_paths(row1_optimal):
    # constant orders (1, 2) regardless of state: the simulated projection and
    # the unvisited-state fallback must coincide, so the RMSE is closed-form
    _, policy = row1_optimal
    net = make_network((4, 2), activations=["identity"])
    net.layers[0].e[:] = [1.2, 2.9]
    params = CostParams(h=5, b=95, c_r=0, c_e=5, f_r=0, f_e=0, l_r=3, l_e=0)
    lam, values, optimal = value_iteration(params, U04)
    got = policy_rmse(net, optimal, params, U04, periods=20_000, burn_in=100, lanes=10)
    total = sum(
        (1.0 - optimal.action(s).q_r) ** 2 + (2.0 - optimal.action(s).q_e) ** 2
        for s in optimal.S_DP
    )
    assert got == pytest.approx(math.sqrt(total / len(optimal.S_DP)), abs=1e-12)


def test_policy_rmse_unsupported_candidates(row1_optimal):
    _, policy = row1_optimal
    with pytest.raises(TypeError):
        policy_rmse(SingleIndexPolicy(z_r=2, delta=1), policy, ROW1, U04)
    with pytest.raises(TypeError):
        policy_rmse(DualIndexPolicy(z_e=2, delta=1), policy, ROW1, U04)
    tv = CdiPolicy(S_r=(5,), S_e=(2,), cap=(3,))
    with pytest.raises(TypeError):
        policy_rmse(tv, policy, ROW1, U04)
    reduced = empirical_architecture(4, input_scale=1.0, out_scale=1.0)
    with pytest.raises(TypeError):
        policy_rmse(reduced, policy, ROW1, U04)


def test_policy_rmse_requires_recurrent_states(row1_optimal):
    _, policy = row1_optimal
    barren = PolicyTable(
        space=policy.space,
        q_r=policy.q_r,
        q_e=policy.q_e,
        recurrent=np.zeros_like(policy.recurrent),
    )
    with pytest.raises(ValueError):
        policy_rmse(CdiPolicy(S_r=8, S_e=4, cap=1), barren, ROW1, U04)


def test_wilcoxon_all_positive_is_exact_power_of_two():
    p = wilcoxon_signed_rank(np.arange(1.0, 11.0))
    assert p == 1.0 / 2**10


def test_wilcoxon_antisymmetric_is_near_half():
    p = wilcoxon_signed_rank(np.array([1.0, -1.0, 2.0, -2.0, 3.0, -3.0]))
    assert 0.5 <= p <= 0.6


def test_wilcoxon_large_separation_is_decisive():
    rng = np.random.default_rng(0)
    diffs = rng.normal(0.8, 1.0, size=1000)
    assert wilcoxon_signed_rank(diffs) < 1e-10


def test_wilcoxon_matches_reference_exact():
    rng = np.random.default_rng(4)
    d = rng.normal(0.3, 1.0, size=14)
    expected = scipy.stats.wilcoxon(d, alternative="greater", method="exact").pvalue
    assert wilcoxon_signed_rank(d) == pytest.approx(expected, rel=1e-12)


def test_wilcoxon_matches_reference_approx_with_ties():
    rng = np.random.default_rng(5)
    d = rng.integers(-3, 6, size=60).astype(float)
    d = d[d != 0]
    assert d.size > 20
    expected = scipy.stats.wilcoxon(
        d, alternative="greater", method="approx", correction=True
    ).pvalue
    assert wilcoxon_signed_rank(d) == pytest.approx(expected, rel=1e-9)


def test_wilcoxon_rejects_degenerate_inputs():
    with pytest.raises(ValueError):
        wilcoxon_signed_rank(np.zeros(10))
    with pytest.raises(ValueError):
        wilcoxon_signed_rank(np.array([1.0, -2.0, 0.0, 0.0, 3.0, 0.0]))
    with pytest.raises(ValueError):
        wilcoxon_signed_rank(np.array([1.0, np.nan, 2.0, 3.0, 4.0]))


def test_project_policy_structure_of_optimal_solution(b495_optimal):
    _, policy = b495_optimal
    table = project_policy(policy, B495, U04, periods=300_000, burn_in=1000, seed=3)
    nets = [r[0] for r in table.rows]
    assert min(nets) == 2.0 and max(nets) == 10.0
    for net, pos, q_r, q_e, freq in table.rows:
        if q_e > 0:
            assert net + q_e == pytest.approx(4.0)
    idle = sum(r[4] for r in table.rows if r[3] == 0.0)
    assert idle == pytest.approx(0.86, abs=0.02)
    by_position = {}
    for r in table.rows:
        by_position.setdefault(r[1], set()).add(r[2])
    for pos, orders in by_position.items():
        if pos not in (5.0, 6.0):
            assert len(orders) == 1
    assert sum(r[4] for r in table.rows) == pytest.approx(1.0)


def test_project_policy_deterministic(b495_optimal):
    _, policy = b495_optimal
    a = project_policy(policy, B495, U04, periods=50_000, burn_in=500, seed=9)
    b = project_policy(policy, B495, U04, periods=50_000, burn_in=500, seed=9)
    assert a.rows == b.rows


def test_project_policy_deterministic_demand_single_row():
    steady = Empirical(((3, 1.0),))
    table = project_policy(TbsPolicy(r=3, z_e=4), B495, steady,
                           periods=20_000, burn_in=200, lanes=4, seed=0)
    assert len(table.rows) == 1
    net, pos, q_r, q_e, freq = table.rows[0]
    assert (q_r, q_e, freq) == (3.0, 0.0, 1.0)


def test_projection_csv_rows(b495_optimal):
    _, policy = b495_optimal
    table = project_policy(policy, B495, U04, periods=30_000, burn_in=300, seed=1)
    header, rows = projection_csv_rows(table)
    assert header == ["I", "position", "q_r", "q_e", "frequency"]
    assert len(rows) == len(table.rows)
    assert float(rows[0][4]) == table.rows[0][4]

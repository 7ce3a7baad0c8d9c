"""The compiled epoch kernel and the numpy tape must be interchangeable."""
import numpy as np
import pytest

from dualsource.demand import DiscreteUniform, Rng, TruncatedNormalProcess, sample_path
from dualsource.dynamics import CostParams, SingleParams
from dualsource.nnc import backend
from dualsource.nnc.graph import numpy_epoch
from dualsource.nnc.network import Layer, Network
from dualsource.nnc.training import TrainingConfig, train

needs_fastpath = pytest.mark.skipif(
    not backend.fastpath_available(), reason="compiled kernel not built"
)


def _random_net(dims, seed, input_mode="full", init_inv=2.5, in_scale=1.0,
                out_scale=1.0, alpha=1.0):
    gen = np.random.default_rng(seed)
    layers = []
    for k in range(len(dims) - 1):
        W = gen.normal(0.0, 0.4, (dims[k + 1], dims[k]))
        e = gen.normal(0.0, 0.3, dims[k + 1])
        act = "celu" if k < len(dims) - 2 else "identity"
        layers.append(Layer(W=W, e=e, activation=act))
    return Network(layers=tuple(layers), init_inventory=init_inv, alpha=alpha,
                   input_scale=in_scale, out_scale=out_scale, input_mode=input_mode)


def _uniform_demands(T, M, seed=3, lo=0, hi=8):
    model = DiscreteUniform(lo, hi)
    return np.stack([sample_path(model, Rng(seed).substream(k), T) for k in range(M)])


def _seasonal_process(T):
    t = np.arange(T)
    mu = 5.0 + 2.0 * np.sin(2 * np.pi * t / 10.0)
    sigma = 0.4 * (5.0 + 2.0 * np.abs(np.sin(2 * np.pi * t / 10.0)))
    return TruncatedNormalProcess(mu=tuple(mu), sigma=tuple(sigma),
                                  trunc_lo=0.0, trunc_hi=1e9)


def _max_rel_err(ref, got):
    errs = []
    for a, b in ((ref[0], got[0]), (ref[2], got[2])):
        errs.append(abs(a - b) / max(abs(a), 1e-12))
    for (gW1, ge1), (gW2, ge2) in zip(ref[1], got[1]):
        for a, b in ((gW1, gW2), (ge1, ge2)):
            scale = max(np.max(np.abs(a)) if a.size else 0.0, 1e-12)
            errs.append(np.max(np.abs(a - b)) / scale if a.size else 0.0)
    return max(errs)


CASES = {
    "dual_le0": dict(
        dims=(3, 16, 8, 2),
        params=CostParams(h=5, b=95, c_r=0, c_e=5, f_r=0, f_e=0, l_r=2, l_e=0),
        gamma=1.0,
    ),
    "dual_le1_fixed_charges": dict(
        dims=(5, 12, 2),
        params=CostParams(h=5, b=495, c_r=1, c_e=20, f_r=10, f_e=25, l_r=3, l_e=1),
        gamma=1.0,
    ),
    "dual_discounted_scaled": dict(
        dims=(3, 10, 10, 2),
        params=CostParams(h=2, b=50, c_r=0.5, c_e=7, f_r=0, f_e=3, l_r=2, l_e=0),
        gamma=0.97, in_scale=6.0, out_scale=2.5, alpha=0.7,
    ),
    "single_l0": dict(
        dims=(1, 8, 1), params=SingleParams(h=1, b=9, c=0, l=0), gamma=1.0,
    ),
    "single_l2": dict(
        dims=(3, 8, 8, 1), params=SingleParams(h=1, b=19, c=2, l=2),
        gamma=1.0, init_inv=4.2,
    ),
    "zero_init_inventory": dict(
        dims=(3, 6, 2),
        params=CostParams(h=5, b=95, c_r=0, c_e=5, f_r=0, f_e=0, l_r=2, l_e=0),
        gamma=1.0, init_inv=0.0,
    ),
}


@needs_fastpath
@pytest.mark.parametrize("case", sorted(CASES))
def test_fastpath_matches_tape(case):
    cfg = CASES[case]
    net = _random_net(
        cfg["dims"], seed=7,
        init_inv=cfg.get("init_inv", 2.5), in_scale=cfg.get("in_scale", 1.0),
        out_scale=cfg.get("out_scale", 1.0), alpha=cfg.get("alpha", 1.0),
    )
    demands = _uniform_demands(T=37, M=11)
    ref = numpy_epoch(net, demands, cfg["params"], cfg["gamma"])
    got = backend._fast_epoch(net, demands, cfg["params"], cfg["gamma"], None)
    assert _max_rel_err(ref, got) < 1e-9


@needs_fastpath
def test_fastpath_matches_tape_reduced_moments():
    T, M = 37, 9
    proc = _seasonal_process(T)
    demands = np.stack([sample_path(proc, Rng(5).substream(k), T) for k in range(M)])
    params = CostParams(h=1, b=19, c_r=0, c_e=3, f_r=0, f_e=0, l_r=4, l_e=0)
    net = _random_net((6, 8, 8, 2), seed=11, input_mode="reduced_moments")
    ref = numpy_epoch(net, demands, params, 1.0, False, proc)
    got = backend._fast_epoch(net, demands, params, 1.0, proc)
    assert _max_rel_err(ref, got) < 1e-9


@needs_fastpath
def test_env_flag_forces_numpy_path(monkeypatch):
    monkeypatch.setenv("DUALSOURCE_NO_FASTPATH", "1")
    assert backend.fastpath_available()
    assert not backend.fastpath_enabled()
    monkeypatch.delenv("DUALSOURCE_NO_FASTPATH")
    assert backend.fastpath_enabled()


def test_surrogate_pass_uses_tape():
    # surrogate=True exists only on the tape; epoch_pass must route there
    net = _random_net((3, 4, 2), seed=1)
    demands = _uniform_demands(T=5, M=3)
    params = CostParams(h=5, b=95, c_r=0, c_e=5, f_r=0, f_e=0, l_r=2, l_e=0)
    loss, grads, ginit = backend.epoch_pass(net, demands, params, 1.0, surrogate=True)
    assert np.isfinite(loss)
    assert len(grads) == len(net.layers)


@needs_fastpath
def test_training_histories_agree_across_backends(monkeypatch):
    params = CostParams(h=5, b=95, c_r=0, c_e=5, f_r=0, f_e=0, l_r=2, l_e=0)
    model = DiscreteUniform(0, 4)
    gen = np.random.default_rng(2)
    net = _random_net((3, 8, 4, 2), seed=2, init_inv=float(gen.uniform(0, 4)))
    cfg = TrainingConfig(T=20, M=6, max_epochs=25, seed=9)

    monkeypatch.setenv("DUALSOURCE_NO_FASTPATH", "1")
    slow = train(params, model, net, cfg)
    monkeypatch.delenv("DUALSOURCE_NO_FASTPATH")
    fast = train(params, model, net, cfg)

    assert fast.best_loss == pytest.approx(slow.best_loss, rel=1e-8)
    np.testing.assert_allclose(fast.history, slow.history, rtol=1e-8)
    for lf, ls in zip(fast.best_net.layers, slow.best_net.layers):
        np.testing.assert_allclose(lf.W, ls.W, rtol=1e-6, atol=1e-9)

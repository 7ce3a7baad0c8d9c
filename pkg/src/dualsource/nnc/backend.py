"""Selects the epoch computation backend at import time.

A compiled extension implements the fused simulate+backprop epoch kernel;
the numpy tape is the always-available fallback and the reference
implementation. Set DUALSOURCE_NO_FASTPATH=1 to force the numpy path.
"""
import os

import numpy as np

from ..dynamics import CostParams, SingleParams
from .graph import numpy_epoch

try:
    from . import _fastpath
except ImportError:
    _fastpath = None


def fastpath_available():
    return _fastpath is not None


def fastpath_enabled():
    return _fastpath is not None and os.environ.get("DUALSOURCE_NO_FASTPATH", "") != "1"


def epoch_pass(net, demands, params, gamma, surrogate=False, process=None):
    """One training epoch: returns (loss, [(gW, ge) per layer], init_grad)."""
    if not surrogate and fastpath_enabled():
        return _fast_epoch(net, demands, params, gamma, process)
    return numpy_epoch(net, demands, params, gamma, surrogate, process)


def _fast_epoch(net, demands, params, gamma, process):
    demands = np.ascontiguousarray(demands, dtype=np.float64)
    T = demands.shape[1]
    Ws = [np.ascontiguousarray(l.W) for l in net.layers]
    es = [np.ascontiguousarray(l.e) for l in net.layers]
    acts = np.array([1 if l.activation == "celu" else 0 for l in net.layers], dtype=np.int32)
    if process is not None and net.input_mode == "reduced_moments":
        mu = np.ascontiguousarray(process.mu[:T], dtype=np.float64)
        sigma = np.ascontiguousarray(process.sigma[:T], dtype=np.float64)
        reduced = 1
    else:
        mu = np.zeros(0)
        sigma = np.zeros(0)
        reduced = 0
    if isinstance(params, SingleParams):
        single, h, b, c_r, c_e, f_r, f_e, l_r, l_e = (
            1, params.h, params.b, params.c, 0.0, 0.0, 0.0, params.l, 0,
        )
    elif isinstance(params, CostParams):
        single, h, b, c_r, c_e, f_r, f_e, l_r, l_e = (
            0, params.h, params.b, params.c_r, params.c_e,
            params.f_r, params.f_e, params.l_r, params.l_e,
        )
    else:
        raise TypeError(f"unsupported params type {type(params).__name__}")
    loss, gWs, ges, g_init = _fastpath.epoch(
        Ws, es, acts,
        float(net.init_inventory), float(net.alpha),
        float(net.input_scale), float(net.out_scale),
        demands, mu, sigma, int(reduced), int(single),
        float(h), float(b), float(c_r), float(c_e), float(f_r), float(f_e),
        int(l_r), int(l_e), float(gamma),
    )
    return loss, list(zip(gWs, ges)), g_init

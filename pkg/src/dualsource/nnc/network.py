"""Feed-forward controller networks: architecture, forward passes, serialization.

A network maps a state vector to raw outputs; orders are the floor of the
positive part of each output (integer materialization). The initial net
inventory is itself a trainable scalar.
"""
import json
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1

# input layouts: "full" feeds (I, Q_r..., Q_e...); "reduced_moments" feeds
# (I + oldest regular pipeline entry, remaining pipeline, mu_t, sigma_t)
INPUT_MODES = ("full", "reduced_moments")


@dataclass
class Layer:
    W: np.ndarray
    e: np.ndarray
    activation: str

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.e = np.asarray(self.e, dtype=np.float64)
        if self.W.ndim != 2 or self.e.shape != (self.W.shape[0],):
            raise ValueError("weight matrix must be (out, in) with matching bias")
        if self.activation not in ("celu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class Network:
    layers: list
    init_inventory: float = 0.5
    alpha: float = 1.0
    input_scale: float = 1.0
    out_scale: float = 1.0
    input_mode: str = "full"

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.input_scale <= 0 or self.out_scale <= 0:
            raise ValueError("scales must be > 0")
        if self.input_mode not in INPUT_MODES:
            raise ValueError(f"unknown input mode {self.input_mode!r}")
        for a, b in zip(self.layers, self.layers[1:]):
            if b.W.shape[1] != a.W.shape[0]:
                raise ValueError("consecutive layer dimensions must chain")
        for lay in self.layers:
            if not (np.isfinite(lay.W).all() and np.isfinite(lay.e).all()):
                raise ValueError("parameters must be finite")

    @property
    def n_in(self):
        return self.layers[0].W.shape[1]

    @property
    def n_out(self):
        return self.layers[-1].W.shape[0]

    def copy(self):
        return Network(
            layers=[Layer(l.W.copy(), l.e.copy(), l.activation) for l in self.layers],
            init_inventory=float(self.init_inventory),
            alpha=self.alpha,
            input_scale=self.input_scale,
            out_scale=self.out_scale,
            input_mode=self.input_mode,
        )


def celu_value(x, alpha):
    """Continuously differentiable ELU: x for x>0, alpha*(exp(x/alpha)-1) below."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x, alpha * np.expm1(x / alpha))


def forward_batch(net, X):
    """Raw network outputs for a batch of state rows (no gradient recording)."""
    h = np.asarray(X, dtype=np.float64) / net.input_scale
    if h.shape[1] != net.n_in:
        raise ValueError(f"input dim {h.shape[1]} does not match network ({net.n_in})")
    for lay in net.layers:
        h = h @ lay.W.T + lay.e
        if lay.activation == "celu":
            h = celu_value(h, net.alpha)
    return h * net.out_scale


def orders_from_outputs(y):
    """Integer orders: floor of the positive part, elementwise."""
    return np.floor(np.maximum(y, 0.0))


def forward_policy(net, state_vec):
    """Orders for one state vector: an (q_r, q_e) pair for two-output nets,
    a single integer for one-output nets."""
    y = forward_batch(net, np.asarray(state_vec, dtype=np.float64)[None, :])[0]
    q = orders_from_outputs(y)
    if net.n_out == 2:
        from ..dynamics import Action

        return Action(q_r=int(q[0]), q_e=int(q[1]))
    if net.n_out == 1:
        return int(q[0])
    raise ValueError(f"unsupported output dimension {net.n_out}")


def make_network(dims, activations=None, alpha=1.0, init_inventory=0.5, input_scale=1.0,
                 out_scale=1.0, input_mode="full"):
    """Zero-initialized network with layer sizes dims=(in, h1, ..., out)."""
    if activations is None:
        activations = ["celu"] * (len(dims) - 1)
    layers = [
        Layer(np.zeros((dims[i + 1], dims[i])), np.zeros(dims[i + 1]), activations[i])
        for i in range(len(dims) - 1)
    ]
    return Network(layers, init_inventory, alpha, input_scale, out_scale, input_mode)


def synthetic_architecture(n_in):
    """Default controller for stationary instances: CELU stack tapering to 2 units."""
    return make_network((n_in, 128, 64, 32, 16, 8, 4, 2))


def empirical_architecture(n_in, input_scale, out_scale):
    """Controller for time-varying instances: 3 hidden layers of 8 CELU units."""
    return make_network(
        (n_in, 8, 8, 8, 2),
        activations=["celu", "celu", "celu", "identity"],
        input_scale=input_scale,
        out_scale=out_scale,
        input_mode="reduced_moments",
    )


def init_weights(net, rng):
    """Uniform U(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for every weight and bias."""
    out = net.copy()
    gen = rng.generator
    for lay in out.layers:
        bound = 1.0 / np.sqrt(lay.W.shape[1])
        lay.W[...] = gen.uniform(-bound, bound, size=lay.W.shape)
        lay.e[...] = gen.uniform(-bound, bound, size=lay.e.shape)
    return out


def save(net):
    """Serialize to versioned JSON bytes (row-major weights)."""
    doc = {
        "version": SCHEMA_VERSION,
        "alpha": net.alpha,
        "init_inventory": float(net.init_inventory),
        "input_scale": net.input_scale,
        "out_scale": net.out_scale,
        "input_mode": net.input_mode,
        "layers": [
            {
                "shape": list(lay.W.shape),
                "W": lay.W.ravel().tolist(),
                "e": lay.e.tolist(),
                "activation": lay.activation,
            }
            for lay in net.layers
        ],
    }
    return json.dumps(doc, sort_keys=True).encode("utf-8")


def load(payload):
    """Inverse of save(); raises ValueError on corrupt or unsupported payloads."""
    try:
        doc = json.loads(payload.decode("utf-8") if isinstance(payload, bytes) else payload)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ValueError(f"corrupt network payload: {exc}") from None
    if not isinstance(doc, dict) or doc.get("version") != SCHEMA_VERSION:
        raise ValueError("unsupported network schema version")
    try:
        layers = [
            Layer(
                np.asarray(spec["W"], dtype=np.float64).reshape(spec["shape"]),
                np.asarray(spec["e"], dtype=np.float64),
                spec["activation"],
            )
            for spec in doc["layers"]
        ]
        return Network(
            layers,
            init_inventory=float(doc["init_inventory"]),
            alpha=float(doc["alpha"]),
            input_scale=float(doc["input_scale"]),
            out_scale=float(doc["out_scale"]),
            input_mode=doc["input_mode"],
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"corrupt network payload: missing {exc}") from None

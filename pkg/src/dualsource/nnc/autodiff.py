"""Reverse-mode automatic differentiation on a flat tape of array-valued nodes.

Nodes are appended in construction order, which is a topological order by
construction (ops only reference already-built nodes). The backward pass
walks the tape once in reverse, accumulating adjoints into every node that
can reach a parameter.
"""
import numpy as np


class Node:
    __slots__ = ("idx", "op", "inputs", "value", "grad", "aux", "needs_grad")

    def __init__(self, idx, op, inputs, value, aux, needs_grad):
        self.idx = idx
        self.op = op
        self.inputs = inputs
        self.value = value
        self.grad = None
        self.aux = aux
        self.needs_grad = needs_grad

    def __repr__(self):
        shape = getattr(self.value, "shape", ())
        return f"Node({self.idx}, {self.op}, shape={shape})"


class Tape:
    def __init__(self):
        self.nodes = []

    def _emit(self, op, inputs, value, aux=None, needs_grad=None):
        if needs_grad is None:
            needs_grad = any(n.needs_grad for n in inputs)
        node = Node(len(self.nodes), op, tuple(inputs), value, aux, needs_grad)
        self.nodes.append(node)
        return node

    # leaves -----------------------------------------------------------------
    def const(self, value):
        """Gradient-free leaf (demand realizations, fixed charges)."""
        return self._emit("const", (), np.asarray(value, dtype=np.float64), needs_grad=False)

    def param(self, value):
        """Trainable leaf wrapping `value` (shared across epochs, updated in place)."""
        return self._emit("param", (), np.asarray(value, dtype=np.float64), needs_grad=True)

    # ops ---------------------------------------------------------------------
    def linear(self, x, w, e):
        """Affine map x @ W.T + e with W of shape (out, in)."""
        return self._emit("linear", (x, w, e), x.value @ w.value.T + e.value)

    def celu(self, x, alpha):
        xv = x.value
        val = np.where(xv > 0, xv, alpha * np.expm1(xv / alpha))
        return self._emit("celu", (x,), val, aux=alpha)

    def pos(self, x):
        """Positive part [x]+ with subgradient 0 at the kink."""
        return self._emit("pos", (x,), np.maximum(x.value, 0.0))

    def decouple(self, x):
        """Integer order: forward floor([x]+), backward the [x]+ gradient (1 where x>0)."""
        return self._emit("decouple", (x,), np.floor(np.maximum(x.value, 0.0)))

    def add(self, a, b):
        return self._emit("add", (a, b), a.value + b.value)

    def sub(self, a, b):
        return self._emit("sub", (a, b), a.value - b.value)

    def neg(self, a):
        return self._emit("neg", (a,), -a.value)

    def scale(self, a, c):
        return self._emit("scale", (a,), float(c) * a.value, aux=float(c))

    def stack(self, cols):
        """Pack (M,) vectors into an (M, k) matrix, one per column."""
        return self._emit("stack", tuple(cols), np.stack([c.value for c in cols], axis=1))

    def col(self, x, j):
        """Extract column j of an (M, k) matrix as an (M,) vector."""
        return self._emit("col", (x,), np.ascontiguousarray(x.value[:, j]), aux=int(j))

    def broadcast(self, p, n):
        """Replicate a scalar parameter into an (n,) vector."""
        return self._emit("broadcast", (p,), np.full(n, float(p.value)))

    def mean(self, x):
        return self._emit("mean", (x,), np.asarray(np.mean(x.value)))

    def wsum(self, terms, weights):
        """Weighted sum of scalar nodes (the loss accumulator)."""
        val = 0.0
        for t, w in zip(terms, weights):
            val += float(w) * float(t.value)
        return self._emit("wsum", tuple(terms), np.asarray(val), aux=np.asarray(weights, dtype=np.float64))

    # backward ------------------------------------------------------------
    def backward(self, root):
        """Accumulate d(root)/d(node) into .grad for every reachable node."""
        root.grad = np.ones_like(root.value)
        for node in reversed(self.nodes):
            g = node.grad
            if g is None or not node.needs_grad:
                continue
            op = node.op
            if op in ("param", "const"):
                continue
            ins = node.inputs
            if op == "linear":
                x, w, e = ins
                if x.needs_grad:
                    _acc(x, g @ w.value)
                if w.needs_grad:
                    _acc(w, g.T @ x.value)
                if e.needs_grad:
                    _acc(e, g.sum(axis=0))
            elif op == "celu":
                (x,) = ins
                alpha = node.aux
                deriv = np.where(x.value > 0, 1.0, node.value / alpha + 1.0)
                _acc(x, g * deriv)
            elif op in ("pos", "decouple"):
                (x,) = ins
                _acc(x, g * (x.value > 0))
            elif op == "add":
                a, b = ins
                if a.needs_grad:
                    _acc(a, g)
                if b.needs_grad:
                    _acc(b, g)
            elif op == "sub":
                a, b = ins
                if a.needs_grad:
                    _acc(a, g)
                if b.needs_grad:
                    _acc(b, -g)
            elif op == "neg":
                _acc(ins[0], -g)
            elif op == "scale":
                _acc(ins[0], node.aux * g)
            elif op == "stack":
                for i, c in enumerate(ins):
                    if c.needs_grad:
                        _acc(c, g[:, i])
            elif op == "col":
                (x,) = ins
                if x.grad is None:
                    x.grad = np.zeros_like(x.value)
                x.grad[:, node.aux] += g
            elif op == "broadcast":
                _acc(ins[0], np.asarray(g.sum()))
            elif op == "mean":
                (x,) = ins
                _acc(x, np.full_like(x.value, float(g) / x.value.size))
            elif op == "wsum":
                for t, w in zip(ins, node.aux):
                    if t.needs_grad:
                        _acc(t, np.asarray(float(w) * float(g)))
            else:
                raise AssertionError(f"unknown op {op}")


def _acc(node, contrib):
    if node.grad is None:
        node.grad = np.zeros_like(node.value)
    node.grad += contrib

"""Minimal reverse-mode automatic differentiation over numpy arrays.

Everything trainable in this package (encoders, CRF/SCRF potentials, the
language model) is built from the handful of ops below, so one gradient
implementation serves all losses.  Values are float64 throughout; speed
comes from keeping graphs small (short sentences), not from vectorizing
across examples.
"""
from __future__ import annotations

import numpy as np


class Node:
    """One value in the computation graph."""

    __slots__ = ("value", "parents", "grad_fn", "grad", "requires_grad", "_consumed")

    def __init__(self, value, parents=(), grad_fn=None, requires_grad=None):
        self.value = value if isinstance(value, np.ndarray) else np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.grad_fn = grad_fn
        self.grad = None
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in parents)
        self.requires_grad = requires_grad
        self._consumed = False

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    # operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, as_node(other))

    def __radd__(self, other):
        return add(as_node(other), self)

    def __sub__(self, other):
        return sub(self, as_node(other))

    def __rsub__(self, other):
        return sub(as_node(other), self)

    def __mul__(self, other):
        return mul(self, as_node(other))

    def __rmul__(self, other):
        return mul(as_node(other), self)

    def __neg__(self):
        return mul(self, constant(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


class Parameter(Node):
    """A leaf tensor whose gradient persists across backward calls."""

    __slots__ = ("name",)

    def __init__(self, value, name: str = ""):
        super().__init__(np.array(value, dtype=np.float64), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0


class ParameterStore:
    """Named parameters plus per-name optimizer slots."""

    def __init__(self):
        self.params: dict[str, Parameter] = {}
        self.frozen: set[str] = set()
        self.slots: dict[str, dict[str, np.ndarray]] = {}

    def add(self, name: str, value, frozen: bool = False) -> Parameter:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        p = Parameter(value, name=name)
        self.params[name] = p
        if frozen:
            self.frozen.add(name)
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def trainable(self):
        return [(n, p) for n, p in self.params.items() if n not in self.frozen]

    def zero_grads(self):
        for p in self.params.values():
            p.zero_grad()

    def slot(self, name: str, kind: str) -> np.ndarray:
        per = self.slots.setdefault(name, {})
        if kind not in per:
            per[kind] = np.zeros_like(self.params[name].value)
        return per[kind]

    def snap_float32(self):
        """Round every value to its float32 representation.

        Called before saving a bundle so that saved (f32) and in-memory
        values agree bitwise and inference scores survive a round-trip.
        """
        for p in self.params.values():
            p.value[...] = p.value.astype(np.float32).astype(np.float64)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {n: p.value for n, p in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        for n, a in arrays.items():
            if n not in self.params:
                raise KeyError(f"unknown parameter {n!r}")
            if self.params[n].value.shape != a.shape:
                raise ValueError(f"shape mismatch for {n!r}")
            self.params[n].value[...] = a


def as_node(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def constant(x) -> Node:
    return Node(np.asarray(x, dtype=np.float64), requires_grad=False)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def add(a: Node, b: Node) -> Node:
    def grad_fn(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)

    return Node(a.value + b.value, (a, b), grad_fn)


def sub(a: Node, b: Node) -> Node:
    def grad_fn(g):
        return _unbroadcast(g, a.value.shape), -_unbroadcast(g, b.value.shape)

    return Node(a.value - b.value, (a, b), grad_fn)


def mul(a: Node, b: Node) -> Node:
    def grad_fn(g):
        return (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        )

    return Node(a.value * b.value, (a, b), grad_fn)


def matmul(a: Node, b: Node) -> Node:
    av, bv = a.value, b.value

    def grad_fn(g):
        if av.ndim == 2 and bv.ndim == 2:
            return g @ bv.T, av.T @ g
        if av.ndim == 2 and bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        if av.ndim == 1 and bv.ndim == 2:
            return g @ bv.T, np.outer(av, g)
        raise ValueError("unsupported matmul shapes")

    return Node(av @ bv, (a, b), grad_fn)


def sum_(a: Node, axis=None, keepdims=False) -> Node:
    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g, a.value.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.value.shape).copy(),)

    return Node(a.value.sum(axis=axis, keepdims=keepdims), (a,), grad_fn)


def mean(a: Node) -> Node:
    n = a.value.size
    return mul(sum_(a), constant(1.0 / n))


def tanh(a: Node) -> Node:
    out = np.tanh(a.value)

    def grad_fn(g):
        return (g * (1.0 - out * out),)

    return Node(out, (a,), grad_fn)


def sigmoid(a: Node) -> Node:
    out = np.where(a.value >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.value))),
                   np.exp(-np.abs(a.value)) / (1.0 + np.exp(-np.abs(a.value))))

    def grad_fn(g):
        return (g * out * (1.0 - out),)

    return Node(out, (a,), grad_fn)


def exp(a: Node) -> Node:
    out = np.exp(a.value)

    def grad_fn(g):
        return (g * out,)

    return Node(out, (a,), grad_fn)


def log(a: Node) -> Node:
    def grad_fn(g):
        return (g / a.value,)

    return Node(np.log(a.value), (a,), grad_fn)


def logsumexp(a: Node, axis=None, keepdims=False) -> Node:
    m = np.max(a.value, axis=axis, keepdims=True)
    shifted = np.exp(a.value - m)
    s = shifted.sum(axis=axis, keepdims=True)
    out = m + np.log(s)
    softmax = shifted / s
    if not keepdims and axis is not None:
        out = np.squeeze(out, axis=axis)
    elif not keepdims:
        out = out.reshape(())

    def grad_fn(g):
        if axis is None:
            return (softmax * g,)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (softmax * gg,)

    return Node(out, (a,), grad_fn)


def log_softmax(a: Node, axis=-1) -> Node:
    return sub(a, logsumexp(a, axis=axis, keepdims=True))


def stack(nodes: list[Node], axis=0) -> Node:
    nodes = [as_node(n) for n in nodes]
    out = np.stack([n.value for n in nodes], axis=axis)

    def grad_fn(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(nodes)))

    return Node(out, tuple(nodes), grad_fn)


def concat(nodes: list[Node], axis=0) -> Node:
    nodes = [as_node(n) for n in nodes]
    out = np.concatenate([n.value for n in nodes], axis=axis)
    sizes = [n.value.shape[axis] for n in nodes]
    offsets = np.cumsum([0] + sizes)

    def grad_fn(g):
        slicer = [slice(None)] * g.ndim
        grads = []
        for i in range(len(nodes)):
            slicer[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(slicer)])
        return tuple(grads)

    return Node(out, tuple(nodes), grad_fn)


def getitem(a: Node, idx) -> Node:
    out = a.value[idx]
    if not isinstance(out, np.ndarray):
        out = np.asarray(out, dtype=np.float64)

    def grad_fn(g):
        acc = np.zeros_like(a.value)
        np.add.at(acc, idx, g)
        return (acc,)

    return Node(out, (a,), grad_fn)


def reshape(a: Node, shape) -> Node:
    old = a.value.shape

    def grad_fn(g):
        return (g.reshape(old),)

    return Node(a.value.reshape(shape), (a,), grad_fn)


def backward(root: Node):
    """Accumulate gradients of `root` (a scalar) into every reachable leaf."""
    if root.value.size != 1:
        raise ValueError("backward requires a scalar loss")
    if root._consumed:
        raise RuntimeError("backward already called on this graph; re-run the forward pass")
    root._consumed = True

    # iterative topological order over grad-requiring nodes
    topo: list[Node] = []
    seen: set[int] = set()
    stack_ = [(root, False)]
    while stack_:
        node, done = stack_.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))

    root.grad = np.ones_like(root.value)
    for node in reversed(topo):
        if node.grad_fn is None or node.grad is None:
            continue
        for p, g in zip(node.parents, node.grad_fn(node.grad)):
            if g is None or not p.requires_grad:
                continue
            if p.grad is None:
                p.grad = np.zeros_like(p.value)
            p.grad += g

"""Dense-matrix reverse-mode autodiff with an Adam optimizer.

Everything here operates on 2-D float64 numpy arrays. A :class:`Tape`
records operations as they execute; :meth:`Tape.backward` replays the
records in exact reverse creation order to accumulate gradients for the
registered parameters. Tapes are cheap and rebuilt per training step.

A tape is single-threaded. Node values are never mutated after creation,
so concurrent *reads* of finished tapes are safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


def as_matrix(value) -> np.ndarray:
    """Coerce to a contiguous 2-D float64 array (the Matrix convention)."""
    a = np.asarray(value, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"expected a matrix, got array of shape {a.shape}")
    return np.ascontiguousarray(a)


class Node:
    """One tape entry: an op kind, its input nodes, and the cached value."""

    __slots__ = ("op", "index", "value", "parents", "grad_fns", "param_name")

    def __init__(self, op, index, value, parents, grad_fns, param_name=None):
        self.op = op
        self.index = index
        self.value = value
        self.parents = parents
        self.grad_fns = grad_fns
        self.param_name = param_name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self):  # pragma: no cover - debugging aid
        name = f" {self.param_name!r}" if self.param_name else ""
        return f"<Node #{self.index} {self.op}{name} {self.value.shape}>"


class Tape:
    """Operation recorder for reverse-mode differentiation."""

    def __init__(self) -> None:
        self._nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, op, value, parents=(), grad_fns=(), param_name=None) -> Node:
        node = Node(op, len(self._nodes), value, tuple(parents), tuple(grad_fns), param_name)
        self._nodes.append(node)
        return node

    # -- leaves ---------------------------------------------------------

    def param(self, name: str, value) -> Node:
        """Register a trainable parameter leaf. Names must be unique per tape."""
        if any(n.param_name == name for n in self._nodes):
            raise ValueError(f"parameter {name!r} already registered on this tape")
        return self._record("param", as_matrix(value), param_name=name)

    def constant(self, value) -> Node:
        """Register a non-trainable leaf; no gradient flows into it."""
        return self._record("const", as_matrix(value))

    # -- binary ops -----------------------------------------------------

    def matmul(self, a: Node, b: Node) -> Node:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul shapes incompatible: {a.shape} x {b.shape}")
        value = a.value @ b.value
        return self._record(
            "matmul", value, (a, b),
            (lambda g: g @ b.value.T, lambda g: a.value.T @ g),
        )

    def _binary(self, op, a: Node, b: Node, value_fn, ga, gb) -> Node:
        if a.shape != b.shape:
            raise ShapeError(f"{op} requires equal shapes, got {a.shape} vs {b.shape}")
        return self._record(op, value_fn(), (a, b), (ga, gb))

    def add(self, a: Node, b: Node) -> Node:
        return self._binary("add", a, b, lambda: a.value + b.value, lambda g: g, lambda g: g)

    def sub(self, a: Node, b: Node) -> Node:
        return self._binary("sub", a, b, lambda: a.value - b.value, lambda g: g, lambda g: -g)

    def mul(self, a: Node, b: Node) -> Node:
        return self._binary(
            "mul", a, b, lambda: a.value * b.value,
            lambda g: g * b.value, lambda g: g * a.value,
        )

    def add_bias(self, x: Node, b: Node) -> Node:
        """Add a 1 x k row vector to every row of x."""
        if b.shape != (1, x.shape[1]):
            raise ShapeError(f"bias shape {b.shape} does not broadcast over {x.shape}")
        return self._record(
            "add_bias", x.value + b.value, (x, b),
            (lambda g: g, lambda g: g.sum(axis=0, keepdims=True)),
        )

    # -- elementwise ----------------------------------------------------

    def scale(self, x: Node, c: float) -> Node:
        c = float(c)
        return self._record("scale", x.value * c, (x,), (lambda g: g * c,))

    def mul_const(self, x: Node, c) -> Node:
        """Hadamard product with a constant matrix (no gradient into c)."""
        c = as_matrix(c)
        if c.shape != x.shape:
            raise ShapeError(f"mul_const shapes differ: {x.shape} vs {c.shape}")
        return self._record("mul_const", x.value * c, (x,), (lambda g: g * c,))

    def tanh(self, x: Node) -> Node:
        t = np.tanh(x.value)
        return self._record("tanh", t, (x,), (lambda g: g * (1.0 - t * t),))

    def sigmoid(self, x: Node) -> Node:
        s = expit(x.value)
        return self._record("sigmoid", s, (x,), (lambda g: g * s * (1.0 - s),))

    def relu(self, x: Node) -> Node:
        mask = x.value > 0.0
        return self._record("relu", np.where(mask, x.value, 0.0), (x,), (lambda g: g * mask,))

    def softplus(self, x: Node) -> Node:
        value = np.logaddexp(0.0, x.value)
        return self._record("softplus", value, (x,), (lambda g: g * expit(x.value),))

    def square(self, x: Node) -> Node:
        return self._record("square", x.value * x.value, (x,), (lambda g: 2.0 * g * x.value,))

    # -- structural -----------------------------------------------------

    def transpose(self, x: Node) -> Node:
        return self._record("transpose", np.ascontiguousarray(x.value.T), (x,), (lambda g: g.T,))

    def mean_rows(self, x: Node) -> Node:
        """Average the rows down to a 1 x k matrix."""
        r = x.shape[0]
        value = x.value.mean(axis=0, keepdims=True)
        return self._record(
            "mean_rows", value, (x,),
            (lambda g: np.repeat(g / r, r, axis=0),),
        )

    def sum(self, x: Node) -> Node:
        """Reduce all entries to a 1 x 1 scalar."""
        value = np.array([[x.value.sum()]])
        return self._record(
            "sum", value, (x,),
            (lambda g: np.full(x.shape, g[0, 0]),),
        )

    # -- normalizations -------------------------------------------------

    def softmax_rows(self, x: Node) -> Node:
        """Row-wise softmax, stabilized by subtracting the row max."""
        shifted = x.value - x.value.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        p = e / e.sum(axis=1, keepdims=True)

        def grad(g):
            dot = (g * p).sum(axis=1, keepdims=True)
            return p * (g - dot)

        return self._record("softmax_rows", p, (x,), (grad,))

    def layer_norm(self, x: Node, gain: Node, bias: Node, eps: float = 1e-5) -> Node:
        """Normalize each row to zero mean / unit variance, then affine."""
        k = x.shape[1]
        if gain.shape != (1, k) or bias.shape != (1, k):
            raise ShapeError(f"gain/bias must be 1x{k}, got {gain.shape} and {bias.shape}")
        mu = x.value.mean(axis=1, keepdims=True)
        var = x.value.var(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.value - mu) * inv
        value = xhat * gain.value + bias.value

        def grad_x(g):
            gh = g * gain.value
            return inv * (
                gh
                - gh.mean(axis=1, keepdims=True)
                - xhat * (gh * xhat).mean(axis=1, keepdims=True)
            )

        return self._record(
            "layer_norm", value, (x, gain, bias),
            (
                grad_x,
                lambda g: (g * xhat).sum(axis=0, keepdims=True),
                lambda g: g.sum(axis=0, keepdims=True),
            ),
        )

    # -- fused decoder op -----------------------------------------------

    def pairwise_edge_scores(self, a: Node, b: Node, u: Node) -> Node:
        """Score every ordered node pair: out[i, j] = sum_k u[k] * tanh(a[i,k] + b[j,k]).

        a and b are d x k projections of the encoder output; u is k x 1.
        """
        if a.shape != b.shape:
            raise ShapeError(f"pairwise operands differ: {a.shape} vs {b.shape}")
        if u.shape != (a.shape[1], 1):
            raise ShapeError(f"u must be {a.shape[1]}x1, got {u.shape}")
        t = np.tanh(a.value[:, None, :] + b.value[None, :, :])  # d x d x k
        uvec = u.value[:, 0]
        value = np.einsum("ijk,k->ij", t, uvec)
        sech2 = 1.0 - t * t

        return self._record(
            "pairwise_edge_scores", value, (a, b, u),
            (
                lambda g: np.einsum("ij,ijk,k->ik", g, sech2, uvec),
                lambda g: np.einsum("ij,ijk,k->jk", g, sech2, uvec),
                lambda g: np.einsum("ij,ijk->k", g, t).reshape(-1, 1),
            ),
        )

    # -- reverse pass ----------------------------------------------------

    def backward(self, loss: Node) -> dict[str, np.ndarray]:
        """Accumulate d(loss)/d(param) for every parameter on this tape.

        Parameters the loss does not depend on get zero gradients. The
        loss must be a 1 x 1 scalar node from this tape.
        """
        if loss.shape != (1, 1):
            raise ValueError(f"loss must be a 1x1 scalar, got shape {loss.shape}")
        if loss.index >= len(self._nodes) or self._nodes[loss.index] is not loss:
            raise ValueError("loss node does not belong to this tape")

        grads: dict[int, np.ndarray] = {loss.index: np.ones((1, 1))}
        param_grads: dict[str, np.ndarray] = {}
        for node in reversed(self._nodes[: loss.index + 1]):
            g = grads.pop(node.index, None)
            if g is None:
                continue
            if node.param_name is not None:
                param_grads[node.param_name] = g
            for parent, grad_fn in zip(node.parents, node.grad_fns):
                # Closures may return the upstream array or a view of it
                # (identity/transpose), so accumulation must not mutate.
                contribution = grad_fn(g)
                existing = grads.get(parent.index)
                if existing is None:
                    grads[parent.index] = contribution
                else:
                    grads[parent.index] = existing + contribution

        out: dict[str, np.ndarray] = {}
        for node in self._nodes:
            if node.param_name is not None:
                out[node.param_name] = param_grads.get(node.param_name, np.zeros(node.shape))
        return out


# -- Adam -----------------------------------------------------------------


@dataclass
class AdamState:
    """Per-parameter first/second moment accumulators plus step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    state: AdamState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update. Returns the new parameter dict."""
    state.step += 1
    t = state.step
    updated: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        if m.shape != p.shape:
            raise ShapeError(f"Adam accumulator shape {m.shape} != parameter shape {p.shape}")
        m += (1.0 - state.beta1) * (g - m)
        v += (1.0 - state.beta2) * (g * g - v)
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        updated[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return updated

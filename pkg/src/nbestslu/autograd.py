"""Reverse-mode automatic differentiation over dense float64 arrays.

The tape is deliberately small: it covers exactly the operations the
semantic decoder composes (affine maps, tanh/sigmoid nonlinearities,
softmax heads with negative log-likelihood, max pooling with argmax
routing, inverted dropout, embedding-row lookup, and vector plumbing).
Each op records a closure that routes the upstream gradient to its
inputs; ``Tensor.backward`` replays the closures in reverse topological
order, leaving gradients on every input that asked for them.

Graphs are single-use: once ``backward`` has run, the tape is released
and a fresh forward pass is required.  Parameters (leaf tensors with
``requires_grad=True``) accumulate gradients across backward calls until
``zero_grad`` is invoked, which is how mini-batch gradients are summed.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, GraphStateError, NumericFailure, ShapeMismatchError

_finite_checks = False


def set_finite_checks(enabled: bool) -> None:
    """Validate every op output for NaN/Inf (slow; meant for tests)."""
    global _finite_checks
    _finite_checks = bool(enabled)


def _checked(opname: str, data: np.ndarray) -> np.ndarray:
    if _finite_checks and not np.all(np.isfinite(data)):
        raise NumericFailure(f"{opname} produced a non-finite value")
    return data


class Tensor:
    """A float64 array plus the tape entry that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backprop", "_freed")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backprop: Callable[[np.ndarray], None] | None = None
        self._freed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.item())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape},{label} requires_grad={self.requires_grad})"

    def backward(self, upstream=None) -> None:
        """Propagate gradients from this tensor back to every graph input.

        ``upstream`` seeds the gradient at this tensor; it defaults to 1
        for scalar outputs.  After the call the tape is released.
        """
        if self._freed:
            raise GraphStateError("graph already consumed by a previous backward; run a new forward pass")
        if self._backprop is None:
            raise GraphStateError("backward requires a completed forward pass with gradient-tracked inputs")
        if upstream is None:
            if self.data.size != 1:
                raise DomainError(f"implicit upstream gradient needs a scalar output, got shape {self.data.shape}")
            upstream = np.ones_like(self.data)
        else:
            upstream = np.asarray(upstream, dtype=np.float64)
            if upstream.shape != self.data.shape:
                raise ShapeMismatchError(
                    f"upstream gradient shape {upstream.shape} does not match output shape {self.data.shape}"
                )

        # Post-order DFS over the recorded graph; reversed, it is a valid
        # topological order (each node handled before any of its inputs).
        order: list[Tensor] = []
        seen: set[int] = {id(self)}
        frames = [(self, iter(self._parents))]
        while frames:
            node, parents = frames[-1]
            pushed = False
            for parent in parents:
                if parent._backprop is not None and id(parent) not in seen:
                    seen.add(id(parent))
                    frames.append((parent, iter(parent._parents)))
                    pushed = True
                    break
            if not pushed:
                order.append(node)
                frames.pop()

        self.grad = upstream.copy() if self.grad is None else self.grad + upstream
        for node in reversed(order):
            node._backprop(node.grad)
            node._parents = ()
            node._backprop = None
            node._freed = True
            if node is not self:
                node.grad = None


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backprop, opname: str) -> Tensor:
    out = Tensor(_checked(opname, data))
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backprop = backprop
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


# ---------------------------------------------------------------------------
# primitive operations
# ---------------------------------------------------------------------------

def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``weight @ x + bias`` for a vector input.

    Backward: d_weight = outer(g, x), d_x = weight.T @ g, d_bias = g.
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if (
        weight.ndim != 2
        or x.ndim != 1
        or bias.ndim != 1
        or weight.shape[1] != x.shape[0]
        or weight.shape[0] != bias.shape[0]
    ):
        raise ShapeMismatchError(
            f"affine shapes do not conform: weight {weight.shape} @ x {x.shape} + bias {bias.shape}"
        )
    out = weight.data @ x.data + bias.data

    def backprop(g: np.ndarray) -> None:
        if weight.requires_grad:
            _accumulate(weight, np.outer(g, x.data))
        if x.requires_grad:
            _accumulate(x, weight.data.T @ g)
        if bias.requires_grad:
            _accumulate(bias, g)

    return _make(out, (x, weight, bias), backprop, "affine")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product: [m,n] @ [n] -> [m] or [m,n] @ [n,p] -> [m,p]."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul shapes do not conform: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backprop(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, np.outer(g, b.data) if b.ndim == 1 else g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _make(out, (a, b), backprop, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"add shapes do not conform: {a.shape} + {b.shape}")
    out = a.data + b.data

    def backprop(g: np.ndarray) -> None:
        _accumulate(a, g)
        _accumulate(b, g)

    return _make(out, (a, b), backprop, "add")


def add_bias_rows(m: Tensor, v: Tensor) -> Tensor:
    """Add a vector to every row of a matrix."""
    m, v = as_tensor(m), as_tensor(v)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeMismatchError(f"add_bias_rows shapes do not conform: {m.shape} + {v.shape}")
    out = m.data + v.data[None, :]

    def backprop(g: np.ndarray) -> None:
        _accumulate(m, g)
        if v.requires_grad:
            _accumulate(v, g.sum(axis=0))

    return _make(out, (m, v), backprop, "add_bias_rows")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two same-shape tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"mul shapes do not conform: {a.shape} * {b.shape}")
    out = a.data * b.data

    def backprop(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g * b.data)
        if b.requires_grad:
            _accumulate(b, g * a.data)

    return _make(out, (a, b), backprop, "mul")


def scale(t: Tensor, factor: float) -> Tensor:
    """Multiply a tensor by a python scalar (the scalar gets no gradient)."""
    t = as_tensor(t)
    factor = float(factor)
    out = t.data * factor

    def backprop(g: np.ndarray) -> None:
        _accumulate(t, g * factor)

    return _make(out, (t,), backprop, "scale")


def add_n(parts: Sequence[Tensor]) -> Tensor:
    """Sum a sequence of same-shape tensors, left to right."""
    if not parts:
        raise DomainError("add_n needs at least one term")
    parts = tuple(as_tensor(p) for p in parts)
    shape = parts[0].shape
    for p in parts[1:]:
        if p.shape != shape:
            raise ShapeMismatchError(f"add_n shapes do not conform: {shape} vs {p.shape}")
    out = parts[0].data.copy()
    for p in parts[1:]:
        out += p.data

    def backprop(g: np.ndarray) -> None:
        for p in parts:
            _accumulate(p, g)

    return _make(out, parts, backprop, "add_n")


def tanh(t: Tensor) -> Tensor:
    """Elementwise hyperbolic tangent; derivative is 1 - tanh(x)^2."""
    t = as_tensor(t)
    out = np.tanh(t.data)

    def backprop(g: np.ndarray) -> None:
        _accumulate(t, g * (1.0 - out * out))

    return _make(out, (t,), backprop, "tanh")


def sigmoid(t: Tensor) -> Tensor:
    """Elementwise logistic sigmoid; derivative is s(x)(1 - s(x))."""
    t = as_tensor(t)
    # Split by sign so exp never overflows.
    x = t.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backprop(g: np.ndarray) -> None:
        _accumulate(t, g * out * (1.0 - out))

    return _make(out, (t,), backprop, "sigmoid")


def softmax(logits: Tensor) -> Tensor:
    """Stable softmax over a vector of logits.

    The maximum logit is subtracted before exponentiation, so arbitrarily
    large inputs cannot overflow, and the argmax of the output always
    equals the argmax of the input.
    """
    logits = as_tensor(logits)
    if logits.ndim != 1 or logits.size == 0:
        raise DomainError(f"softmax needs a non-empty vector of logits, got shape {logits.shape}")
    shifted = logits.data - logits.data.max()
    exps = np.exp(shifted)
    probs = exps / exps.sum()

    def backprop(g: np.ndarray) -> None:
        _accumulate(logits, probs * (g - float(g @ probs)))

    return _make(probs, (logits,), backprop, "softmax")


def nll_loss(probs: Tensor, target: int) -> Tensor:
    """Negative log-likelihood of ``target`` under a probability vector."""
    probs = as_tensor(probs)
    if probs.ndim != 1:
        raise DomainError(f"nll_loss needs a probability vector, got shape {probs.shape}")
    target = int(target)
    if not 0 <= target < probs.size:
        raise DomainError(f"target {target} out of range for {probs.size} classes")
    p = probs.data[target]
    out = np.asarray(-np.log(p))

    def backprop(g: np.ndarray) -> None:
        contribution = np.zeros_like(probs.data)
        contribution[target] = -float(g) / p
        _accumulate(probs, contribution)

    return _make(out, (probs,), backprop, "nll_loss")


def max_pool(t: Tensor) -> tuple[Tensor, int]:
    """Maximum of a vector plus the index it came from.

    The index is what routes the gradient: backward delivers the upstream
    gradient to that single position and zero everywhere else.
    """
    t = as_tensor(t)
    if t.ndim != 1 or t.size == 0:
        raise DomainError(f"max_pool needs a non-empty vector, got shape {t.shape}")
    idx = int(np.argmax(t.data))
    out = np.asarray(t.data[idx])

    def backprop(g: np.ndarray) -> None:
        contribution = np.zeros_like(t.data)
        contribution[idx] = float(g)
        _accumulate(t, contribution)

    return _make(out, (t,), backprop, "max_pool"), idx


def columnwise_max(m: Tensor) -> Tensor:
    """Per-column maximum of a matrix (pooling every feature map at once)."""
    m = as_tensor(m)
    if m.ndim != 2 or m.shape[0] == 0:
        raise DomainError(f"columnwise_max needs a non-empty matrix, got shape {m.shape}")
    idx = np.argmax(m.data, axis=0)
    cols = np.arange(m.shape[1])
    out = m.data[idx, cols]

    def backprop(g: np.ndarray) -> None:
        contribution = np.zeros_like(m.data)
        contribution[idx, cols] = g
        _accumulate(m, contribution)

    return _make(out, (m,), backprop, "columnwise_max")


def concat1d(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate vectors; backward slices the gradient back apart."""
    if not parts:
        raise DomainError("concat1d needs at least one part")
    parts = tuple(as_tensor(p) for p in parts)
    for p in parts:
        if p.ndim != 1:
            raise ShapeMismatchError(f"concat1d needs vectors, got shape {p.shape}")
    out = np.concatenate([p.data for p in parts])
    offsets = np.cumsum([0] + [p.size for p in parts])

    def backprop(g: np.ndarray) -> None:
        for p, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            _accumulate(p, g[start:stop])

    return _make(out, parts, backprop, "concat1d")


def embedding_row(table: Tensor, index: int) -> Tensor:
    """Row lookup into a [rows, dim] parameter; backward scatters into it."""
    table = as_tensor(table)
    if table.ndim != 2:
        raise ShapeMismatchError(f"embedding_row needs a matrix, got shape {table.shape}")
    index = int(index)
    if not 0 <= index < table.shape[0]:
        raise DomainError(f"row {index} out of range for table with {table.shape[0]} rows")
    out = table.data[index].copy()

    def backprop(g: np.ndarray) -> None:
        contribution = np.zeros_like(table.data)
        contribution[index] = g
        _accumulate(table, contribution)

    return _make(out, (table,), backprop, "embedding_row")


TRAIN = "train"
INFER = "infer"


def dropout_apply(t: Tensor, rate: float, mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: mask then rescale by 1/(1-rate) in training mode.

    Inference mode is the identity, so no rescaling is ever needed at
    decode time.  Backward multiplies by the same mask used forward.
    """
    t = as_tensor(t)
    rate = float(rate)
    if not 0.0 <= rate < 1.0:
        raise DomainError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode not in (TRAIN, INFER):
        raise DomainError(f"dropout mode must be '{TRAIN}' or '{INFER}', got {mode!r}")
    if mode == INFER or rate == 0.0:
        return t
    if rng is None:
        raise DomainError("training-mode dropout needs a random generator")
    keep = 1.0 - rate
    mask = (rng.random(t.shape) >= rate).astype(np.float64) / keep
    out = t.data * mask

    def backprop(g: np.ndarray) -> None:
        _accumulate(t, g * mask)

    return _make(out, (t,), backprop, "dropout")

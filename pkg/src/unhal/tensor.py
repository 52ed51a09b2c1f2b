"""Dense tensors with reverse-mode automatic differentiation.

Every operation in :mod:`unhal.ops` produces a new ``Tensor`` that remembers
its parent tensors and a closure computing parent gradients from its own.
``backward()`` on a scalar loss walks this implicit graph exactly once, in
reverse topological order, and accumulates gradients into the ``grad``
buffers of tensors with ``requires_grad=True``.

Rules enforced here:

* gradients flow only from a scalar loss;
* a second ``backward()`` through an already-consumed graph is rejected
  (higher-order gradients are unsupported);
* parameters listed in ``backward(params=...)`` that do not influence the
  loss receive exact zero gradients rather than none;
* inside a ``no_grad()`` block no graph is recorded, so inference costs no
  extra memory.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import GraphError

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


class no_grad:
    """Context manager disabling graph recording on the current thread."""

    def __enter__(self):
        self._prev = grad_enabled()
        _state.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state.grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_grad_fn",
                 "_op", "_consumed")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._grad_fn = None
        self._op = "leaf"
        self._consumed = False

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return (f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, "
                f"requires_grad={self.requires_grad}, op={self._op!r})")

    # -- graph ---------------------------------------------------------

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, params=None) -> None:
        """Reverse-mode pass from this scalar.

        ``params``, when given, is an iterable of trainable leaves that must
        all end up with a grad buffer; leaves unreachable from this loss get
        exact zeros.
        """
        if self.size != 1:
            raise GraphError(
                f"backward requires a scalar loss, got shape {self.shape}")
        if self._consumed:
            raise GraphError(
                "backward already ran on this graph; rebuild the forward "
                "pass before differentiating again")

        # Iterative post-order DFS; subtrees that cannot require grad are
        # pruned because requires_grad propagates forward through every op.
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._grad_fn is None:
                continue
            if node._consumed:
                raise GraphError(
                    "graph node already consumed by a previous backward")
            node._consumed = True
            grads = node._grad_fn(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                _accumulate(parent, g)
        self._consumed = True

        if params is not None:
            for p in params:
                if p.requires_grad and p.grad is None:
                    p.grad = np.zeros_like(p.data)

    # -- convenience operators (full op set lives in unhal.ops) ---------

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other):
        from . import ops
        return ops.add(self, self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, self._coerce(other))

    def __rsub__(self, other):
        from . import ops
        return ops.sub(self._coerce(other), self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.sub(self._coerce(0.0), self)


def _accumulate(tensor: Tensor, g: np.ndarray) -> None:
    if g.shape != tensor.data.shape:
        raise GraphError(
            f"gradient shape {g.shape} does not match tensor shape "
            f"{tensor.data.shape} (op {tensor._op!r})")
    if tensor.grad is None:
        # copy: g may be a read-only broadcast view owned by the op
        tensor.grad = np.array(g, dtype=tensor.data.dtype, copy=True)
    else:
        tensor.grad += g


def make_node(op: str, data: np.ndarray, parents, grad_fn) -> Tensor:
    """Create a graph node.

    ``grad_fn(output_grad) -> tuple`` must return one gradient array (or
    None) per parent, aligned with ``parents``. When grad recording is off
    or no parent requires grad, a plain constant tensor is returned. Exposed
    so tests and extensions can define custom ops.
    """
    track = grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    out._op = op
    if track:
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    return out

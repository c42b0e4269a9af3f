"""Dense float64 tensor with reverse-mode gradient support.

Every op in :mod:`nn.functional` returns a new :class:`Tensor` holding its
parents and a closure that pushes the output gradient back to them.
:meth:`Tensor.backward` walks that graph in reverse topological order.
"""
import logging
from typing import Callable, List, Optional, Sequence

import numpy as np

from config import config
from utils.errors import NonDifferentiableError, NonFiniteError

logger = logging.getLogger(__name__)

_debug = config.DEBUG


def set_debug(enabled: bool) -> None:
    """Toggle finite-value checks on every op output."""
    global _debug
    _debug = bool(enabled)


def debug_enabled() -> bool:
    return _debug


class Tensor:
    """Node of the computation graph.

    Attributes:
        data: float64 values
        grad: Accumulated gradient, same shape as ``data`` (``None`` until backward)
        requires_grad: Whether gradients flow to this tensor
        op: Name of the op that produced it (``leaf`` for inputs and parameters)
    """

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        op: str = "leaf",
        name: str = "",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.parents = tuple(parents)
        self.op = op
        self.name = name
        self.differentiable = True
        self.backward_fn: Optional[Callable[[np.ndarray], None]] = None

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return not self.parents

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if grad.shape != self.data.shape:
            grad = np.broadcast_to(grad, self.data.shape)
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(self)/d(leaf) into every leaf that requires grad.

        Args:
            grad: Seed gradient; defaults to 1 for a single-element tensor

        Raises:
            ValueError: If no seed is given for a tensor with more than one element
            NonDifferentiableError: If the graph passes through a non-differentiable op
        """
        if not self.requires_grad:
            return
        if grad is None:
            if self.size != 1:
                raise ValueError(f"backward() needs a seed gradient for shape {self.shape}")
            grad = np.ones_like(self.data)
        order = _topological_order(self)
        for node in order:
            if not node.is_leaf:
                node.grad = None
        self.grad = np.asarray(grad, dtype=np.float64).reshape(self.shape).copy()
        for node in reversed(order):
            if node.is_leaf or node.grad is None:
                continue
            if not node.differentiable:
                raise NonDifferentiableError(f"Cannot differentiate through op '{node.op}'")
            if node.backward_fn is not None:
                node.backward_fn(node.grad)

    # operator sugar; the ops themselves live in nn.functional
    def __add__(self, other):
        from nn import functional as F

        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from nn import functional as F

        return F.sub(self, other)

    def __rsub__(self, other):
        from nn import functional as F

        return F.sub(other, self)

    def __mul__(self, other):
        from nn import functional as F

        return F.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from nn import functional as F

        return F.mul(self, -1.0)

    def __matmul__(self, other):
        from nn import functional as F

        return F.matmul(self, other)


def _topological_order(root: Tensor) -> List[Tensor]:
    """Parents before children; iterative so deep recurrences do not hit the recursion limit."""
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def make_result(
    data: np.ndarray,
    parents: Sequence[Tensor],
    op: str,
    backward_fn: Optional[Callable[[np.ndarray], None]] = None,
    differentiable: bool = True,
) -> Tensor:
    """Wrap an op output; attach ``backward_fn`` only when a parent needs grad."""
    if _debug and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"Op '{op}' produced non-finite values")
    requires_grad = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires_grad, parents=parents if requires_grad else (), op=op)
    out.differentiable = differentiable
    if requires_grad:
        out.backward_fn = backward_fn
    return out

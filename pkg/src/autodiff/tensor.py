"""
Tensor and graph plumbing of the reverse-mode differentiation core.

A `Tensor` wraps a float64 numpy array. Every differentiable op is a `Function`
subclass; applying it records a node (operation tag, inputs, saved context) on the
output tensor whenever one of the inputs requires a gradient. `backward` walks the
recorded graph in reverse topological order, visiting each node exactly once.
"""

from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import ContractError, DimensionError, NumericError

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]


class Function:
    """A differentiable operation. Subclasses implement `forward` and `backward`."""

    tag = "function"

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs
        self.saved: Dict[str, Any] = {}

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        """Return d(loss)/d(input) for every input, given d(loss)/d(output)."""
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        check_finite(out, cls.tag)
        requires_grad = any(t.requires_grad for t in inputs)
        return Tensor(out, requires_grad=requires_grad, _node=fn if requires_grad else None)


class Tensor:
    """Dense float64 array participating in a differentiation graph."""

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        _node: Optional[Function] = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self._node = _node

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def node(self) -> Optional[Function]:
        return self._node

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # Glue arithmetic used to assemble losses; the ops live in ops.py.
    def __add__(self, other: Union["Tensor", float]) -> "Tensor":
        from src.autodiff import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Union["Tensor", float]) -> "Tensor":
        from src.autodiff import ops

        return ops.add(self, ops.scale(other, -1.0) if isinstance(other, Tensor) else -other)

    def __mul__(self, other: Union[float, np.ndarray]) -> "Tensor":
        from src.autodiff import ops

        return ops.scale(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        from src.autodiff import ops

        return ops.scale(self, -1.0)

    def sum(self) -> "Tensor":
        from src.autodiff import ops

        return ops.total(self)

    def reshape(self, *shape: int) -> "Tensor":
        from src.autodiff import ops

        return ops.reshape(self, shape)


def parameter(data: ArrayLike, name: Optional[str] = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def constant(data: ArrayLike) -> Tensor:
    return Tensor(data, requires_grad=False)


def check_finite(array: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(array)):
        bad = int(np.size(array) - np.count_nonzero(np.isfinite(array)))
        raise NumericError(f"{where}: {bad} non-finite value(s) in output of shape {np.shape(array)}")


class Gradients:
    """Result of `backward`: gradient arrays keyed by tensor identity."""

    def __init__(self, grads: Dict[int, np.ndarray], tensors: Dict[int, Tensor]):
        self._grads = grads
        self._tensors = tensors

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        grad = self._grads.get(id(tensor))
        if grad is None:
            return np.zeros_like(tensor.data)
        return grad

    def __contains__(self, tensor: Tensor) -> bool:
        return id(tensor) in self._grads

    def for_params(self, params: Iterable[Tensor]) -> List[np.ndarray]:
        return [self[p] for p in params]


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    seen = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in seen:
            continue
        seen.add(id(tensor))
        stack.append((tensor, True))
        if tensor._node is not None:
            for parent in reversed(tensor._node.inputs):
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor) -> Gradients:
    """
    Propagate d(loss)/d(loss)=1 through the graph.

    Every leaf tensor with requires_grad reached from `loss` gets a fresh `.grad`;
    leaves that were detached with `stop_gradient` are not part of the graph.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")

    order = _topological_order(loss)
    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    tensors = {id(t): t for t in order}

    for tensor in reversed(order):
        node = tensor._node
        grad = grads.get(id(tensor))
        if node is None or grad is None:
            continue
        input_grads = node.backward(grad)
        for parent, parent_grad in zip(node.inputs, input_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            if parent_grad.shape != parent.data.shape:
                raise DimensionError(
                    f"{node.tag}: gradient shape {parent_grad.shape} != input shape {parent.data.shape}"
                )
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + parent_grad
            else:
                grads[key] = parent_grad

    for tensor in order:
        if tensor._node is None and tensor.requires_grad:
            tensor.grad = grads.get(id(tensor), np.zeros_like(tensor.data))
    return Gradients(grads, tensors)

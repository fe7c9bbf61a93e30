"""
Reverse-mode differentiation over dense float64 tensors.

A Graph records every operation as a Node in insertion order. The vector-Jacobian
product of each operation is written with the same graph operations, so the adjoints
produced by a backward pass are ordinary nodes and can be differentiated again.
"""

from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from typing import Any

import numpy as np
import numpy.typing as npt

from right_reasons.errors.autodiff import GraphMismatchError, NonScalarRootError, ShapeMismatchError

Tensor = npt.NDArray[np.float64]
Index = tuple[Any, ...]
VectorJacobianProduct = Callable[["Node", "Node"], tuple["Node | None", ...]]


def as_tensor(value: npt.ArrayLike) -> Tensor:
    """Copies `value` into a read-only float64 array."""
    array = np.array(value, dtype=np.float64)
    array.setflags(write=False)
    return array


class Node:
    """A recorded value together with the operation that produced it."""

    __slots__ = ("grad", "graph", "id", "op", "parents", "requires_grad", "value", "vjp")

    def __init__(
        self,
        graph: "Graph",
        node_id: int,
        op: str,
        parents: tuple[int, ...],
        value: Tensor,
        requires_grad: bool,
        vjp: VectorJacobianProduct | None = None,
    ) -> None:
        self.graph = graph
        self.id = node_id
        self.op = op
        self.parents = parents
        self.value = value
        self.requires_grad = requires_grad
        self.vjp = vjp
        self.grad: Tensor | None = None

    def __repr__(self) -> str:
        return f"Node(id={self.id}, op={self.op!r}, shape={self.shape})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def _lift(self, other: "Node | npt.ArrayLike") -> "Node":
        return other if isinstance(other, Node) else self.graph.constant(other)

    def __add__(self, other: "Node | npt.ArrayLike") -> "Node":
        return add(self, self._lift(other))

    def __radd__(self, other: npt.ArrayLike) -> "Node":
        return add(self._lift(other), self)

    def __mul__(self, other: "Node | npt.ArrayLike") -> "Node":
        return multiply(self, self._lift(other))

    def __rmul__(self, other: npt.ArrayLike) -> "Node":
        return multiply(self._lift(other), self)

    def __matmul__(self, other: "Node") -> "Node":
        return matmul(self, other)

    def __neg__(self) -> "Node":
        return scale(self, -1.0)


class Graph:
    """
    An append-only store of nodes.

    Parents always precede their children, so reverse insertion order is a valid
    topological order for backward passes. A graph has a single writer; separate
    graphs may be built concurrently.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.variable_ids: set[int] = set()

    def __len__(self) -> int:
        return len(self.nodes)

    def _append(self, op: str, parents: tuple[int, ...], value: Tensor, requires_grad: bool, vjp: VectorJacobianProduct | None) -> Node:
        node = Node(self, len(self.nodes), op, parents, value, requires_grad, vjp if requires_grad else None)
        self.nodes.append(node)
        return node

    def variable(self, value: npt.ArrayLike) -> Node:
        """Adds a differentiable leaf."""
        node = self._append("variable", (), as_tensor(value), requires_grad=True, vjp=None)
        self.variable_ids.add(node.id)
        return node

    def constant(self, value: npt.ArrayLike) -> Node:
        """Adds a leaf that gradients never flow into."""
        return self._append("constant", (), as_tensor(value), requires_grad=False, vjp=None)

    def record(self, op: str, inputs: Sequence[Node], forward: Callable[..., npt.ArrayLike], vjp: VectorJacobianProduct) -> Node:
        """
        Applies `forward` to the values of `inputs` and records the result.

        Args:
            op: The operation tag, used in error messages.
            inputs: Parent nodes, all belonging to this graph.
            forward: Function of the parent values returning the new value.
            vjp: Function of (output adjoint, output node) returning one adjoint node (or None) per parent.

        Raises:
            GraphMismatchError: If a parent belongs to another graph.
            ShapeMismatchError: If `forward` rejects the operand shapes.
        """
        for node in inputs:
            if node.graph is not self:
                msg = f"Operand of '{op}' (node {node.id}) belongs to a different graph"
                raise GraphMismatchError(msg)
        try:
            value = forward(*(node.value for node in inputs))
        except ValueError as e:
            raise ShapeMismatchError(op, [node.shape for node in inputs]) from e
        requires_grad = any(node.requires_grad for node in inputs)
        return self._append(op, tuple(node.id for node in inputs), as_tensor(value), requires_grad, vjp)

    @contextmanager
    def scratch(self) -> Iterator[None]:
        """Discards every node recorded inside the block once it exits."""
        mark = len(self.nodes)
        try:
            yield
        finally:
            del self.nodes[mark:]


def _broadcast_result(op: str, a: Node, b: Node) -> tuple[int, ...]:
    try:
        shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeMismatchError(op, [a.shape, b.shape]) from e
    # only one operand may be expanded (bias rows, per-row columns, scalars)
    if shape not in (a.shape, b.shape):
        raise ShapeMismatchError(op, [a.shape, b.shape])
    return shape


def _sum_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    if x.shape == shape:
        return x
    lead = x.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(lead + i for i, size in enumerate(shape) if size == 1 and x.shape[lead + i] != 1)
    return x.sum(axis=axes, keepdims=True).reshape(shape)


def add(a: Node, b: Node) -> Node:
    _broadcast_result("add", a, b)

    def vjp(g: Node, _out: Node) -> tuple[Node | None, ...]:
        return (
            sum_to(g, a.shape) if a.requires_grad else None,
            sum_to(g, b.shape) if b.requires_grad else None,
        )

    return a.graph.record("add", [a, b], np.add, vjp)


def multiply(a: Node, b: Node) -> Node:
    _broadcast_result("multiply", a, b)

    def vjp(g: Node, _out: Node) -> tuple[Node | None, ...]:
        return (
            sum_to(multiply(g, b), a.shape) if a.requires_grad else None,
            sum_to(multiply(g, a), b.shape) if b.requires_grad else None,
        )

    return a.graph.record("multiply", [a, b], np.multiply, vjp)


def matmul(a: Node, b: Node) -> Node:
    if len(a.shape) != 2 or len(b.shape) != 2 or a.shape[1] != b.shape[0]:  # noqa: PLR2004
        raise ShapeMismatchError("matmul", [a.shape, b.shape])

    def vjp(g: Node, _out: Node) -> tuple[Node | None, ...]:
        return (
            matmul(g, transpose(b)) if a.requires_grad else None,
            matmul(transpose(a), g) if b.requires_grad else None,
        )

    return a.graph.record("matmul", [a, b], np.matmul, vjp)


def transpose(a: Node) -> Node:
    if len(a.shape) != 2:  # noqa: PLR2004
        raise ShapeMismatchError("transpose", [a.shape])
    return a.graph.record("transpose", [a], np.transpose, lambda g, _out: (transpose(g),))


def relu(a: Node) -> Node:
    def vjp(g: Node, _out: Node) -> tuple[Node | None, ...]:
        # the gate is a constant, so second derivatives through it vanish
        gate = g.graph.constant((a.value > 0).astype(np.float64))
        return (multiply(g, gate),)

    return a.graph.record("relu", [a], lambda x: np.maximum(x, 0.0), vjp)


def log(a: Node) -> Node:
    return a.graph.record("log", [a], np.log, lambda g, _out: (multiply(g, reciprocal(a)),))


def reciprocal(a: Node) -> Node:
    return a.graph.record("reciprocal", [a], np.reciprocal, lambda g, out: (multiply(g, scale(square(out), -1.0)),))


def exp(a: Node) -> Node:
    return a.graph.record("exp", [a], np.exp, lambda g, out: (multiply(g, out),))


def log_softmax(a: Node) -> Node:
    """Log of the exp-normalized last axis, computed in max-shifted log-sum-exp form."""

    def forward(x: Tensor) -> Tensor:
        shifted = x - x.max(axis=-1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    def vjp(g: Node, out: Node) -> tuple[Node | None, ...]:
        totals = broadcast_to(sum_to(g, (*out.shape[:-1], 1)), out.shape)
        return (add(g, scale(multiply(exp(out), totals), -1.0)),)

    return a.graph.record("log_softmax", [a], forward, vjp)


def reduce_sum(a: Node) -> Node:
    return a.graph.record("sum", [a], np.sum, lambda g, _out: (broadcast_to(g, a.shape),))


def sum_to(a: Node, shape: tuple[int, ...]) -> Node:
    """Sums `a` down to a shape it could have been broadcast from."""
    if a.shape == shape:
        return a
    try:
        expanded = np.broadcast_shapes(a.shape, shape)
    except ValueError as e:
        raise ShapeMismatchError("sum_to", [a.shape, shape]) from e
    if expanded != a.shape:
        raise ShapeMismatchError("sum_to", [a.shape, shape])
    return a.graph.record("sum_to", [a], lambda x: _sum_to(x, shape), lambda g, _out: (broadcast_to(g, a.shape),))


def broadcast_to(a: Node, shape: tuple[int, ...]) -> Node:
    if a.shape == shape:
        return a
    return a.graph.record("broadcast_to", [a], lambda x: np.broadcast_to(x, shape), lambda g, _out: (sum_to(g, a.shape),))


def square(a: Node) -> Node:
    return a.graph.record("square", [a], np.square, lambda g, _out: (multiply(g, scale(a, 2.0)),))


def scale(a: Node, factor: float) -> Node:
    return a.graph.record("scale", [a], lambda x: x * factor, lambda g, _out: (scale(g, factor),))


def select(a: Node, index: Index) -> Node:
    """Picks entries of `a` with numpy indexing; the adjoint scatters back."""
    return a.graph.record("select", [a], lambda x: np.array(x[index]), lambda g, _out: (scatter(g, index, a.shape),))


def scatter(a: Node, index: Index, shape: tuple[int, ...]) -> Node:
    def forward(x: Tensor) -> Tensor:
        out = np.zeros(shape)
        np.add.at(out, index, x)
        return out

    return a.graph.record("scatter", [a], forward, lambda g, _out: (select(g, index),))


def grad_nodes(root: Node, wrt: Sequence[Node]) -> list[Node]:
    """
    Differentiates a scalar node and keeps the adjoints recorded in the graph.

    The returned nodes may be used inside further computation, including another
    call to `grad_nodes` or `gradient`.

    Args:
        root: A node of shape ().
        wrt: Nodes of the same graph to differentiate with respect to.

    Returns:
        One adjoint node per entry of `wrt`. Nodes the root does not depend on get a zero constant.

    Raises:
        NonScalarRootError: If `root` is not a scalar.
        GraphMismatchError: If a node of `wrt` belongs to another graph.
    """
    graph = root.graph
    if root.shape != ():
        msg = f"Gradient root must be a scalar, got shape {root.shape} from '{root.op}'"
        raise NonScalarRootError(msg)
    for node in wrt:
        if node.graph is not graph:
            msg = f"Node {node.id} is not part of the root's graph"
            raise GraphMismatchError(msg)

    wanted = {node.id for node in wrt}
    found: dict[int, Node] = {}
    adjoints: dict[int, Node] = {root.id: graph.constant(np.ones(()))}

    for node_id in range(root.id, -1, -1):
        adjoint = adjoints.pop(node_id, None)
        if adjoint is None:
            continue
        if node_id in wanted:
            found[node_id] = adjoint
        node = graph.nodes[node_id]
        if node.vjp is None:
            continue
        for parent_id, parent_adjoint in zip(node.parents, node.vjp(adjoint, node), strict=True):
            if parent_adjoint is None:
                continue
            previous = adjoints.get(parent_id)
            adjoints[parent_id] = parent_adjoint if previous is None else add(previous, parent_adjoint)

    return [found[node.id] if node.id in found else graph.constant(np.zeros(node.shape)) for node in wrt]


def gradient(root: Node, wrt: Sequence[Node]) -> list[Tensor]:
    """
    Differentiates a scalar node and returns detached tensors.

    Nodes recorded during the backward pass are discarded afterwards; the gradient is
    also stored on each `wrt` node's `grad` slot.
    """
    with root.graph.scratch():
        values = [node.value for node in grad_nodes(root, wrt)]
    for node, value in zip(wrt, values, strict=True):
        node.grad = value
    return values

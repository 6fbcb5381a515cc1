"""Reverse-mode automatic differentiation over a dynamically recorded tape.

The tape is rebuilt on every forward pass (define-by-run). Each node holds
a 2-D float64 value; gradients accumulate by addition into zero-initialized
buffers during a backward sweep in strictly decreasing node-id order.
Kernel matrices entering quadratic forms are constants: no gradient flows
into them.
"""

from __future__ import annotations

from typing import Callable, List, Optional

import numpy as np

from .errors import DimensionError, GraphError
from .tensor import Tensor


class Node:
    __slots__ = ("id", "op", "parents", "value", "grad", "requires_grad", "backward_fn")

    def __init__(self, id, op, parents, value, requires_grad, backward_fn):
        self.id = id
        self.op = op
        self.parents = parents
        self.value = value
        self.grad: Optional[Tensor] = None
        self.requires_grad = requires_grad
        # backward_fn(grad_out) -> list of per-parent gradient contributions
        # (None for parents that do not require grad).
        self.backward_fn = backward_fn


class Tape:
    """Append-only computation graph for one training step."""

    def __init__(self):
        self.nodes: List[Node] = []
        self.leaf_ids: List[int] = []

    def _node(self, nid: int) -> Node:
        try:
            return self.nodes[nid]
        except IndexError:
            raise GraphError(f"unknown node id {nid}") from None

    def record(self, op: str, parents: List[int], value: Tensor,
               backward_fn: Optional[Callable] = None) -> int:
        """Append a node computed from existing nodes and return its id."""
        for p in parents:
            if not 0 <= p < len(self.nodes):
                raise GraphError(f"unknown input id {p}")
        requires = any(self.nodes[p].requires_grad for p in parents)
        nid = len(self.nodes)
        self.nodes.append(Node(nid, op, list(parents), value, requires, backward_fn))
        return nid

    def constant(self, value: Tensor) -> int:
        nid = len(self.nodes)
        self.nodes.append(Node(nid, "const", [], value, False, None))
        return nid

    def leaf(self, value: Tensor) -> int:
        """Register a trainable parameter node."""
        nid = len(self.nodes)
        self.nodes.append(Node(nid, "leaf", [], value, True, None))
        self.leaf_ids.append(nid)
        return nid

    def value(self, nid: int) -> Tensor:
        return self._node(nid).value

    # -- differentiable operations ------------------------------------

    def add(self, a: int, b: int) -> int:
        """Elementwise addition; a 1xk second operand broadcasts over rows."""
        av, bv = self.value(a), self.value(b)
        if av.shape != bv.shape and not (bv.shape == (1, av.shape[1])):
            raise DimensionError(f"add shape mismatch: {av.shape} + {bv.shape}")
        bias = av.shape != bv.shape

        def bwd(g):
            gb = g.sum(axis=0, keepdims=True) if bias else g
            return [g, gb]

        return self.record("add", [a, b], av + bv, bwd)

    def sub(self, a: int, b: int) -> int:
        av, bv = self.value(a), self.value(b)
        if av.shape != bv.shape:
            raise DimensionError(f"sub shape mismatch: {av.shape} - {bv.shape}")
        return self.record("sub", [a, b], av - bv, lambda g: [g, -g])

    def mul(self, a: int, b: int) -> int:
        av, bv = self.value(a), self.value(b)
        if av.shape != bv.shape:
            raise DimensionError(f"mul shape mismatch: {av.shape} * {bv.shape}")
        return self.record("mul", [a, b], av * bv, lambda g: [g * bv, g * av])

    def matmul(self, a: int, b: int) -> int:
        av, bv = self.value(a), self.value(b)
        if av.shape[1] != bv.shape[0]:
            raise DimensionError(f"matmul shape mismatch: {av.shape} x {bv.shape}")
        # Skipping gradients for constant operands saves a large matmul per
        # layer when inputs are data constants.
        na = self._node(a).requires_grad
        nb = self._node(b).requires_grad
        return self.record(
            "matmul", [a, b], av @ bv,
            lambda g: [g @ bv.T if na else None, av.T @ g if nb else None],
        )

    def relu(self, a: int) -> int:
        av = self.value(a)
        mask = av > 0.0  # subgradient at 0 is 0
        return self.record("relu", [a], av * mask, lambda g: [g * mask])

    def square(self, a: int) -> int:
        av = self.value(a)
        return self.record("square", [a], av * av, lambda g: [2.0 * av * g])

    def sum(self, a: int) -> int:
        av = self.value(a)
        out = np.array([[av.sum()]])
        return self.record("sum", [a], out, lambda g: [np.full_like(av, g[0, 0])])

    def mean(self, a: int) -> int:
        av = self.value(a)
        out = np.array([[av.mean()]])
        return self.record(
            "mean", [a], out, lambda g: [np.full_like(av, g[0, 0] / av.size)]
        )

    def scale(self, a: int, c: float) -> int:
        av = self.value(a)
        return self.record("scale", [a], c * av, lambda g: [c * g])

    def quadratic_form(self, r: int, K: Tensor) -> int:
        """r^T K r with K held constant (no gradient into K)."""
        rv = self.value(r)
        if rv.shape[1] != 1 or K.shape != (rv.shape[0], rv.shape[0]):
            raise DimensionError(
                f"quadratic_form shape mismatch: r {rv.shape}, K {K.shape}"
            )
        out = rv.T @ K @ rv
        return self.record(
            "quadratic_form", [r], out,
            lambda g: [g[0, 0] * ((K + K.T) @ rv)],
        )

    # -- backward pass -------------------------------------------------

    def backward(self, root: int) -> None:
        """Populate ``grad`` on every node contributing to a scalar root."""
        root_node = self._node(root)
        if root_node.value.shape != (1, 1):
            raise GraphError(
                f"backward root must be 1x1, got {root_node.value.shape}"
            )
        for node in self.nodes:
            node.grad = np.zeros_like(node.value)
        root_node.grad = np.ones((1, 1))
        for node in reversed(self.nodes[: root + 1]):
            if node.backward_fn is None or not node.requires_grad:
                continue
            contribs = node.backward_fn(node.grad)
            for pid, contrib in zip(node.parents, contribs):
                if contrib is not None:
                    self.nodes[pid].grad += contrib

    def grad(self, nid: int) -> Tensor:
        g = self._node(nid).grad
        if g is None:
            raise GraphError("backward has not been run")
        return g

"""Reverse-mode differentiation over numpy arrays.

A :class:`Tape` records every primitive operation applied to tracked
values, keeping the intermediates needed for one reverse sweep.  The
sweep (:func:`backward`) propagates the derivative of a scalar loss to
every entry of the designated parameter leaf.

The primitive set is deliberately small: fused affine/ReLU layers for
the network, plus a generic :meth:`Tape.record` hook that lets callers
add operations with custom vector-Jacobian products (stencils, forward
operators, smoothed norms).  Each node's vjp maps the incoming gradient
to one contribution per parent, so fused ops share intermediates.
"""

from __future__ import annotations

import numpy as np


class Arena:
    """Reusable buffers for loops that rebuild the same graph every step.

    Buffers are keyed by (shape, dtype) and handed out in request order,
    so after :meth:`reset` an identical sequence of requests returns the
    same memory.  Anything taken from an arena is only valid until the
    next reset.
    """

    def __init__(self):
        self._buffers: dict = {}
        self._cursor: dict = {}

    def reset(self):
        self._cursor.clear()

    def empty(self, shape, dtype=np.float64) -> np.ndarray:
        key = (tuple(shape), np.dtype(dtype))
        idx = self._cursor.get(key, 0)
        self._cursor[key] = idx + 1
        stack = self._buffers.setdefault(key, [])
        if idx == len(stack):
            stack.append(np.empty(shape, dtype))
        return stack[idx]


class Node:
    """One recorded value plus the links needed to backpropagate."""

    __slots__ = ("value", "parents", "vjp", "grad")

    def __init__(self, value, parents=(), vjp=None):
        self.value = value
        self.parents = parents  # tuple of Node
        self.vjp = vjp  # maps incoming grad -> tuple of per-parent grads
        self.grad = None


class Tape:
    """Records primitive operations for one forward pass."""

    def __init__(self, arena: Arena | None = None):
        self._order: list[Node] = []
        self._param: Node | None = None
        self._param_grad: np.ndarray | None = None
        self._arena = arena

    def _empty(self, shape, dtype=np.float64) -> np.ndarray:
        if self._arena is not None:
            return self._arena.empty(shape, dtype)
        return np.empty(shape, dtype)

    # -- construction ------------------------------------------------

    def parameter(self, theta: np.ndarray) -> Node:
        """Register the parameter vector whose gradient backward() returns."""
        if self._param is not None:
            raise ValueError("tape already has a parameter leaf")
        node = self._track(np.asarray(theta, dtype=np.float64), (), None)
        self._param = node
        return node

    def record(self, value, parents, vjp) -> Node:
        """Record a custom primitive.

        ``vjp`` receives the gradient of the loss w.r.t. ``value`` and must
        return one gradient contribution per node in ``parents``, each
        matching that parent's shape.
        """
        return self._track(value, tuple(parents), vjp)

    def _track(self, value, parents, vjp) -> Node:
        node = Node(value, parents, vjp)
        self._order.append(node)
        return node

    # -- primitives ----------------------------------------------------

    def segment(self, node: Node, start: int, stop: int, shape=None) -> Node:
        """Contiguous slice of a flat vector, optionally reshaped (a view)."""
        out = node.value[start:stop]
        if shape is not None:
            out = out.reshape(shape)

        if node is self._param:
            # Parameter slices accumulate straight into the sweep's flat
            # gradient buffer instead of materializing full-size scatters.
            def vjp(g):
                self._param_grad[start:stop] += g.reshape(stop - start)
                return (None,)

        else:

            def vjp(g):
                full = np.zeros_like(node.value)
                full[start:stop] = g.reshape(stop - start)
                return (full,)

        return self._track(out, (node,), vjp)

    def affine(self, x, w: Node, b: Node, relu: bool = False) -> Node:
        """x @ w + b, optionally through ReLU; x may be a constant array.

        The pre-activation is never kept: the ReLU mask is read off the
        output, and the derivative at exactly 0 is 0.
        """
        x_node = x if isinstance(x, Node) else None
        xv = x.value if x_node is not None else np.asarray(x)
        out = np.matmul(xv, w.value, out=self._empty((xv.shape[0], w.value.shape[1])))
        out += b.value
        if relu:
            np.maximum(out, 0.0, out=out)
            mask = np.greater(out, 0.0, out=self._empty(out.shape, bool))

            def vjp(g, xv=xv, wv=w.value, mask=mask):
                dz = np.multiply(g, mask, out=self._empty(g.shape))
                dw = xv.T @ dz
                db = dz.sum(axis=0)
                if x_node is not None:
                    dx = np.matmul(dz, wv.T, out=self._empty((g.shape[0], wv.shape[0])))
                    return (dx, dw, db)
                return (dw, db)

        else:

            def vjp(g, xv=xv, wv=w.value):
                dw = xv.T @ g
                db = g.sum(axis=0)
                if x_node is not None:
                    dx = np.matmul(g, wv.T, out=self._empty((g.shape[0], wv.shape[0])))
                    return (dx, dw, db)
                return (dw, db)

        parents = (x_node, w, b) if x_node is not None else (w, b)
        return self._track(out, parents, vjp)

    def reshape(self, node: Node, shape) -> Node:
        out = node.value.reshape(shape)
        orig = node.value.shape
        return self._track(out, (node,), lambda g: (g.reshape(orig),))

    def sum_abs(self, node: Node) -> Node:
        """Scalar sum of |entries|; subgradient at 0 taken as 0."""
        out = float(np.abs(node.value).sum())
        sgn = np.sign(node.value)
        return self._track(out, (node,), lambda g: (g * sgn,))

    def sum_square(self, node: Node) -> Node:
        out = float(np.square(node.value).sum())
        return self._track(out, (node,), lambda g: (g * (2.0 * node.value),))

    def max_abs(self, node: Node) -> Node:
        """Infinity norm with unit subgradient on the first maximal entry."""
        flat = np.abs(node.value).ravel()
        k = int(np.argmax(flat))  # argmax returns the first maximum
        out = float(flat[k])
        sgn = float(np.sign(node.value.ravel()[k]))

        def vjp(g):
            full = np.zeros_like(node.value)
            full.ravel()[k] = g * sgn
            return (full,)

        return self._track(out, (node,), vjp)

    def affine_combine(self, terms) -> Node:
        """Weighted sum of scalar nodes: sum(coeff * node)."""
        coeffs = tuple(float(c) for c, _ in terms)
        nodes = tuple(n for _, n in terms)
        out = float(sum(c * n.value for c, n in zip(coeffs, nodes)))
        return self._track(out, nodes, lambda g: tuple(c * g for c in coeffs))

    # -- reverse sweep -------------------------------------------------

    def loss(self) -> Node:
        if not self._order:
            raise ValueError("empty tape")
        return self._order[-1]


def backward(tape: Tape) -> np.ndarray:
    """Run one reverse sweep and return d(loss)/d(parameter).

    The last recorded node must be a scalar; entries of the parameter
    vector the loss never touched get gradient 0.  One sweep per tape.
    """
    head = tape.loss()
    if np.ndim(head.value) != 0:
        raise ValueError("tape is not terminated in a scalar loss")
    if tape._param is None:
        raise ValueError("tape has no parameter leaf")

    tape._param_grad = np.zeros_like(tape._param.value)
    head.grad = 1.0
    for node in reversed(tape._order):
        if node.grad is None or not node.parents:
            continue
        contribs = node.vjp(node.grad)
        for parent, contrib in zip(node.parents, contribs):
            if contrib is None:
                continue
            parent.grad = contrib if parent.grad is None else parent.grad + contrib

    grad = tape._param_grad
    if tape._param.grad is not None:
        # Contributions that reached the leaf directly (e.g. its norm).
        grad = grad + tape._param.grad
    return np.asarray(grad, dtype=np.float64)

"""Reverse-mode automatic differentiation over Matrix values.

Graphs are built eagerly: every operation returns a Node holding the result
and a backward rule over its parents. Nodes carry a global creation-sequence
id, and backward() replays reachable gradient-bearing nodes in descending
id order; creation order is a topological order, so each node runs after all
its consumers. Each backward pass computes its own gradient flow and adds it
into .grad, so repeated calls accumulate (PyTorch-style) until zero_grads.
Graphs are built and differentiated on one thread.
"""

from __future__ import annotations

import itertools
from array import array

from .backend import K
from .errors import ContractError, InputError, ShapeError
from .matrix import Matrix

_seq = itertools.count()

LAYER_NORM_EPS = 1e-5


class Node:
    __slots__ = ("value", "grad", "op", "parents", "requires_grad", "_backward", "_seq_id")

    def __init__(self, value: Matrix, parents=(), op="leaf", requires_grad=False,
                 backward=None):
        self.value = value
        self.grad = None
        self.op = op
        self.parents = parents
        self.requires_grad = requires_grad
        self._backward = backward
        self._seq_id = next(_seq)

    def __repr__(self):
        return f"Node({self.op}, {self.value.rows}x{self.value.cols})"


def constant(m: Matrix) -> Node:
    return Node(m)


def parameter(m: Matrix) -> Node:
    return Node(m, op="parameter", requires_grad=True)


def stop_gradient(a: Node) -> Node:
    """Same value, no parents: gradients never flow past this node."""
    return Node(a.value, op="stop_gradient")


def add(a: Node, b: Node) -> Node:
    """Elementwise sum; b may also be a single row broadcast over a's rows."""
    va, vb = a.value, b.value
    if va.rows == vb.rows and va.cols == vb.cols:
        data = K.add(va.data, vb.data)
        bcast = False
    elif vb.rows == 1 and vb.cols == va.cols:
        data = K.add_rowbcast(va.data, va.rows, va.cols, vb.data)
        bcast = True
    else:
        raise ShapeError(f"cannot add {va.rows}x{va.cols} and {vb.rows}x{vb.cols}")
    req = a.requires_grad or b.requires_grad

    def backward(g: Matrix, emit):
        if a.requires_grad:
            emit(a, g.data)
        if b.requires_grad:
            emit(b, K.colsum(g.data, g.rows, g.cols) if bcast else g.data)

    return Node(Matrix(va.rows, va.cols, data), (a, b), "add", req,
                backward if req else None)


def matmul(a: Node, b: Node) -> Node:
    va, vb = a.value, b.value
    if va.cols != vb.rows:
        raise ShapeError(f"cannot multiply {va.rows}x{va.cols} by {vb.rows}x{vb.cols}")
    data = K.matmul(va.data, va.rows, va.cols, vb.data, vb.cols)
    req = a.requires_grad or b.requires_grad

    def backward(g: Matrix, emit):
        if a.requires_grad:
            bt = K.transpose(vb.data, vb.rows, vb.cols)
            emit(a, K.matmul(g.data, g.rows, g.cols, bt, vb.rows))
        if b.requires_grad:
            at = K.transpose(va.data, va.rows, va.cols)
            emit(b, K.matmul(at, va.cols, va.rows, g.data, g.cols))

    return Node(Matrix(va.rows, vb.cols, data), (a, b), "matmul", req,
                backward if req else None)


def transpose(a: Node) -> Node:
    v = a.value
    req = a.requires_grad

    def backward(g: Matrix, emit):
        emit(a, K.transpose(g.data, g.rows, g.cols))

    return Node(Matrix(v.cols, v.rows, K.transpose(v.data, v.rows, v.cols)),
                (a,), "transpose", req, backward if req else None)


def scale(a: Node, s: float) -> Node:
    v = a.value
    req = a.requires_grad

    def backward(g: Matrix, emit):
        emit(a, K.scale(g.data, s))

    return Node(Matrix(v.rows, v.cols, K.scale(v.data, s)), (a,), "scale", req,
                backward if req else None)


def softmax_rows(a: Node) -> Node:
    v = a.value
    y = K.softmax_rows(v.data, v.rows, v.cols)
    req = a.requires_grad

    def backward(g: Matrix, emit):
        emit(a, K.softmax_rows_backward(y, g.data, g.rows, g.cols))

    return Node(Matrix(v.rows, v.cols, y), (a,), "softmax_rows", req,
                backward if req else None)


def gelu(a: Node) -> Node:
    v = a.value
    req = a.requires_grad

    def backward(g: Matrix, emit):
        emit(a, K.gelu_backward(v.data, g.data))

    return Node(Matrix(v.rows, v.cols, K.gelu(v.data)), (a,), "gelu", req,
                backward if req else None)


def layer_norm_rows(x: Node, gain: Node, offset: Node, eps: float = LAYER_NORM_EPS) -> Node:
    v = x.value
    if gain.value.shape != (1, v.cols) or offset.value.shape != (1, v.cols):
        raise ShapeError(
            f"gain and offset must be 1x{v.cols}, got "
            f"{gain.value.rows}x{gain.value.cols} and "
            f"{offset.value.rows}x{offset.value.cols}")
    y, xhat, istd = K.layer_norm_rows(v.data, v.rows, v.cols, gain.value.data,
                                      offset.value.data, eps)
    req = x.requires_grad or gain.requires_grad or offset.requires_grad

    def backward(g: Matrix, emit):
        gx, ggain, goffset = K.layer_norm_rows_backward(
            g.data, xhat, istd, gain.value.data, g.rows, g.cols)
        if x.requires_grad:
            emit(x, gx)
        if gain.requires_grad:
            emit(gain, ggain)
        if offset.requires_grad:
            emit(offset, goffset)

    return Node(Matrix(v.rows, v.cols, y), (x, gain, offset), "layer_norm_rows",
                req, backward if req else None)


def concat_cols(parts) -> Node:
    parts = list(parts)
    if not parts:
        raise ContractError("concat_cols needs at least one part")
    r = parts[0].value.rows
    widths = []
    for p in parts:
        if p.value.rows != r:
            raise ShapeError(
                f"concat_cols row mismatch: {p.value.rows}x{p.value.cols} vs {r} rows")
        widths.append(p.value.cols)
    total = sum(widths)
    out = K.zeros(r * total)
    off = 0
    for p, w in zip(parts, widths):
        K.put_cols(out, r, total, off, p.value.data, w)
        off += w
    req = any(p.requires_grad for p in parts)

    def backward(g: Matrix, emit):
        off = 0
        for p, w in zip(parts, widths):
            if p.requires_grad:
                emit(p, K.slice_cols(g.data, r, total, off, w))
            off += w

    return Node(Matrix(r, total, out), tuple(parts), "concat_cols", req,
                backward if req else None)


def embed(table: Node, ids) -> Node:
    """Row lookup into an embedding table; gradients scatter-add back."""
    ids = list(ids)
    v = table.value
    for t in ids:
        if not 0 <= t < v.rows:
            raise InputError(f"token id {t} out of range for table with {v.rows} rows")
    data = K.gather_rows(v.data, ids, v.cols)
    req = table.requires_grad

    def backward(g: Matrix, emit):
        gt = K.zeros(v.rows * v.cols)
        K.scatter_add_rows(gt, ids, g.data, v.cols)
        emit(table, gt)

    return Node(Matrix(len(ids), v.cols, data), (table,), "embed", req,
                backward if req else None)


def cross_entropy_loss(logits: Node, targets) -> Node:
    """Mean negative log-likelihood of the target class per row; 1x1 result."""
    v = logits.value
    targets = list(targets)
    if len(targets) != v.rows:
        raise ShapeError(f"{len(targets)} targets for {v.rows} rows of logits")
    for t in targets:
        if not 0 <= t < v.cols:
            raise InputError(f"label {t} out of range for {v.cols} classes")
    loss, probs = K.cross_entropy(v.data, v.rows, v.cols, targets)
    req = logits.requires_grad

    def backward(g: Matrix, emit):
        coef = g.data[0] / v.rows
        emit(logits, K.cross_entropy_backward(probs, v.rows, v.cols, targets, coef))

    return Node(Matrix(1, 1, array("d", [loss])), (logits,), "cross_entropy_loss",
                req, backward if req else None)


_SEED = array("d", [1.0])


def backward(loss: Node):
    """Add dloss/dnode into .grad for every reachable node with requires_grad.

    Each call computes an independent gradient flow seeded with 1, so
    repeated calls accumulate into .grad until zero_grads.
    """
    v = loss.value
    if v.rows != 1 or v.cols != 1:
        raise ContractError(f"backward needs a 1x1 loss, got {v.rows}x{v.cols}")
    if not loss.requires_grad:
        return

    flow = {}

    def emit(node, data):
        buf = flow.get(id(node))
        if buf is None:
            nv = node.value
            buf = Matrix(nv.rows, nv.cols, K.zeros(nv.rows * nv.cols))
            flow[id(node)] = buf
        K.acc(buf.data, data)

    emit(loss, _SEED)

    seen = set()
    stack = [loss]
    nodes = []
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if node.requires_grad:
            nodes.append(node)
        stack.extend(node.parents)
    nodes.sort(key=lambda n: n._seq_id, reverse=True)

    for node in nodes:
        g = flow.get(id(node))
        if g is None:
            continue
        if node.grad is None:
            nv = node.value
            node.grad = Matrix(nv.rows, nv.cols, K.zeros(nv.rows * nv.cols))
        K.acc(node.grad.data, g.data)
        if node._backward is not None:
            node._backward(g, emit)


def zero_grads(params):
    for p in params:
        p.grad = None

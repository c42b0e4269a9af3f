"""Differentiable ops over :class:`nn.tensor.Tensor`.

Graph ops take constant scipy CSR matrices; only dense tensors carry gradients.
Batched graph ops address rows through ``offsets`` (start row of each graph in
a block-diagonal batch, plus a final end row).
"""
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from nn.tensor import Tensor, as_tensor, make_result
from utils.errors import ShapeError


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# --- arithmetic ---


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad: np.ndarray) -> None:
        a.accumulate(_unbroadcast(grad, a.shape))
        b.accumulate(_unbroadcast(grad, b.shape))

    return make_result(a.data + b.data, (a, b), "add", backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad: np.ndarray) -> None:
        a.accumulate(_unbroadcast(grad, a.shape))
        b.accumulate(_unbroadcast(-grad, b.shape))

    return make_result(a.data - b.data, (a, b), "sub", backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad: np.ndarray) -> None:
        a.accumulate(_unbroadcast(grad * b.data, a.shape))
        b.accumulate(_unbroadcast(grad * a.data, b.shape))

    return make_result(a.data * b.data, (a, b), "mul", backward)


def matmul(a, b) -> Tensor:
    """2-D matrix product."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(grad: np.ndarray) -> None:
        a.accumulate(grad @ b.data.T)
        b.accumulate(a.data.T @ grad)

    return make_result(a.data @ b.data, (a, b), "matmul", backward)


def spmm(matrix: sp.spmatrix, x) -> Tensor:
    """Constant sparse matrix times dense tensor."""
    x = as_tensor(x)
    if matrix.shape[1] != x.shape[0]:
        raise ShapeError(f"spmm shape mismatch: {matrix.shape} @ {x.shape}")
    csr = sp.csr_matrix(matrix)

    def backward(grad: np.ndarray) -> None:
        x.accumulate(np.asarray(csr.T @ grad))

    return make_result(np.asarray(csr @ x.data), (x,), "spmm", backward)


def reduce_sum(x, axis: Optional[int] = None) -> Tensor:
    x = as_tensor(x)

    def backward(grad: np.ndarray) -> None:
        g = grad if axis is None else np.expand_dims(grad, axis)
        x.accumulate(np.broadcast_to(g, x.shape))

    return make_result(np.sum(x.data, axis=axis), (x,), "sum", backward)


def mean(x, axis: Optional[int] = None) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else x.shape[axis]
    return mul(reduce_sum(x, axis), 1.0 / max(count, 1))


# --- shape ---


def reshape(x, shape: Tuple[int, ...]) -> Tensor:
    x = as_tensor(x)

    def backward(grad: np.ndarray) -> None:
        x.accumulate(grad.reshape(x.shape))

    return make_result(x.data.reshape(shape), (x,), "reshape", backward)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def backward(grad: np.ndarray) -> None:
        for part, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            index = [slice(None)] * grad.ndim
            index[axis] = slice(lo, hi)
            part.accumulate(grad[tuple(index)])

    return make_result(np.concatenate([p.data for p in parts], axis=axis), parts, "concat", backward)


def gather_rows(x, index: np.ndarray) -> Tensor:
    """Rows ``x[index]``; an index of -1 yields a zero row."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    valid = index >= 0
    out = np.zeros((index.shape[0],) + x.shape[1:])
    out[valid] = x.data[index[valid]]

    def backward(grad: np.ndarray) -> None:
        full = np.zeros_like(x.data)
        np.add.at(full, index[valid], grad[valid])
        x.accumulate(full)

    return make_result(out, (x,), "gather_rows", backward)


def reduce_max(x, axis: int) -> Tensor:
    """Maximum along ``axis``; the gradient goes to the first maximal entry."""
    x = as_tensor(x)
    arg = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    values = np.take_along_axis(x.data, arg, axis=axis)

    def backward(grad: np.ndarray) -> None:
        full = np.zeros_like(x.data)
        np.put_along_axis(full, arg, np.expand_dims(grad, axis), axis=axis)
        x.accumulate(full)

    return make_result(np.squeeze(values, axis=axis), (x,), "max", backward)


def floor(x) -> Tensor:
    """Integer rounding; recorded but not differentiable."""
    x = as_tensor(x)
    return make_result(np.floor(x.data), (x,), "floor", differentiable=False)


# --- activations ---


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = expit(x.data)

    def backward(grad: np.ndarray) -> None:
        x.accumulate(grad * out * (1.0 - out))

    return make_result(out, (x,), "sigmoid", backward)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)

    def backward(grad: np.ndarray) -> None:
        x.accumulate(grad * (1.0 - out * out))

    return make_result(out, (x,), "tanh", backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    positive = x.data > 0

    def backward(grad: np.ndarray) -> None:
        x.accumulate(grad * positive)

    return make_result(np.where(positive, x.data, 0.0), (x,), "relu", backward)


def identity(x) -> Tensor:
    return as_tensor(x)


ACTIVATIONS: Dict[str, Callable[[Tensor], Tensor]] = {
    "identity": identity,
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
}


def activation(name: str) -> Callable[[Tensor], Tensor]:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"Unknown activation: {name}. Choose from {sorted(ACTIVATIONS)}") from None


# --- layers as functions ---


def dense_forward(x, weight, bias, act: str = "identity") -> Tensor:
    """``act(x W + b)`` for ``x`` of shape ``(b, i)`` and ``W`` of shape ``(i, o)``."""
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"dense input {x.shape} does not match weight {weight.shape}")
    return activation(act)(add(matmul(x, weight), bias))


def gru_step(x, h, params: Dict[str, Tensor]) -> Tensor:
    """One GRU update.

    ``z = σ([x, h] W_z + b_z)``, ``r = σ([x, h] W_r + b_r)``,
    ``h̃ = tanh([x, r ⊙ h] W_h + b_h)``, ``h' = (1 - z) ⊙ h + z ⊙ h̃``.

    Args:
        x: ``(b, f)`` input
        h: ``(b, H)`` previous state
        params: ``W_z, b_z, W_r, b_r, W_h, b_h`` with ``W_*`` of shape ``(f + H, H)``
    """
    x, h = as_tensor(x), as_tensor(h)
    width = x.shape[1] + h.shape[1]
    if x.shape[0] != h.shape[0] or params["W_z"].shape != (width, h.shape[1]):
        raise ShapeError(f"GRU shapes do not match: x {x.shape}, h {h.shape}, W_z {params['W_z'].shape}")
    xh = concat([x, h], axis=1)
    z = sigmoid(add(matmul(xh, params["W_z"]), params["b_z"]))
    r = sigmoid(add(matmul(xh, params["W_r"]), params["b_r"]))
    candidate = tanh(add(matmul(concat([x, mul(r, h)], axis=1), params["W_h"]), params["b_h"]))
    return add(mul(sub(1.0, z), h), mul(z, candidate))


def run_gru(sequence: np.ndarray, params: Dict[str, Tensor], hidden: int) -> Tensor:
    """Final GRU state over a ``(b, steps, f)`` constant sequence, starting from zero."""
    h = Tensor(np.zeros((sequence.shape[0], hidden)))
    for t in range(sequence.shape[1]):
        h = gru_step(Tensor(sequence[:, t, :]), h, params)
    return h


def propagation_matrix(adjacency: sp.spmatrix, edge_weights: Optional[np.ndarray] = None) -> sp.csr_matrix:
    """Row operator of the mean-aggregation convolution.

    Row ``i`` holds ``α_ij / max(1, |N_i|)`` for each neighbour ``j``; a node with
    no neighbours keeps a 1 on its diagonal. ``edge_weights`` align with the
    upper-triangle edges of ``adjacency`` in row-major order.

    Raises:
        ShapeError: If the weight count differs from the edge count
    """
    pattern = sp.csr_matrix(adjacency, dtype=np.float64)
    pattern.sort_indices()
    n = pattern.shape[0]
    upper = sp.triu(pattern, k=1).tocoo()
    if edge_weights is None:
        values = np.ones(upper.nnz)
    else:
        values = np.asarray(edge_weights, dtype=np.float64)
        if values.shape != (upper.nnz,):
            raise ShapeError(f"Expected {upper.nnz} edge weights, got {values.shape[0]}")
    order = np.lexsort((upper.col, upper.row))
    rows, cols = upper.row[order], upper.col[order]
    weighted = sp.csr_matrix(
        (np.concatenate([values, values]), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
        shape=(n, n),
    )
    counts = np.bincount(np.concatenate([rows, cols]), minlength=n)
    scale = 1.0 / np.maximum(counts, 1)
    operator = sp.diags(scale) @ weighted + sp.diags((counts == 0).astype(np.float64))
    operator = sp.csr_matrix(operator)
    operator.sort_indices()
    return operator


def graph_conv(h, adjacency: sp.spmatrix, weight, edge_weights: Optional[np.ndarray] = None, act: str = "identity") -> Tensor:
    """``h'_i = act( (1/max(1,|N_i|)) Σ_j α_ij h_j W )`` with an isolated-node fallback ``h_i W``."""
    return graph_conv_prepared(h, propagation_matrix(adjacency, edge_weights), weight, act)


def graph_conv_prepared(h, operator: sp.csr_matrix, weight, act: str = "identity") -> Tensor:
    h = as_tensor(h)
    if h.shape[0] != operator.shape[0]:
        raise ShapeError(f"{h.shape[0]} feature rows for a {operator.shape[0]}-node graph")
    return activation(act)(spmm(operator, matmul(h, weight)))


def _single(offsets: Optional[np.ndarray], rows: int) -> np.ndarray:
    return np.array([0, rows], dtype=np.int64) if offsets is None else np.asarray(offsets, dtype=np.int64)


def sort_pool_index(values: np.ndarray, k: int, offsets: Optional[np.ndarray] = None) -> np.ndarray:
    """Row index of the sort-pooled batch (``-1`` marks zero padding).

    Within each graph rows are ordered by descending last channel, ties broken
    by the next channel to the left, then by original row order.
    """
    if k < 1:
        raise ShapeError(f"K must be >= 1, got {k}")
    offsets = _single(offsets, values.shape[0])
    picked: List[np.ndarray] = []
    for lo, hi in zip(offsets[:-1], offsets[1:]):
        block = values[lo:hi]
        keys = [np.arange(hi - lo)] + [-block[:, c] for c in range(block.shape[1])]
        order = np.lexsort(keys)[:k] + lo
        picked.append(np.concatenate([order, np.full(k - order.shape[0], -1, dtype=np.int64)]))
    return np.concatenate(picked) if picked else np.zeros(0, dtype=np.int64)


def sort_pool(h, k: int, offsets: Optional[np.ndarray] = None) -> Tensor:
    """Top-``k`` rows per graph after sorting; graphs with fewer rows are zero padded.

    Returns:
        ``(graphs * k, d)`` tensor
    """
    h = as_tensor(h)
    return gather_rows(h, sort_pool_index(h.data, k, offsets))


def conv1d_readout(x, weight, bias, k: int, width: int = 1, act: str = "identity") -> Tensor:
    """1-D convolution over the row-major flattening of each ``(k, d)`` block, then max over positions.

    The kernel spans ``width`` rows (``width * d`` values) and moves one row at a time.

    Args:
        x: ``(graphs * k, d)`` sort-pooled rows
        weight: ``(channels, width * d)`` kernel
        bias: ``(channels,)``
        k: Rows per graph
        width: Kernel width in rows

    Returns:
        ``(graphs, channels)``
    """
    x = as_tensor(x)
    d = x.shape[1]
    if width > k or weight.shape[1] != width * d or x.shape[0] % k:
        raise ShapeError(f"conv1d kernel {weight.shape} does not fit blocks of {k}x{d}")
    graphs = x.shape[0] // k
    positions = k - width + 1
    index = (
        np.arange(graphs)[:, None, None] * k
        + np.arange(positions)[None, :, None]
        + np.arange(width)[None, None, :]
    ).reshape(-1)
    windows = reshape(gather_rows(x, index), (graphs * positions, width * d))
    response = activation(act)(add(matmul(windows, transpose(weight)), bias))
    return reduce_max(reshape(response, (graphs, positions, weight.shape[0])), axis=1)


def transpose(x) -> Tensor:
    x = as_tensor(x)

    def backward(grad: np.ndarray) -> None:
        x.accumulate(grad.T)

    return make_result(x.data.T, (x,), "transpose", backward)


def two_node_pool(h, offsets: Optional[np.ndarray] = None) -> Tensor:
    """Concatenate the two target rows (first two rows) of each graph.

    Raises:
        ShapeError: If a graph has fewer than two rows
    """
    h = as_tensor(h)
    offsets = _single(offsets, h.shape[0])
    starts = offsets[:-1]
    if (np.diff(offsets) < 2).any():
        raise ShapeError("two_node_pool needs at least two rows per graph")
    index = np.stack([starts, starts + 1], axis=1).reshape(-1)
    return reshape(gather_rows(h, index), (starts.shape[0], 2 * h.shape[1]))


# --- loss ---


def bce_with_logits(logits, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy of ``sigmoid(logits)`` against 0/1 labels."""
    logits = as_tensor(logits)
    y = np.asarray(labels, dtype=np.float64).reshape(logits.shape)
    z = logits.data
    losses = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    count = max(z.size, 1)

    def backward(grad: np.ndarray) -> None:
        logits.accumulate(grad * (expit(z) - y) / count)

    return make_result(np.asarray(losses.sum() / count), (logits,), "bce_with_logits", backward)


def gradient_check(fn: Callable[[], Tensor], params: Iterable[Tensor], eps: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``fn`` rebuilds the scalar output from the current parameter values.
    Relative error per parameter is ``|g_a - g_n| / max(|g_a| + |g_n|, 1e-12)``
    measured in the Euclidean norm.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    fn().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, g_a in zip(params, analytic):
        g_n = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.shape[0]):
            saved = flat[i]
            flat[i] = saved + eps
            up = fn().item()
            flat[i] = saved - eps
            down = fn().item()
            flat[i] = saved
            g_n.reshape(-1)[i] = (up - down) / (2 * eps)
        scale = np.linalg.norm(g_a) + np.linalg.norm(g_n)
        worst = max(worst, float(np.linalg.norm(g_a - g_n) / max(scale, 1e-12)))
    return worst

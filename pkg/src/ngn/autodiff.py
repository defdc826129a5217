"""Minimal reverse-mode differentiation on dense numpy buffers, plus Adam.

Each Tensor records its parents and a backward rule; the tape is this
implicit graph. ``backward`` topologically sorts from the scalar loss and
accumulates gradients; a tape is consumed by one backward pass, and running
a second pass on the same loss raises.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, ShapeError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def _track(self) -> bool:
        return self.requires_grad or any(p.requires_grad for p in self._parents)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __add__(self, other):
        return add(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __mul__(self, scalar: float):
        return scale(self, scalar)

    __rmul__ = __mul__

    def __repr__(self):
        return f"Tensor(shape={self.shape}, grad={'set' if self.grad is not None else 'none'})"


def param(data, dtype=np.float64) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


def constant(data, dtype=None) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=False)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float64) -> Tensor:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype), requires_grad=True)


def _make(out_data, parents, backward) -> Tensor:
    out = Tensor(out_data, _parents=tuple(parents), _backward=backward)
    if not any(p.requires_grad or p._parents for p in parents):
        out._parents, out._backward = (), None
    return out


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def backward(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), backward)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def scale(a: Tensor, s: float) -> Tensor:
    def backward(g):
        a._accumulate(g * s)

    return _make(a.data * s, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul expects 2-D operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shape mismatch {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data

    def backward(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    return _make(out_data, (a, b), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(g):
        a._accumulate(g * mask)

    return _make(a.data * mask, (a,), backward)


def reduce_sum(a: Tensor, axis: int | None = None) -> Tensor:
    out_data = a.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            a._accumulate(np.full_like(a.data, g))
        else:
            a._accumulate(np.expand_dims(g, axis) * np.ones_like(a.data))

    return _make(out_data, (a,), backward)


def reduce_mean(a: Tensor, axis: int | None = None) -> Tensor:
    denom = a.data.size if axis is None else a.data.shape[axis]
    return scale(reduce_sum(a, axis=axis), 1.0 / denom)


def reshape(a: Tensor, shape) -> Tensor:
    def backward(g):
        a._accumulate(g.reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), backward)


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)

    def backward(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        np.add.at(a.grad, idx, g)

    return _make(a.data[idx], (a,), backward)


def scatter_add_rows(values: Tensor, idx: np.ndarray, n_rows: int) -> Tensor:
    """Rows of ``values`` added into a fresh (n_rows, C) buffer at ``idx``."""
    idx = np.asarray(idx, dtype=np.intp)
    out_data = np.zeros((n_rows,) + values.data.shape[1:], dtype=values.data.dtype)
    np.add.at(out_data, idx, values.data)

    def backward(g):
        values._accumulate(g[idx])

    return _make(out_data, (values,), backward)


def row_scale(a: Tensor, weights: np.ndarray) -> Tensor:
    """Multiply each row by a constant scalar weight."""
    w = np.asarray(weights, dtype=a.data.dtype).reshape(-1, 1)
    if w.shape[0] != a.data.shape[0]:
        raise ShapeError("one weight per row expected")

    def backward(g):
        a._accumulate(g * w)

    return _make(a.data * w, (a,), backward)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[0] != b.data.shape[0]:
        raise ShapeError("concat_cols expects equal row counts")
    na = a.data.shape[1]

    def backward(g):
        a._accumulate(g[:, :na])
        b._accumulate(g[:, na:])

    return _make(np.hstack([a.data, b.data]), (a, b), backward)


def sparse_mix(a: Tensor, mat: sp.spmatrix) -> Tensor:
    """Multiply by a constant sparse matrix: out = mat @ a."""
    csr = mat.tocsr()
    csr_t = csr.T.tocsr()

    def backward(g):
        a._accumulate(csr_t @ g)

    return _make(csr @ a.data, (a,), backward)


def segment_mean(a: Tensor, seg_ids: np.ndarray, n_segments: int) -> Tensor:
    """Mean of rows per segment; empty segments produce zero rows."""
    seg_ids = np.asarray(seg_ids, dtype=np.intp)
    counts = np.bincount(seg_ids, minlength=n_segments).astype(a.data.dtype)
    safe = np.maximum(counts, 1.0)
    sums = np.zeros((n_segments,) + a.data.shape[1:], dtype=a.data.dtype)
    np.add.at(sums, seg_ids, a.data)
    out_data = sums / safe[:, None]

    def backward(g):
        a._accumulate((g / safe[:, None])[seg_ids])

    return _make(out_data, (a,), backward)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer labels under softmax of logits."""
    labels = np.asarray(labels, dtype=np.intp)
    if logits.data.ndim != 2 or labels.shape != (logits.data.shape[0],):
        raise ShapeError("expected (B, C) logits and (B,) integer labels")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    expz = np.exp(z)
    probs = expz / expz.sum(axis=1, keepdims=True)
    batch = logits.data.shape[0]
    loss = -np.mean(np.log(probs[np.arange(batch), labels] + 1e-300))

    def backward(g):
        grad = probs.copy()
        grad[np.arange(batch), labels] -= 1.0
        logits._accumulate(g * grad / batch)

    return _make(np.asarray(loss), (logits,), backward)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every parameter reachable from a scalar loss."""
    if loss.data.ndim != 0:
        raise ContractError("backward expects a scalar loss")
    if loss._consumed:
        raise ContractError("this tape was already differentiated")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
        node._consumed = True


def grads_of(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Run backward and collect gradients, zeros for unreachable parameters."""
    backward(loss)
    return {
        name: (p.grad if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    state: AdamState, params: dict[str, Tensor], grads: dict[str, np.ndarray]
) -> dict[str, Tensor]:
    """Standard Adam update with bias correction, in place on the params."""
    state.step_count += 1
    t = state.step_count
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient shape mismatch for {name}")
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m += (1.0 - state.beta1) * (g - m)
        v += (1.0 - state.beta2) * (g * g - v)
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        p.data = p.data - state.rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


# ---------------------------------------------------------------------------
# Checkpoints: versioned flat binary of named tensors
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"NGNCKPT"
_CKPT_VERSION = 1


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(_CKPT_VERSION.to_bytes(2, "big"))
        fh.write(len(tensors).to_bytes(4, "big"))
        for name, arr in tensors.items():
            arr = np.asarray(arr, order="C")  # keeps 0-d arrays 0-d
            name_b = name.encode("utf-8")
            dtype_b = str(arr.dtype).encode("ascii")
            fh.write(len(name_b).to_bytes(2, "big"))
            fh.write(name_b)
            fh.write(len(dtype_b).to_bytes(1, "big"))
            fh.write(dtype_b)
            fh.write(arr.ndim.to_bytes(1, "big"))
            for d in arr.shape:
                fh.write(int(d).to_bytes(8, "big"))
            fh.write(arr.tobytes())


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(len(_CKPT_MAGIC)) != _CKPT_MAGIC:
            raise ContractError("not a checkpoint file")
        version = int.from_bytes(fh.read(2), "big")
        if version != _CKPT_VERSION:
            raise ContractError(f"unsupported checkpoint version {version}")
        count = int.from_bytes(fh.read(4), "big")
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            name = fh.read(int.from_bytes(fh.read(2), "big")).decode("utf-8")
            dtype = np.dtype(fh.read(int.from_bytes(fh.read(1), "big")).decode("ascii"))
            ndim = int.from_bytes(fh.read(1), "big")
            shape = tuple(int.from_bytes(fh.read(8), "big") for _ in range(ndim))
            n_bytes = dtype.itemsize * int(np.prod(shape)) if shape else dtype.itemsize
            out[name] = np.frombuffer(fh.read(n_bytes), dtype=dtype).reshape(shape).copy()
        return out

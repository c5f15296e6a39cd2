"""Minimal dense-tensor engine with a reverse-mode tape.

Double precision throughout; rank <= 3 arrays; operations are plain numpy
with explicit backward closures recorded on a Tape. A tape and its tensors
belong to a single forward/backward pass and are not shared across workers.
"""

from __future__ import annotations

import math

import numpy as np

GELU_C = 0.7978845608028654  # sqrt(2/pi), tanh-approximation constant


class ShapeError(ValueError):
    pass


class Tape:
    """Ordered record of backward closures, replayed in reverse."""

    def __init__(self):
        self._records: list = []

    def record(self, fn) -> None:
        self._records.append(fn)

    def tensor(self, data) -> "Tensor":
        return Tensor(data, tape=self)

    def backward(self, loss: "Tensor") -> None:
        if loss.tape is not self:
            raise ValueError("loss tensor does not belong to this tape")
        loss.grad = np.ones_like(loss.data)
        for fn in reversed(self._records):
            fn()


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "tape")

    def __init__(self, data, tape: Tape | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim > 3:
            raise ShapeError(f"rank {self.data.ndim} > 3 not supported")
        self.grad: np.ndarray | None = None
        self.tape = tape

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


def _tape_of(*tensors: Tensor) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is not None and tape is not t.tape:
                raise ValueError("tensors belong to different tapes")
            tape = t.tape
    return tape


def _acc(t: Tensor, g: np.ndarray) -> None:
    if t.tape is None:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _out(data: np.ndarray, tape: Tape | None) -> Tensor:
    return Tensor(data, tape=tape)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    tape = _tape_of(a, b)
    out = _out(a.data @ b.data, tape)
    if tape is not None:
        def bwd():
            g = out.grad
            _acc(a, g @ b.data.T)
            _acc(b, a.data.T @ g)
        tape.record(bwd)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    tape = _tape_of(a, b)
    out = _out(a.data + b.data, tape)
    if tape is not None:
        def bwd():
            _acc(a, out.grad)
            _acc(b, out.grad)
        tape.record(bwd)
    return out


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Row-broadcast bias add: [m, n] + [n]."""
    if b.data.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError(f"add_bias shape mismatch: {x.shape} + {b.shape}")
    tape = _tape_of(x, b)
    out = _out(x.data + b.data, tape)
    if tape is not None:
        def bwd():
            _acc(x, out.grad)
            _acc(b, out.grad.sum(axis=0) if out.grad.ndim > 1 else out.grad)
        tape.record(bwd)
    return out


def mul_scalar(x: Tensor, s: float) -> Tensor:
    tape = _tape_of(x)
    out = _out(x.data * s, tape)
    if tape is not None:
        def bwd():
            _acc(x, out.grad * s)
        tape.record(bwd)
    return out


def relu(x: Tensor) -> Tensor:
    tape = _tape_of(x)
    out = _out(np.maximum(x.data, 0.0), tape)
    if tape is not None:
        def bwd():
            _acc(x, out.grad * (x.data > 0))
        tape.record(bwd)
    return out


def gelu(x: Tensor) -> Tensor:
    tape = _tape_of(x)
    v = x.data
    inner = GELU_C * (v + 0.044715 * v**3)
    th = np.tanh(inner)
    out = _out(0.5 * v * (1.0 + th), tape)
    if tape is not None:
        def bwd():
            sech2 = 1.0 - th**2
            dinner = GELU_C * (1.0 + 3 * 0.044715 * v**2)
            _acc(x, out.grad * (0.5 * (1.0 + th) + 0.5 * v * sech2 * dinner))
        tape.record(bwd)
    return out


def softmax_rows(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"softmax_rows expects rank 2, got {x.shape}")
    tape = _tape_of(x)
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)
    out = _out(y, tape)
    if tape is not None:
        def bwd():
            g = out.grad
            _acc(x, y * (g - (g * y).sum(axis=1, keepdims=True)))
        tape.record(bwd)
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row normalization followed by gain/bias, [m, n] with [n] params."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if x.data.ndim != 2 or gain.shape != (x.shape[1],) or bias.shape != (x.shape[1],):
        raise ShapeError(f"layer_norm shapes: x={x.shape} gain={gain.shape} bias={bias.shape}")
    tape = _tape_of(x, gain, bias)
    mean = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_std
    out = _out(xhat * gain.data + bias.data, tape)
    if tape is not None:
        def bwd():
            g = out.grad
            dxhat = g * gain.data
            _acc(gain, (g * xhat).sum(axis=0))
            _acc(bias, g.sum(axis=0))
            m = dxhat.mean(axis=1, keepdims=True)
            mx = (dxhat * xhat).mean(axis=1, keepdims=True)
            _acc(x, inv_std * (dxhat - m - xhat * mx))
        tape.record(bwd)
    return out


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """Negative log softmax at the target index; logits are [1, c] or [c]."""
    flat = logits.data.reshape(-1)
    c = flat.shape[0]
    if not 0 <= target < c:
        raise IndexError(f"target {target} out of range for {c} classes")
    tape = _tape_of(logits)
    shifted = flat - flat.max()
    lse = math.log(np.exp(shifted).sum())
    out = _out(np.asarray(lse - shifted[target]), tape)
    if tape is not None:
        def bwd():
            p = np.exp(shifted - lse)
            p[target] -= 1.0
            _acc(logits, (out.grad * p).reshape(logits.shape))
        tape.record(bwd)
    return out


def gather_rows(table: Tensor, indices: list[int]) -> Tensor:
    """Row lookup used for token/position embeddings; backward scatter-adds."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or table.data.ndim != 2:
        raise ShapeError("gather_rows expects a rank-2 table and flat indices")
    tape = _tape_of(table)
    out = _out(table.data[idx], tape)
    if tape is not None:
        def bwd():
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, idx, out.grad)
        tape.record(bwd)
    return out


def concat_cols(parts: list[Tensor]) -> Tensor:
    tape = _tape_of(*parts)
    out = _out(np.concatenate([p.data for p in parts], axis=1), tape)
    if tape is not None:
        offsets = np.cumsum([0] + [p.shape[1] for p in parts])
        def bwd():
            for p, a, b in zip(parts, offsets[:-1], offsets[1:]):
                _acc(p, out.grad[:, a:b])
        tape.record(bwd)
    return out


def concat_rows(parts: list[Tensor]) -> Tensor:
    tape = _tape_of(*parts)
    out = _out(np.concatenate([p.data for p in parts], axis=0), tape)
    if tape is not None:
        offsets = np.cumsum([0] + [p.shape[0] for p in parts])
        def bwd():
            for p, a, b in zip(parts, offsets[:-1], offsets[1:]):
                _acc(p, out.grad[a:b])
        tape.record(bwd)
    return out


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    tape = _tape_of(x)
    out = _out(x.data[start:stop].copy(), tape)
    if tape is not None:
        def bwd():
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[start:stop] += out.grad
        tape.record(bwd)
    return out


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    tape = _tape_of(x)
    out = _out(x.data[:, start:stop].copy(), tape)
    if tape is not None:
        def bwd():
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[:, start:stop] += out.grad
        tape.record(bwd)
    return out


def transpose(x: Tensor) -> Tensor:
    tape = _tape_of(x)
    out = _out(x.data.T.copy(), tape)
    if tape is not None:
        def bwd():
            _acc(x, out.grad.T)
        tape.record(bwd)
    return out


def mean_rows(x: Tensor) -> Tensor:
    """[m, n] -> [1, n] mean over rows."""
    tape = _tape_of(x)
    m = x.shape[0]
    out = _out(x.data.mean(axis=0, keepdims=True), tape)
    if tape is not None:
        def bwd():
            _acc(x, np.repeat(out.grad, m, axis=0) / m)
        tape.record(bwd)
    return out


def relational_mean_agg(
    e: Tensor, weights: Tensor, edges: list[tuple[int, int, int]], n_nodes: int
) -> Tensor:
    """Mean of per-edge messages W[rel] @ e[src] at each destination node.

    edges are (src, rel_slot, dst); every node must receive at least one
    message (callers add self-loop edges). weights is rank 3: [slots, d, d].
    """
    if e.data.ndim != 2 or weights.data.ndim != 3:
        raise ShapeError("relational_mean_agg expects e rank 2 and weights rank 3")
    d = e.shape[1]
    if weights.shape[1:] != (d, d):
        raise ShapeError(f"weights {weights.shape} incompatible with node dim {d}")
    if e.shape[0] != n_nodes:
        raise ShapeError(f"node count mismatch: {e.shape[0]} vs {n_nodes}")
    tape = _tape_of(e, weights)

    counts = np.zeros(n_nodes, dtype=np.float64)
    for _src, _rel, dst in edges:
        counts[dst] += 1
    if np.any(counts == 0):
        raise ValueError("every node needs at least one incoming message")

    by_rel: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for rel in {r for _s, r, _d in edges}:
        srcs = np.array([s for s, r, _d in edges if r == rel], dtype=np.int64)
        dsts = np.array([d_ for s, r, d_ in edges if r == rel], dtype=np.int64)
        by_rel[rel] = (srcs, dsts)

    acc = np.zeros((n_nodes, d), dtype=np.float64)
    for rel, (srcs, dsts) in by_rel.items():
        msgs = e.data[srcs] @ weights.data[rel].T
        np.add.at(acc, dsts, msgs)
    out = _out(acc / counts[:, None], tape)

    if tape is not None:
        def bwd():
            g = out.grad / counts[:, None]
            if e.tape is not None and e.grad is None:
                e.grad = np.zeros_like(e.data)
            if weights.tape is not None and weights.grad is None:
                weights.grad = np.zeros_like(weights.data)
            for rel, (srcs, dsts) in by_rel.items():
                gd = g[dsts]
                if e.tape is not None:
                    np.add.at(e.grad, srcs, gd @ weights.data[rel])
                if weights.tape is not None:
                    weights.grad[rel] += gd.T @ e.data[srcs]
        tape.record(bwd)
    return out


def serialize_tensor(data: np.ndarray) -> str:
    """Text form `shape: d0 d1 ...` plus exact (repr) decimal values."""
    shape = " ".join(str(s) for s in data.shape)
    values = " ".join(repr(float(v)) for v in data.reshape(-1))
    return f"shape: {shape}\n{values}\n"


def deserialize_tensor(text: str) -> np.ndarray:
    lines = text.strip().split("\n")
    if not lines or not lines[0].startswith("shape:"):
        raise ValueError("tensor text must start with a shape line")
    shape = tuple(int(s) for s in lines[0][len("shape:"):].split())
    flat = np.array([float(v) for v in " ".join(lines[1:]).split()], dtype=np.float64)
    expected = int(np.prod(shape)) if shape else 1
    if flat.size != expected:
        raise ValueError("value count does not match shape")
    return flat.reshape(shape)

"""Minimal reverse-mode tensor engine.

Exactly the operators the networks need, nothing generic: conv/deconv are
fixed-geometry (kernel 4, stride 2), there is no broadcasting beyond bias
terms, and all heavy lifting is im2col + BLAS matmul on float32 arrays.
float64 tensors run the same code paths so finite-difference checks are
not drowned by single-precision noise.

Every operator records a closure on the output tensor; `backward()` on a
scalar loss replays them in reverse topological order, accumulating into
`.grad` of every tensor that requires it.
"""
from __future__ import annotations

import contextlib

import numpy as np


class ShapeMismatch(ValueError):
    def __init__(self, op: str, detail: str):
        super().__init__(f"{op}: {detail}")
        self.op = op


class TokenOutOfRange(ValueError):
    pass


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording; outputs are detached leaves."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bw")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._bw = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray, own: bool = False) -> None:
        """Add `g` into the gradient buffer.

        `own=True` promises `g` is freshly allocated and unshared, so the
        first accumulation can take it without copying.
        """
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = g if own else g.copy()
        else:
            self.grad += g

    def backward(self) -> None:
        if self.data.size != 1:
            raise ShapeMismatch("backward", f"loss must be scalar, got {self.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._bw is not None and node.grad is not None:
                node._bw(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"


def _make(data: np.ndarray, parents: tuple[Tensor, ...], bw) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._bw = bw
    return out


# ---------------------------------------------------------------- basics


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch("add", f"{a.shape} vs {b.shape}")
    y = a.data + b.data

    def bw(g):
        a.accumulate(g)
        b.accumulate(g)

    return _make(y, (a, b), bw)


def scale(x: Tensor, s: float) -> Tensor:
    y = x.data * s

    def bw(g):
        x.accumulate(g * s, own=True)

    return _make(y, (x,), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch("mul", f"{a.shape} vs {b.shape}")
    y = a.data * b.data

    def bw(g):
        a.accumulate(g * b.data, own=True)
        b.accumulate(g * a.data, own=True)

    return _make(y, (a, b), bw)


def reshape(x: Tensor, shape) -> Tensor:
    y = x.data.reshape(shape)

    def bw(g):
        x.accumulate(g.reshape(x.shape))

    return _make(y, (x,), bw)


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(base) or any(
            i != axis and other[i] != base[i] for i in range(len(base))
        ):
            raise ShapeMismatch("concat", f"{[t.shape for t in tensors]} along axis {axis}")
    y = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t.accumulate(np.ascontiguousarray(piece), own=True)

    return _make(y, tuple(tensors), bw)


def select_rows(mask: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Per-row choice: rows where mask is true come from `a`, else `b`."""
    if a.shape != b.shape:
        raise ShapeMismatch("select_rows", f"{a.shape} vs {b.shape}")
    m = mask.reshape((-1,) + (1,) * (len(a.shape) - 1)).astype(a.dtype)
    y = m * a.data + (1 - m) * b.data

    def bw(g):
        a.accumulate(g * m, own=True)
        b.accumulate(g * (1 - m), own=True)

    return _make(y, (a, b), bw)


def batch_mean(x: Tensor) -> Tensor:
    """Mean over the batch (first) axis, keeping the remaining shape."""
    y = x.data.mean(axis=0)
    n = x.shape[0]

    def bw(g):
        x.accumulate(np.broadcast_to(g / n, x.shape).copy(), own=True)

    return _make(y, (x,), bw)


# ---------------------------------------------------------------- activations


def relu(x: Tensor) -> Tensor:
    y = np.maximum(x.data, 0)

    def bw(g):
        x.accumulate(g * (x.data > 0), own=True)

    return _make(y, (x,), bw)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    y = np.where(x.data >= 0, x.data, x.data * slope)

    def bw(g):
        x.accumulate(g * np.where(x.data >= 0, 1.0, slope).astype(g.dtype), own=True)

    return _make(y, (x,), bw)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bw(g):
        x.accumulate(g * (1 - y * y), own=True)

    return _make(y, (x,), bw)


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)

    def bw(g):
        x.accumulate(g * y * (1 - y), own=True)

    return _make(y, (x,), bw)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def clip_values(x: Tensor, lo: float = 0.0, hi: float = 1.0) -> Tensor:
    y = np.clip(x.data, lo, hi)

    def bw(g):
        inside = (x.data >= lo) & (x.data <= hi)
        x.accumulate(g * inside, own=True)

    return _make(y, (x,), bw)


# ---------------------------------------------------------------- affine / conv


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    if x.data.ndim != 2 or x.shape[1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise ShapeMismatch("affine", f"x{x.shape} w{w.shape} b{b.shape}")
    y = x.data @ w.data + b.data

    def bw(g):
        x.accumulate(g @ w.data.T, own=True)
        w.accumulate(x.data.T @ g, own=True)
        b.accumulate(g.sum(axis=0), own=True)

    return _make(y, (x, w, b), bw)


def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c, _, _ = xp.shape
    s0, s1, s2, s3 = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, ho, wo, k, k),
        strides=(s0, s1, s2 * stride, s3 * stride, s2, s3),
        writeable=False,
    )
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * k * k)


def _col2im(cols: np.ndarray, n: int, c: int, hp: int, wp: int, k: int, stride: int,
            ho: int, wo: int) -> np.ndarray:
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    blocks = cols.reshape(n, ho, wo, c, k, k).transpose(0, 3, 1, 2, 4, 5)
    for ki in range(k):
        for kj in range(k):
            out[:, :, ki:ki + stride * ho:stride, kj:kj + stride * wo:stride] += \
                blocks[:, :, :, :, ki, kj]
    return out


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 2, pad: int = 1) -> Tensor:
    """2-d convolution; weights are (C_out, C_in, K, K)."""
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeMismatch("conv2d", f"x{x.shape} w{w.shape}")
    n, c, h, wd = x.shape
    cout, _, k, _ = w.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeMismatch("conv2d", f"input {h}x{wd} too small for k={k} s={stride}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    cols = _im2col(xp, k, stride, ho, wo)
    wm = w.data.reshape(cout, -1)
    y = (cols @ wm.T + b.data).reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)
    y = np.ascontiguousarray(y)

    def bw(g):
        gm = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, cout)
        if w.requires_grad:
            w.accumulate((gm.T @ cols).reshape(w.shape), own=True)
        if b.requires_grad:
            b.accumulate(gm.sum(axis=0), own=True)
        if x.requires_grad:
            dcols = gm @ wm
            dxp = _col2im(dcols, n, c, h + 2 * pad, wd + 2 * pad, k, stride, ho, wo)
            dx = dxp[:, :, pad:pad + h, pad:pad + wd] if pad else dxp
            x.accumulate(np.ascontiguousarray(dx), own=True)

    return _make(y, (x, w, b), bw)


def deconv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 2, pad: int = 1) -> Tensor:
    """Transposed convolution; weights are (C_in, C_out, K, K).

    With k=4, s=2, p=1 this exactly doubles the spatial size, mirroring
    conv2d's halving.
    """
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[0]:
        raise ShapeMismatch("deconv2d", f"x{x.shape} w{w.shape}")
    n, cin, h, wd = x.shape
    _, cout, k, _ = w.shape
    hop = (h - 1) * stride + k   # padded output size
    wop = (wd - 1) * stride + k
    ho, wo = hop - 2 * pad, wop - 2 * pad
    xm = np.ascontiguousarray(x.data.transpose(0, 2, 3, 1)).reshape(-1, cin)
    wm = w.data.reshape(cin, -1)
    cols = xm @ wm
    yp = _col2im(cols, n, cout, hop, wop, k, stride, h, wd)
    y = yp[:, :, pad:pad + ho, pad:pad + wo] if pad else yp
    y = np.ascontiguousarray(y) + b.data.reshape(1, cout, 1, 1)

    def bw(g):
        gp = np.pad(g, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else g
        dcols = _im2col(gp, k, stride, h, wd)
        if w.requires_grad:
            w.accumulate((xm.T @ dcols).reshape(w.shape), own=True)
        if b.requires_grad:
            b.accumulate(g.sum(axis=(0, 2, 3)), own=True)
        if x.requires_grad:
            dxm = dcols @ wm.T
            dx = dxm.reshape(n, h, wd, cin).transpose(0, 3, 1, 2)
            x.accumulate(np.ascontiguousarray(dx), own=True)

    return _make(y, (x, w, b), bw)


# ---------------------------------------------------------------- batch norm


class BNState:
    """Running statistics for one batchnorm layer (not learned parameters)."""

    def __init__(self, channels: int, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)

    def copy(self) -> "BNState":
        out = BNState(len(self.mean), dtype=self.mean.dtype)
        out.mean = self.mean.copy()
        out.var = self.var.copy()
        return out


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, state: BNState,
              training: bool, momentum: float = 0.9, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over (N,) or (N, H, W) positions."""
    nd = x.data.ndim
    if nd not in (2, 4) or x.shape[1] != gamma.shape[0]:
        raise ShapeMismatch("batchnorm", f"x{x.shape} gamma{gamma.shape}")
    axes = (0,) if nd == 2 else (0, 2, 3)
    shape = (1, -1) if nd == 2 else (1, -1, 1, 1)
    gam = gamma.data.reshape(shape)
    bet = beta.data.reshape(shape)

    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        state.mean = (momentum * state.mean + (1 - momentum) * mean).astype(state.mean.dtype)
        state.var = (momentum * state.var + (1 - momentum) * var).astype(state.var.dtype)
    else:
        mean = state.mean.astype(x.dtype)
        var = state.var.astype(x.dtype)

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(shape)) * inv_std.reshape(shape)
    y = gam * xhat + bet
    m = x.data.size // x.shape[1]

    def bw(g):
        if gamma.requires_grad:
            gamma.accumulate((g * xhat).sum(axis=axes), own=True)
        if beta.requires_grad:
            beta.accumulate(g.sum(axis=axes), own=True)
        if x.requires_grad:
            dxhat = g * gam
            if training:
                istd = inv_std.reshape(shape)
                dvar_term = (dxhat * xhat).sum(axis=axes, keepdims=True)
                dmean_term = dxhat.sum(axis=axes, keepdims=True)
                dx = istd * (dxhat - dmean_term / m - xhat * dvar_term / m)
            else:
                dx = dxhat * inv_std.reshape(shape)
            x.accumulate(np.ascontiguousarray(dx), own=True)

    return _make(y, (x, gamma, beta), bw)


# ---------------------------------------------------------------- sequence ops


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    if ids.min(initial=0) < 0 or ids.max(initial=0) >= table.shape[0]:
        raise TokenOutOfRange(
            f"token ids must lie in [0, {table.shape[0]}), got range "
            f"[{ids.min()}, {ids.max()}]"
        )
    y = table.data[ids]

    def bw(g):
        if table.requires_grad:
            dt = np.zeros_like(table.data)
            np.add.at(dt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
            table.accumulate(dt, own=True)

    return _make(y, (table,), bw)


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, wx: Tensor, wh: Tensor,
              b: Tensor) -> tuple[Tensor, Tensor]:
    """One step of a peephole-free LSTM; gate order i, f, g, o. Returns (h', c')."""
    hidden = h.shape[1]
    if wx.shape != (x.shape[1], 4 * hidden) or wh.shape != (hidden, 4 * hidden) \
            or b.shape != (4 * hidden,):
        raise ShapeMismatch(
            "lstm_cell", f"x{x.shape} h{h.shape} wx{wx.shape} wh{wh.shape} b{b.shape}"
        )
    gates = x.data @ wx.data + h.data @ wh.data + b.data
    gi = _sigmoid(gates[:, :hidden])
    gf = _sigmoid(gates[:, hidden:2 * hidden])
    gg = np.tanh(gates[:, 2 * hidden:3 * hidden])
    go = _sigmoid(gates[:, 3 * hidden:])
    c_new = gf * c.data + gi * gg
    tanh_c = np.tanh(c_new)
    h_new = go * tanh_c

    def backprop(dh, dc):
        """Joint backward; dh/dc may be zero arrays when only one output is used."""
        dc_total = dc + dh * go * (1 - tanh_c * tanh_c)
        dgates = np.concatenate([
            dc_total * gg * gi * (1 - gi),
            dc_total * c.data * gf * (1 - gf),
            dc_total * gi * (1 - gg * gg),
            dh * tanh_c * go * (1 - go),
        ], axis=1)
        x.accumulate(dgates @ wx.data.T, own=True)
        h.accumulate(dgates @ wh.data.T, own=True)
        c.accumulate(dc_total * gf, own=True)
        if wx.requires_grad:
            wx.accumulate(x.data.T @ dgates, own=True)
        if wh.requires_grad:
            wh.accumulate(h.data.T @ dgates, own=True)
        if b.requires_grad:
            b.accumulate(dgates.sum(axis=0), own=True)

    parents = (x, h, c, wx, wh, b)
    h_out = _make(h_new, parents, lambda g: backprop(g, np.zeros_like(c_new)))
    c_out = _make(c_new, parents, lambda g: backprop(np.zeros_like(h_new), g))
    return h_out, c_out


# ---------------------------------------------------------------- losses


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    labels = np.asarray(labels)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatch("softmax_cross_entropy", f"logits{logits.shape} labels{labels.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    n = logits.shape[0]
    picked = z[np.arange(n), labels]
    y = np.asarray((lse - picked).mean(), dtype=logits.dtype)

    def bw(g):
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(n), labels] -= 1.0
        logits.accumulate(p * (g / n), own=True)

    return _make(y, (logits,), bw)


def sigmoid_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    targets = np.asarray(targets, dtype=logits.dtype)
    if targets.shape != logits.shape:
        raise ShapeMismatch("sigmoid_cross_entropy", f"logits{logits.shape} targets{targets.shape}")
    z = logits.data
    y = np.asarray((np.maximum(z, 0) - z * targets + np.log1p(np.exp(-np.abs(z)))).mean(),
                   dtype=logits.dtype)
    n = z.size

    def bw(g):
        logits.accumulate((_sigmoid(z) - targets) * (g / n), own=True)

    return _make(y, (logits,), bw)


def mse(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch("mse", f"{a.shape} vs {b.shape}")
    diff = a.data - b.data
    y = np.asarray((diff * diff).mean(), dtype=a.dtype)
    n = diff.size

    def bw(g):
        d = diff * (2.0 * g / n)
        a.accumulate(d, own=True)
        b.accumulate(-d, own=True)

    return _make(y, (a, b), bw)


# ---------------------------------------------------------------- utilities


def global_norm_clip(tensors: list[Tensor], max_norm: float) -> float:
    """Scale all gradients in place so their joint L2 norm is at most max_norm."""
    total = 0.0
    for t in tensors:
        if t.grad is not None:
            total += float((t.grad.astype(np.float64) ** 2).sum())
    norm = total ** 0.5
    if norm > max_norm and norm > 0:
        factor = max_norm / norm
        for t in tensors:
            if t.grad is not None:
                t.grad *= factor
    return norm

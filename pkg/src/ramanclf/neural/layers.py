"""Layers with explicit forward/backward passes.

Conv-type tensors are (batch, channels, length); dense tensors are
(batch, features). Every layer caches what its backward pass needs during
``forward`` and writes parameter gradients into ``self.grads``.
"""

from __future__ import annotations

import numpy as np

sliding = np.lib.stride_tricks.sliding_window_view


class ShapeError(ValueError):
    pass


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def out_shape(self, shape):
        """Per-sample output shape for a per-sample input shape."""
        return shape

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    def __repr__(self):
        return f"{type(self).__name__}()"


class Conv1D(Layer):
    """Valid cross-correlation, stride 1.

    Forward stacks the k shifted copies of the input and does a single
    batched matmul; backward contracts a strided window view with einsum.
    """

    kind = "conv1d"

    def __init__(self, c_in, c_out, kernel, rng=None):
        super().__init__()
        if kernel < 1:
            raise ValueError("kernel must be >= 1")
        self.c_in, self.c_out, self.k = c_in, c_out, kernel
        rng = np.random.default_rng(0) if rng is None else rng
        bound = 1.0 / np.sqrt(c_in * kernel)
        self.params["w"] = rng.uniform(-bound, bound, (c_out, c_in, kernel))
        self.params["b"] = rng.uniform(-bound, bound, c_out)
        # layers fed by raw data can skip the input gradient
        self.needs_input_grad = True
        self.zero_grad()

    def out_shape(self, shape):
        c, length = shape
        if c != self.c_in:
            raise ShapeError(f"conv expects {self.c_in} channels, got {c}")
        if length < self.k:
            raise ShapeError(f"input length {length} shorter than kernel {self.k}")
        return (self.c_out, length - self.k + 1)

    def forward(self, x, train=False):
        n, c, length = x.shape
        self.out_shape((c, length))
        self._x = x
        lout = length - self.k + 1
        # taps stacked along the channel axis turn the correlation into one matmul
        win = np.concatenate([x[:, :, j:j + lout] for j in range(self.k)], axis=1)
        w2 = self.params["w"].transpose(0, 2, 1).reshape(self.c_out, self.k * c)
        out = np.matmul(w2, win)
        out += self.params["b"][None, :, None]
        return out

    def backward(self, dout):
        x = self._x
        lout = dout.shape[2]
        w = self.params["w"]
        gw = self.grads["w"]
        d2 = dout.transpose(1, 0, 2).reshape(self.c_out, -1)
        for j in range(self.k):
            xj = x[:, :, j:j + lout].transpose(1, 0, 2).reshape(self.c_in, -1)
            gw[:, :, j] += d2 @ xj.T
        self.grads["b"] += dout.sum(axis=(0, 2))
        if not self.needs_input_grad:
            return None
        # full correlation of the zero-padded output gradient with the flipped kernel
        pad = self.k - 1
        dp = np.pad(dout, ((0, 0), (0, 0), (pad, pad)))
        return np.einsum("noti,oci->nct", sliding(dp, self.k, axis=2), w[:, :, ::-1], optimize=True)

    def __repr__(self):
        return f"Conv1D({self.c_in}->{self.c_out}, k={self.k})"


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in, n_out, rng=None):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        rng = np.random.default_rng(0) if rng is None else rng
        bound = 1.0 / np.sqrt(n_in)
        self.params["w"] = rng.uniform(-bound, bound, (n_in, n_out))
        self.params["b"] = rng.uniform(-bound, bound, n_out)
        self.zero_grad()

    def out_shape(self, shape):
        if tuple(shape) != (self.n_in,):
            raise ShapeError(f"dense expects ({self.n_in},), got {tuple(shape)}")
        return (self.n_out,)

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"dense expects (N, {self.n_in}), got {x.shape}")
        self._x = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, dout):
        self.grads["w"] += self._x.T @ dout
        self.grads["b"] += dout.sum(axis=0)
        return dout @ self.params["w"].T

    def __repr__(self):
        return f"Dense({self.n_in}->{self.n_out})"


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False):
        self._mask = x > 0
        return np.maximum(x, 0.0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0)


class BatchNorm(Layer):
    """Per-channel (or per-feature) normalization.

    Train mode normalizes with batch statistics and updates running
    estimates; eval mode uses the running estimates only.
    """

    kind = "batchnorm"

    def __init__(self, n, momentum=0.1, eps=1e-5):
        super().__init__()
        self.n, self.momentum, self.eps = n, momentum, eps
        self.params["gamma"] = np.ones(n)
        self.params["beta"] = np.zeros(n)
        self.buffers["running_mean"] = np.zeros(n)
        self.buffers["running_var"] = np.ones(n)
        self._acc = None
        self.zero_grad()

    def start_collect(self):
        """Accumulate input moments over subsequent eval-mode passes."""
        self._acc = [0, np.zeros(self.n), np.zeros(self.n)]

    def finish_collect(self):
        """Replace running estimates by the collected population mean and unbiased variance."""
        m, s1, s2 = self._acc
        self._acc = None
        if m < 2:
            return
        mean = s1 / m
        var = np.maximum(s2 / m - mean * mean, 0.0) * m / (m - 1)
        self.buffers["running_mean"], self.buffers["running_var"] = mean, var

    def out_shape(self, shape):
        if shape[0] != self.n:
            raise ShapeError(f"batchnorm over {self.n} channels got shape {tuple(shape)}")
        return shape

    def _axes(self, x):
        return (0,) if x.ndim == 2 else (0, 2)

    def _bshape(self, x):
        return (1, self.n) if x.ndim == 2 else (1, self.n, 1)

    def forward(self, x, train=False):
        axes, bs = self._axes(x), self._bshape(x)
        if train:
            m = x.size // self.n
            mean = x.mean(axis=axes)
            xhat = x - mean.reshape(bs)
            var = (xhat * xhat).sum(axis=axes) / m
            rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
            unbiased = var * m / max(m - 1, 1)
            self.buffers["running_mean"] = (1 - self.momentum) * rm + self.momentum * mean
            self.buffers["running_var"] = (1 - self.momentum) * rv + self.momentum * unbiased
        else:
            if self._acc is not None:
                self._acc[0] += x.size // self.n
                self._acc[1] += x.sum(axis=axes)
                self._acc[2] += (x * x).sum(axis=axes)
            mean, var = self.buffers["running_mean"], self.buffers["running_var"]
            xhat = x - mean.reshape(bs)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat *= inv.reshape(bs)
        self._cache = (xhat, inv, train)
        out = xhat * self.params["gamma"].reshape(bs)
        out += self.params["beta"].reshape(bs)
        return out

    def backward(self, dout):
        xhat, inv, train = self._cache
        axes, bs = self._axes(dout), self._bshape(dout)
        self.grads["gamma"] += (dout * xhat).sum(axis=axes)
        self.grads["beta"] += dout.sum(axis=axes)
        dxhat = dout * self.params["gamma"].reshape(bs)
        if not train:
            return dxhat * inv.reshape(bs)
        m = dout.size // self.n
        s1 = dxhat.sum(axis=axes).reshape(bs)
        s2 = (dxhat * xhat).sum(axis=axes).reshape(bs)
        return inv.reshape(bs) / m * (m * dxhat - s1 - xhat * s2)

    def __repr__(self):
        return f"BatchNorm({self.n})"


class _Pool(Layer):
    def __init__(self, size=2):
        super().__init__()
        if size < 2:
            raise ValueError("pool size must be >= 2")
        self.size = size

    def out_shape(self, shape):
        c, length = shape
        if length < self.size:
            raise ShapeError(f"length {length} shorter than pool {self.size}")
        return (c, length // self.size)

    def _windows(self, x):
        n, c, length = x.shape
        lout = length // self.size
        self._in_shape = x.shape
        return x[:, :, :lout * self.size].reshape(n, c, lout, self.size)

    def __repr__(self):
        return f"{type(self).__name__}({self.size})"


class AvgPool(_Pool):
    """Non-overlapping average pooling; a trailing partial window is dropped."""

    kind = "avgpool"

    def forward(self, x, train=False):
        return self._windows(x).mean(axis=3)

    def backward(self, dout):
        n, c, length = self._in_shape
        dx = np.zeros(self._in_shape)
        lout = dout.shape[2]
        dx[:, :, :lout * self.size] = np.repeat(dout / self.size, self.size, axis=2)
        return dx


class MaxPool(_Pool):
    """Non-overlapping max pooling; ties route the gradient to the first maximum."""

    kind = "maxpool"

    def forward(self, x, train=False):
        w = self._windows(x)
        if self.size == 2:
            self._first = w[..., 0] >= w[..., 1]
            return np.where(self._first, w[..., 0], w[..., 1])
        self._arg = w.argmax(axis=3)
        return np.take_along_axis(w, self._arg[..., None], axis=3)[..., 0]

    def backward(self, dout):
        n, c, length = self._in_shape
        lout = dout.shape[2]
        dw = np.zeros((n, c, lout, self.size))
        if self.size == 2:
            dw[..., 0] = np.where(self._first, dout, 0.0)
            dw[..., 1] = np.where(self._first, 0.0, dout)
        else:
            np.put_along_axis(dw, self._arg[..., None], dout[..., None], axis=3)
        dx = np.zeros(self._in_shape)
        dx[:, :, :lout * self.size] = dw.reshape(n, c, lout * self.size)
        return dx


class Flatten(Layer):
    kind = "flatten"

    def out_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class GlobalAvgPool(Layer):
    """Mean over the length axis: (N, C, L) -> (N, C)."""

    kind = "global_avgpool"

    def out_shape(self, shape):
        return (shape[0],)

    def forward(self, x, train=False):
        self._len = x.shape[2]
        return x.mean(axis=2)

    def backward(self, dout):
        return np.repeat(dout[:, :, None] / self._len, self._len, axis=2)


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x, train=False):
        self._p = softmax(x)
        return self._p

    def backward(self, dout):
        p = self._p
        return p * (dout - (dout * p).sum(axis=1, keepdims=True))


def cross_entropy(logits, labels):
    """Fused softmax + categorical cross-entropy, averaged over the batch.

    Returns (loss, dlogits).
    """
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsum - z[np.arange(n), labels]))
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n

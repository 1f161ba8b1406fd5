"""Layers with explicit forward/backward passes on numpy arrays.

Activations flow channels-last (N, H, W, C); convolution is im2col plus a
BLAS matmul, with the gather/scatter done by the kernel dispatch (compiled
or pure). Each layer owns its trainable ``params`` and writes aligned
``grads`` during backward. Non-trainable buffers (batch-norm running
statistics) live in ``state``.
"""

from __future__ import annotations

import numpy as np

from .. import kernels

_ONES: dict[tuple[int, object], np.ndarray] = {}


def _colsum(m: np.ndarray) -> np.ndarray:
    # ones @ m is much faster than m.sum(0) for tall skinny matrices
    key = (m.shape[0], m.dtype)
    ones = _ONES.get(key)
    if ones is None:
        ones = _ONES.setdefault(key, np.ones(m.shape[0], dtype=m.dtype))
    return ones @ m


def he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    params: list[np.ndarray]
    grads: list[np.ndarray]
    state: list[np.ndarray]

    def __init__(self):
        self.params = []
        self.grads = []
        self.state = []

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError


class Conv2D(Layer):
    """3x3-style convolution, stride 1, optional zero padding, with bias."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, pad: int, rng=None, dtype=np.float32):
        super().__init__()
        self.in_ch, self.out_ch, self.kernel, self.pad = in_ch, out_ch, kernel, pad
        k2 = kernel * kernel * in_ch
        if rng is None:
            w = np.zeros((k2, out_ch), dtype=dtype)
        else:
            w = he_uniform(rng, (k2, out_ch), k2, dtype)
        self.params = [w, np.zeros(out_ch, dtype=dtype)]
        self.grads = [np.zeros_like(p) for p in self.params]
        self._cols = None
        self._xshape = None

    def forward(self, x, train):
        n, h, w, _ = x.shape
        cols = kernels.im2col(x, self.kernel, self.kernel, self.pad)
        out = cols @ self.params[0]
        out += self.params[1]
        if train:
            self._cols, self._xshape = cols, x.shape
        oh = h + 2 * self.pad - self.kernel + 1
        ow = w + 2 * self.pad - self.kernel + 1
        return out.reshape(n, oh, ow, self.out_ch)

    def backward(self, dout):
        n, h, w, c = self._xshape
        d2 = dout.reshape(-1, self.out_ch)
        self.grads[0][...] = self._cols.T @ d2
        self.grads[1][...] = _colsum(d2)
        dcols = d2 @ self.params[0].T
        return kernels.col2im(dcols, n, h, w, c, self.kernel, self.kernel, self.pad)

    def spec(self):
        return {
            "kind": "conv2d",
            "in_ch": self.in_ch,
            "out_ch": self.out_ch,
            "kernel": self.kernel,
            "pad": self.pad,
        }


class BatchNorm(Layer):
    """Per-channel batch normalization over all leading axes.

    Normalizes with biased batch variance in Train mode and tracks running
    statistics (unbiased variance) for Inference mode.
    """

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.channels, self.momentum, self.eps = channels, momentum, eps
        self.params = [np.ones(channels, dtype=dtype), np.zeros(channels, dtype=dtype)]
        self.grads = [np.zeros_like(p) for p in self.params]
        # running mean, running variance
        self.state = [np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype)]
        self._xhat = None
        self._inv_sd = None

    def forward(self, x, train):
        gamma, beta = self.params
        shape = x.shape
        m2 = x.reshape(-1, self.channels)
        n = m2.shape[0]
        if train:
            mu = _colsum(m2) / n
            diff = m2 - mu
            var = _colsum(diff * diff) / n
            inv_sd = 1.0 / np.sqrt(var + self.eps)
            xhat = diff * inv_sd
            self._xhat, self._inv_sd = xhat, inv_sd
            mom = self.momentum
            self.state[0] *= 1.0 - mom
            self.state[0] += mom * mu
            unbiased = var * (n / (n - 1)) if n > 1 else var
            self.state[1] *= 1.0 - mom
            self.state[1] += mom * unbiased
        else:
            inv_sd = 1.0 / np.sqrt(self.state[1] + self.eps)
            xhat = (m2 - self.state[0]) * inv_sd
        return (xhat * gamma + beta).reshape(shape)

    def backward(self, dout):
        gamma = self.params[0]
        shape = dout.shape
        d2 = dout.reshape(-1, self.channels)
        n = d2.shape[0]
        xhat = self._xhat
        self.grads[0][...] = _colsum(d2 * xhat)
        self.grads[1][...] = _colsum(d2)
        dxhat = d2 * gamma
        dx = (dxhat - _colsum(dxhat) / n - xhat * (_colsum(dxhat * xhat) / n)) * self._inv_sd
        return dx.reshape(shape)

    def spec(self):
        return {
            "kind": "batchnorm",
            "channels": self.channels,
            "momentum": self.momentum,
            "eps": self.eps,
        }


class ReLU(Layer):
    def __init__(self):
        super().__init__()
        self._mask = None

    def forward(self, x, train):
        out = np.maximum(x, 0)
        if train:
            self._mask = x > 0
        return out

    def backward(self, dout):
        return dout * self._mask

    def spec(self):
        return {"kind": "relu"}


class Sigmoid(Layer):
    def __init__(self):
        super().__init__()
        self._out = None

    def forward(self, x, train):
        out = 1.0 / (1.0 + np.exp(-x))
        if train:
            self._out = out
        return out

    def backward(self, dout):
        return dout * self._out * (1.0 - self._out)

    def spec(self):
        return {"kind": "sigmoid"}


class Flatten(Layer):
    def __init__(self):
        super().__init__()
        self._shape = None

    def forward(self, x, train):
        if train:
            self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)

    def spec(self):
        return {"kind": "flatten"}


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng=None, dtype=np.float32):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        if rng is None:
            w = np.zeros((in_dim, out_dim), dtype=dtype)
        else:
            w = he_uniform(rng, (in_dim, out_dim), in_dim, dtype)
        self.params = [w, np.zeros(out_dim, dtype=dtype)]
        self.grads = [np.zeros_like(p) for p in self.params]
        self._x = None

    def forward(self, x, train):
        if train:
            self._x = x
        return x @ self.params[0] + self.params[1]

    def backward(self, dout):
        self.grads[0][...] = self._x.T @ dout
        self.grads[1][...] = _colsum(dout)
        return dout @ self.params[0].T

    def spec(self):
        return {"kind": "dense", "in_dim": self.in_dim, "out_dim": self.out_dim}


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by 1/(1-rate) at train time."""

    def __init__(self, rate: float, rng: np.random.Generator | None = None):
        super().__init__()
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._smask = None

    def forward(self, x, train):
        if not train or self.rate == 0.0:
            self._smask = None
            return x
        keep = 1.0 - self.rate
        mask = self.rng.random(x.shape) >= self.rate
        smask = mask.astype(x.dtype)
        smask /= keep
        self._smask = smask
        return x * smask

    def backward(self, dout):
        if self._smask is None:
            return dout
        return dout * self._smask

    def spec(self):
        return {"kind": "dropout", "rate": self.rate}


class DuelingHead(Layer):
    """Action branch (65 outputs) and state branch (1 output), combined as
    action minus its mean plus the state value."""

    def __init__(self, in_dim: int, actions: int, rng=None, dtype=np.float32):
        super().__init__()
        self.in_dim, self.actions = in_dim, actions
        if rng is None:
            wa = np.zeros((in_dim, actions), dtype=dtype)
            ws = np.zeros((in_dim, 1), dtype=dtype)
        else:
            wa = he_uniform(rng, (in_dim, actions), in_dim, dtype)
            ws = he_uniform(rng, (in_dim, 1), in_dim, dtype)
        self.params = [wa, np.zeros(actions, dtype=dtype), ws, np.zeros(1, dtype=dtype)]
        self.grads = [np.zeros_like(p) for p in self.params]
        self._x = None

    def forward(self, x, train):
        wa, ba, ws, bs = self.params
        a = x @ wa + ba
        v = x @ ws + bs
        if train:
            self._x = x
        return a - a.mean(axis=1, keepdims=True) + v

    def backward(self, dout):
        wa, _, ws, _ = self.params
        da = dout - dout.mean(axis=1, keepdims=True)
        dv = dout.sum(axis=1, keepdims=True)
        x = self._x
        self.grads[0][...] = x.T @ da
        self.grads[1][...] = _colsum(da)
        self.grads[2][...] = x.T @ dv
        self.grads[3][...] = _colsum(dv)
        return da @ wa.T + dv @ ws.T

    def spec(self):
        return {"kind": "dueling_head", "in_dim": self.in_dim, "actions": self.actions}


LAYER_KINDS = {
    "conv2d": Conv2D,
    "batchnorm": BatchNorm,
    "relu": ReLU,
    "sigmoid": Sigmoid,
    "flatten": Flatten,
    "dense": Dense,
    "dropout": Dropout,
    "dueling_head": DuelingHead,
}


def layer_from_spec(spec: dict, dtype=np.float32) -> Layer:
    kind = spec["kind"]
    cls = LAYER_KINDS[kind]
    if kind == "conv2d":
        return cls(spec["in_ch"], spec["out_ch"], spec["kernel"], spec["pad"], dtype=dtype)
    if kind == "batchnorm":
        return cls(spec["channels"], spec["momentum"], spec["eps"], dtype=dtype)
    if kind == "dense":
        return cls(spec["in_dim"], spec["out_dim"], dtype=dtype)
    if kind == "dropout":
        return cls(spec["rate"])
    if kind == "dueling_head":
        return cls(spec["in_dim"], spec["actions"], dtype=dtype)
    return cls()


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements and its gradient w.r.t. ``pred``."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff

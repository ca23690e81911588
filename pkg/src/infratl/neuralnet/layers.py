"""Neural-network building blocks with explicit forward/backward passes.

Layers operate on numpy arrays in NHWC layout (batch, altitude, range,
channels) or (batch, features). Each layer caches what its backward pass needs
during forward; ``backward(dy)`` returns the input gradient and fills
``layer.grads``. Everything runs in float32 by default; pass
``dtype=np.float64`` when building a model for finite-difference verification.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def glorot_uniform(n_in, n_out, rng, shape=None, dtype=np.float32):
    """Uniform Glorot/Xavier init on [-sqrt(6/(n_in+n_out)), +sqrt(...)]."""
    if n_in < 1 or n_out < 1:
        raise ValueError("fan-in and fan-out must be >= 1")
    limit = np.sqrt(6.0 / (n_in + n_out))
    if shape is None:
        shape = (n_in, n_out)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def tanh(x):
    return np.tanh(x)


def tanh_grad_from_output(y):
    return 1.0 - y * y


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(x):
    return (x > 0).astype(x.dtype)


def linear(x):
    return x


def mse(y_true, y_pred):
    """Mean squared error over all elements and its gradient wrt predictions."""
    if y_true.shape != y_pred.shape:
        raise ValueError(f"shape mismatch {y_true.shape} vs {y_pred.shape}")
    diff = y_pred - y_true
    n = diff.size
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    grad = (2.0 / n) * diff
    return loss, grad


class Layer:
    """Minimal layer protocol; parameter-free layers leave params empty."""

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError


class Conv2D(Layer):
    """3x3 (or kxk) cross-correlation, stride 1, zero 'same' padding."""

    def __init__(self, in_ch, out_ch, ksize=3, rng=None, dtype=np.float32):
        super().__init__()
        self.ksize = ksize
        self.in_ch = in_ch
        self.out_ch = out_ch
        fan_in = ksize * ksize * in_ch
        fan_out = ksize * ksize * out_ch
        rng = rng or np.random.default_rng()
        self.params["W"] = glorot_uniform(fan_in, fan_out, rng,
                                          shape=(ksize, ksize, in_ch, out_ch), dtype=dtype)
        self.params["b"] = np.zeros(out_ch, dtype=dtype)
        self._cols = None
        self._x_shape = None

    def forward(self, x, training=False):
        if x.ndim != 4 or x.shape[3] != self.in_ch:
            raise ValueError(f"expected (B,H,W,{self.in_ch}) input, got {x.shape}")
        k = self.ksize
        pad = k // 2
        B, H, W, C = x.shape
        xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
        win = sliding_window_view(xp, (k, k), axis=(1, 2))   # (B,H,W,C,k,k)
        # (kh,kw,C) column order keeps the innermost copy axis contiguous
        cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(B * H * W, k * k * C)
        out = cols @ self.params["W"].reshape(k * k * C, self.out_ch)
        out += self.params["b"]
        self._cols = cols
        self._x_shape = x.shape
        return out.reshape(B, H, W, self.out_ch)

    def backward(self, dy):
        B, H, W, C = self._x_shape
        k = self.ksize
        pad = k // 2
        dy_flat = dy.reshape(B * H * W, self.out_ch)
        Wm = self.params["W"].reshape(k * k * C, self.out_ch)
        self.grads["W"] = (self._cols.T @ dy_flat).reshape(self.params["W"].shape)
        self.grads["b"] = dy_flat.sum(axis=0)
        dcols = (dy_flat @ Wm.T).reshape(B, H, W, k, k, C)
        dxp = np.zeros((B, H + 2 * pad, W + 2 * pad, C), dtype=dy.dtype)
        for di in range(k):
            for dj in range(k):
                dxp[:, di:di + H, dj:dj + W, :] += dcols[:, :, :, di, dj, :]
        self._cols = None
        return dxp[:, pad:pad + H, pad:pad + W, :]


class MaxPool2D(Layer):
    """Non-overlapping max pooling; stride equals the window.

    Backward routes each window's gradient to the first occurrence of the
    maximum (row-major within the window), so ties are deterministic.
    """

    def __init__(self, window):
        super().__init__()
        self.window = tuple(window)

    def forward(self, x, training=False):
        ph, pw = self.window
        B, H, W, C = x.shape
        if H % ph or W % pw:
            raise ValueError(f"input {H}x{W} not divisible by pool window {self.window}")
        Ho, Wo = H // ph, W // pw
        xw = x.reshape(B, Ho, ph, Wo, pw, C)
        # two-stage argmax (rows first) = first occurrence in row-major order
        i_pw = np.argmax(xw, axis=4)                            # (B,Ho,ph,Wo,C)
        v_pw = np.take_along_axis(xw, i_pw[:, :, :, :, None], axis=4)[:, :, :, :, 0]
        i_ph = np.argmax(v_pw, axis=2)                          # (B,Ho,Wo,C)
        out = np.take_along_axis(v_pw, i_ph[:, :, None], axis=2)[:, :, 0]
        self._i_ph = i_ph
        self._i_pw = np.take_along_axis(i_pw, i_ph[:, :, None], axis=2)[:, :, 0]
        self._in_shape = x.shape
        return out

    def backward(self, dy):
        ph, pw = self.window
        B, H, W, C = self._in_shape
        Ho, Wo = H // ph, W // pw
        flat = self._i_ph * pw + self._i_pw                     # window-flat index
        dxv = np.zeros((B, Ho, Wo, C, ph * pw), dtype=dy.dtype)
        np.put_along_axis(dxv, flat[..., None], dy[..., None], axis=-1)
        return dxv.reshape(B, Ho, Wo, C, ph, pw).transpose(0, 1, 4, 2, 5, 3).reshape(B, H, W, C)


class BatchNorm(Layer):
    """Per-feature batch normalization with running statistics for inference."""

    def __init__(self, n_features, eps=1e-3, momentum=0.99, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.params["gamma"] = np.ones(n_features, dtype=dtype)
        self.params["beta"] = np.zeros(n_features, dtype=dtype)
        self.running_mean = np.zeros(n_features, dtype=dtype)
        self.running_var = np.ones(n_features, dtype=dtype)

    def forward(self, x, training=False):
        if training:
            if x.shape[0] < 2:
                raise ValueError("batch normalization needs batch size >= 2 in training mode")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            m = self.momentum
            self.running_mean = (m * self.running_mean + (1 - m) * mean).astype(self.running_mean.dtype)
            self.running_var = (m * self.running_var + (1 - m) * var).astype(self.running_var.dtype)
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._xhat = xhat if training else None
        self._inv_std = inv_std
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, dy):
        if self._xhat is None:
            raise RuntimeError("backward called without a training-mode forward")
        xhat = self._xhat
        B = dy.shape[0]
        self.grads["gamma"] = (dy * xhat).sum(axis=0)
        self.grads["beta"] = dy.sum(axis=0)
        dxhat = dy * self.params["gamma"]
        dx = (self._inv_std / B) * (B * dxhat - dxhat.sum(axis=0)
                                    - xhat * (dxhat * xhat).sum(axis=0))
        self._xhat = None
        return dx


class Dense(Layer):
    def __init__(self, n_in, n_out, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.params["W"] = glorot_uniform(n_in, n_out, rng, dtype=dtype)
        self.params["b"] = np.zeros(n_out, dtype=dtype)

    def forward(self, x, training=False):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        self.grads["W"] = self._x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        self._x = None
        return dy @ self.params["W"].T


class Tanh(Layer):
    def forward(self, x, training=False):
        y = np.tanh(x)
        self._y = y
        return y

    def backward(self, dy):
        # reuse the cached activation buffer: dx = dy * (1 - y^2)
        dx = self._y
        np.multiply(dx, dx, out=dx)
        np.subtract(1.0, dx, out=dx)
        np.multiply(dy, dx, out=dx)
        self._y = None
        return dx


class ReLU(Layer):
    def forward(self, x, training=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0).astype(x.dtype)

    def backward(self, dy):
        dx = dy * self._mask
        self._mask = None
        return dx


class Dropout(Layer):
    """Inverted dropout: survivors scaled by 1/(1-rate); identity at inference."""

    def __init__(self, rate):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            self._scale = None
            return x
        rng = rng or np.random.default_rng()
        keep = rng.random(x.shape) >= self.rate
        self._scale = keep.astype(x.dtype) / (1.0 - self.rate)
        return x * self._scale

    def backward(self, dy):
        if self._scale is None:
            return dy
        dx = dy * self._scale
        self._scale = None
        return dx


class Adam:
    """Adaptive moment estimation with bias correction.

    ``step`` updates parameters in place from same-keyed gradient arrays.
    """

    def __init__(self, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for key, p in params.items():
            g = grads[key]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {key}")
            if key not in self.m:
                self.m[key] = np.zeros_like(p)
                self.v[key] = np.zeros_like(p)
            self.m[key] = b1 * self.m[key] + (1 - b1) * g
            self.v[key] = b2 * self.v[key] + (1 - b2) * (g * g)
            m_hat = self.m[key] / bc1
            v_hat = self.v[key] / bc2
            p -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)

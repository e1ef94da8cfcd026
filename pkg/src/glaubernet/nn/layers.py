"""Forward/backward layer kernels.

Activations live in NHWC layout.  Convolutions are stride-1 with zero
padding that preserves spatial shape; they are evaluated as one GEMM per
kernel offset over the whole padded tensor, which keeps the hot path inside
BLAS without materializing im2col patches.
"""

from __future__ import annotations

import numpy as np


class Layer:
    """Base: parameter-free unless a subclass fills .params / .grads."""

    def __init__(self, name: str):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _gemm_into(a, b, buf_holder, key, shape, dtype):
    """a @ b into a reusable scratch buffer (reallocated on shape change)."""
    buf = buf_holder.get(key)
    if buf is None or buf.shape != shape or buf.dtype != dtype:
        buf = np.empty(shape, dtype)
        buf_holder[key] = buf
    np.dot(a, b, out=buf)
    return buf


class Conv2d(Layer):
    def __init__(self, name, in_channels, out_channels, kernel=(3, 3)):
        super().__init__(name)
        kh, kw = kernel
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError("conv kernel sides must be odd (same padding)")
        self.kh, self.kw = kh, kw
        self.cin, self.cout = in_channels, out_channels
        self._scratch: dict = {}

    def init_params(self, rng: np.random.Generator, dtype) -> None:
        fan_in = self.kh * self.kw * self.cin
        std = np.sqrt(2.0 / fan_in)
        self.params = {
            "w": (rng.standard_normal((self.kh, self.kw, self.cin, self.cout))
                  * std).astype(dtype),
            "b": np.zeros(self.cout, dtype),
        }

    def forward(self, x, train):
        N, H, W, C = x.shape
        kh, kw = self.kh, self.kw
        ph, pw = kh // 2, kw // 2
        w, b = self.params["w"], self.params["b"]
        xp = np.zeros((N, H + 2 * ph, W + 2 * pw, C), x.dtype)
        xp[:, ph:ph + H, pw:pw + W, :] = x
        x2 = xp.reshape(-1, C)
        out = np.empty((N, H, W, self.cout), x.dtype)
        out[...] = b
        for ki in range(kh):
            for kj in range(kw):
                t = _gemm_into(x2, w[ki, kj], self._scratch, "fwd",
                               (x2.shape[0], self.cout), x.dtype)
                out += t.reshape(xp.shape[:3] + (self.cout,))[
                    :, ki:ki + H, kj:kj + W, :]
        if train:
            self._xp = xp
        return out

    def backward(self, dy):
        N, H, W, O = dy.shape
        kh, kw = self.kh, self.kw
        ph, pw = kh // 2, kw // 2
        xp, w = self._xp, self.params["w"]
        d2 = dy.reshape(-1, O)
        dw = np.empty_like(w)
        dxp = np.zeros_like(xp)
        for ki in range(kh):
            for kj in range(kw):
                xs = xp[:, ki:ki + H, kj:kj + W, :].reshape(-1, self.cin)
                np.dot(xs.T, d2, out=dw[ki, kj])
                t = _gemm_into(d2, np.ascontiguousarray(w[ki, kj].T),
                               self._scratch, "bwd",
                               (d2.shape[0], self.cin), dy.dtype)
                dxp[:, ki:ki + H, kj:kj + W, :] += t.reshape(N, H, W, self.cin)
        self.grads = {"w": dw, "b": d2.sum(axis=0)}
        return dxp[:, ph:ph + H, pw:pw + W, :]


class ReLU(Layer):
    def forward(self, x, train):
        out = np.maximum(x, 0)
        if train:
            self._mask = x > 0
        return out

    def backward(self, dy):
        return dy * self._mask


class MaxPool(Layer):
    """Non-overlapping (ph, pw) max pooling; trailing remainders are dropped."""

    def __init__(self, name, pool=(1, 2)):
        super().__init__(name)
        self.ph, self.pw = pool

    def forward(self, x, train):
        N, H, W, C = x.shape
        ph, pw = self.ph, self.pw
        Ho, Wo = H // ph, W // pw
        xr = x[:, :Ho * ph, :Wo * pw, :].reshape(N, Ho, ph, Wo, pw, C)
        xr = xr.transpose(0, 1, 3, 5, 2, 4).reshape(N, Ho, Wo, C, ph * pw)
        if train:
            self._idx = xr.argmax(axis=-1)
            self._in_shape = x.shape
        return xr.max(axis=-1)

    def backward(self, dy):
        N, H, W, C = self._in_shape
        ph, pw = self.ph, self.pw
        Ho, Wo = H // ph, W // pw
        dxr = np.zeros((N, Ho, Wo, C, ph * pw), dy.dtype)
        np.put_along_axis(dxr, self._idx[..., None], dy[..., None], axis=-1)
        dxr = dxr.reshape(N, Ho, Wo, C, ph, pw).transpose(0, 1, 4, 2, 5, 3)
        dx = np.zeros((N, H, W, C), dy.dtype)
        dx[:, :Ho * ph, :Wo * pw, :] = dxr.reshape(N, Ho * ph, Wo * pw, C)
        return dx


class Flatten(Layer):
    def forward(self, x, train):
        if train:
            self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Dense(Layer):
    def __init__(self, name, in_width, out_width, head=False):
        super().__init__(name)
        self.win, self.wout = in_width, out_width
        self.head = head  # output layer: gentler init, no ReLU after

    def init_params(self, rng, dtype):
        std = np.sqrt((1.0 if self.head else 2.0) / self.win)
        self.params = {
            "w": (rng.standard_normal((self.win, self.wout)) * std).astype(dtype),
            "b": np.zeros(self.wout, dtype),
        }

    def forward(self, x, train):
        if train:
            self._x = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, dy):
        self.grads = {"w": self._x.T @ dy, "b": dy.sum(axis=0)}
        return dy @ self.params["w"].T

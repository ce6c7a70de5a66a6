"""NCHW layers with explicit forward/backward in numpy.

Conv and FC layers support three forward modes:

* ``fp32``          plain arithmetic
* ``fake_quant``    weights and inputs pass through the layer's quantizer;
                    arithmetic stays in master precision
* ``approx_posit``  posit(8,2) operands, every inner product evaluated by
                    the exact-accumulator MAC engine with the approximate
                    multiplier, chunked into ``lanes``-wide requests
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..fastmac import MacEngine
from ..posit import round_array, value_table
from .quant import fake_quant

MODES = ("fp32", "fake_quant", "approx_posit")


@dataclass
class ApproxContext:
    engine: MacEngine
    lanes: int = 4
    feedback: str = "posit"
    # split large matmuls so the int64 work arrays stay small
    max_rows: int = 8192


class Layer:
    def __init__(self):
        self.params = {}
        self.grads = {}

    def output_shape(self, in_shape):
        return in_shape

    def forward(self, x, mode="fp32", approx=None):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


def _approx_matmul(x2d: np.ndarray, w2d: np.ndarray, b: np.ndarray, ctx: ApproxContext) -> np.ndarray:
    a_bits = round_array(x2d).astype(np.int64)
    w_bits = round_array(w2d).astype(np.int64)
    b_bits = round_array(b).astype(np.int64)
    out = np.empty((x2d.shape[0], w2d.shape[1]), dtype=np.float64)
    values = value_table()
    for start in range(0, x2d.shape[0], ctx.max_rows):
        stop = start + ctx.max_rows
        bits = ctx.engine.matmul(a_bits[start:stop], w_bits, b_bits, lanes=ctx.lanes, feedback=ctx.feedback)
        out[start:stop] = values[bits]
    return out


class QuantLayer(Layer):
    """Shared fake-quant plumbing for Conv2d / Dense."""

    def __init__(self, quant: str = "none"):
        super().__init__()
        self.quant = quant
        self._cache = None

    def _quantized_operands(self, x, mode):
        W = self.params["W"]
        if mode == "fake_quant":
            wq, wmask = fake_quant(W, self.quant)
            xq, xmask = fake_quant(x, self.quant)
            return xq, wq, xmask, wmask
        if mode == "approx_posit":
            # the MAC engine sees posit operands; cache them for STE backward
            wq, wmask = fake_quant(W, "posit82")
            xq, xmask = fake_quant(x, "posit82")
            return xq, wq, xmask, wmask
        return x, W, None, None


class Conv2d(QuantLayer):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int = 1, quant: str = "none"):
        super().__init__(quant)
        self.in_ch, self.out_ch, self.kernel, self.stride = in_ch, out_ch, kernel, stride
        self.params = {
            "W": np.zeros((out_ch, in_ch, kernel, kernel), dtype=np.float32),
            "b": np.zeros(out_ch, dtype=np.float32),
        }

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_ch:
            raise ValueError(f"conv expects {self.in_ch} input channels, got {c}")
        for name, dim in (("height", h), ("width", w)):
            if dim < self.kernel or (dim - self.kernel) % self.stride:
                raise ValueError(f"conv {name} {dim} incompatible with kernel {self.kernel}, stride {self.stride}")
        return self.out_ch, (h - self.kernel) // self.stride + 1, (w - self.kernel) // self.stride + 1

    def _im2col(self, x):
        k, s = self.kernel, self.stride
        win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]  # B, C, OH, OW, k, k
        b, c, oh, ow = win.shape[:4]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * oh * ow, c * k * k)
        return cols, (b, oh, ow)

    def forward(self, x, mode="fp32", approx=None):
        self.output_shape(x.shape[1:])
        xq, wq, xmask, wmask = self._quantized_operands(x, mode)
        cols, (bsz, oh, ow) = self._im2col(xq)
        wmat = wq.reshape(self.out_ch, -1).T  # (C*k*k, out)
        if mode == "approx_posit":
            z = _approx_matmul(cols, wmat, self.params["b"], approx).astype(x.dtype)
        else:
            z = cols @ wmat + self.params["b"]
        self._cache = (x.shape, cols, wmat, xmask, wmask)
        return z.reshape(bsz, oh, ow, self.out_ch).transpose(0, 3, 1, 2)

    def backward(self, dy):
        x_shape, cols, wmat, xmask, wmask = self._cache
        bsz, _, oh, ow = dy.shape
        dz = dy.transpose(0, 2, 3, 1).reshape(-1, self.out_ch)
        dW = (cols.T @ dz).T.reshape(self.params["W"].shape)
        if wmask is not None:
            dW = dW * wmask
        self.grads = {"W": dW, "b": dz.sum(axis=0)}

        dcols = (dz @ wmat.T).reshape(bsz, oh, ow, self.in_ch, self.kernel, self.kernel)
        dx = np.zeros(x_shape, dtype=dy.dtype)
        s = self.stride
        for i in range(self.kernel):
            for j in range(self.kernel):
                dx[:, :, i:i + s * oh:s, j:j + s * ow:s] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        if xmask is not None:
            dx = dx * xmask
        return dx

    def describe(self):
        return {"type": "conv", "out_ch": self.out_ch, "kernel": self.kernel, "stride": self.stride}


class Dense(QuantLayer):
    def __init__(self, in_features: int, units: int, quant: str = "none"):
        super().__init__(quant)
        self.in_features, self.units = in_features, units
        self.params = {
            "W": np.zeros((in_features, units), dtype=np.float32),
            "b": np.zeros(units, dtype=np.float32),
        }

    def output_shape(self, in_shape):
        if tuple(in_shape) != (self.in_features,):
            raise ValueError(f"fc expects ({self.in_features},) input, got {tuple(in_shape)}")
        return (self.units,)

    def forward(self, x, mode="fp32", approx=None):
        self.output_shape(x.shape[1:])
        xq, wq, xmask, wmask = self._quantized_operands(x, mode)
        if mode == "approx_posit":
            z = _approx_matmul(xq, wq, self.params["b"], approx).astype(x.dtype)
        else:
            z = xq @ wq + self.params["b"]
        self._cache = (xq, wq, xmask, wmask)
        return z

    def backward(self, dy):
        xq, wq, xmask, wmask = self._cache
        dW = xq.T @ dy
        if wmask is not None:
            dW = dW * wmask
        self.grads = {"W": dW, "b": dy.sum(axis=0)}
        dx = dy @ wq.T
        if xmask is not None:
            dx = dx * xmask
        return dx

    def describe(self):
        return {"type": "fc", "units": self.units}


class MaxPool2d(Layer):
    def __init__(self, size: int = 2):
        super().__init__()
        self.size = size
        self._cache = None

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if h % self.size or w % self.size:
            raise ValueError(f"maxpool {self.size} needs dimensions divisible by {self.size}, got {h}x{w}")
        return c, h // self.size, w // self.size

    def forward(self, x, mode="fp32", approx=None):
        self.output_shape(x.shape[1:])
        b, c, h, w = x.shape
        s = self.size
        win = x.reshape(b, c, h // s, s, w // s, s).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // s, w // s, s * s)
        arg = win.argmax(axis=-1)
        self._cache = (x.shape, arg)
        return np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        shape, arg = self._cache
        b, c, h, w = shape
        s = self.size
        dwin = np.zeros((b, c, h // s, w // s, s * s), dtype=dy.dtype)
        np.put_along_axis(dwin, arg[..., None], dy[..., None], axis=-1)
        return dwin.reshape(b, c, h // s, w // s, s, s).transpose(0, 1, 2, 4, 3, 5).reshape(shape)

    def describe(self):
        return {"type": "maxpool", "size": self.size}


class Tanh(Layer):
    def forward(self, x, mode="fp32", approx=None):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy):
        return dy * (1 - self._y * self._y)

    def describe(self):
        return {"type": "tanh"}


class Flatten(Layer):
    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, mode="fp32", approx=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)

    def describe(self):
        return {"type": "flatten"}


class Softmax(Layer):
    """Softmax output; backward expects labels and yields the fused CE gradient."""

    def forward(self, x, mode="fp32", approx=None):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        self._p = e / e.sum(axis=1, keepdims=True)
        return self._p

    def backward(self, labels):
        p = self._p
        d = p.copy()
        d[np.arange(len(labels)), labels] -= 1
        return d / len(labels)

    def describe(self):
        return {"type": "softmax"}


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    eps = np.finfo(probs.dtype).tiny
    return float(-np.mean(np.log(np.maximum(probs[np.arange(len(labels)), labels], eps))))

"""Sequential network: construction from a JSON-style spec, forward/backward, checkpoints."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..fastmac import engine_for
from ..multipliers import EXACT4, MultiplierSpec, make_spec
from .layers import MODES, ApproxContext, Conv2d, Dense, Flatten, Layer, MaxPool2d, Softmax, Tanh
from .quant import parse_mode

CHECKPOINT_MAGIC = b"REAPNN1"

LENET5_LAYERS = [
    {"type": "conv", "out_ch": 6, "kernel": 5, "stride": 1},
    {"type": "tanh"},
    {"type": "maxpool", "size": 2},
    {"type": "conv", "out_ch": 16, "kernel": 5, "stride": 1},
    {"type": "tanh"},
    {"type": "maxpool", "size": 2},
    {"type": "fc", "units": 120},
    {"type": "tanh"},
    {"type": "fc", "units": 84},
    {"type": "tanh"},
    {"type": "fc", "units": 10},
    {"type": "softmax"},
]


class StructureError(ValueError):
    pass


@dataclass
class NetworkSpec:
    layers: list[dict] = field(default_factory=lambda: [dict(d) for d in LENET5_LAYERS])
    input_shape: tuple[int, int, int] = (1, 28, 28)
    quant_mode: str = "posit82"
    multiplier: MultiplierSpec = EXACT4
    lanes: int = 4
    acc_feedback: str = "posit"

    @classmethod
    def from_dict(cls, d: dict) -> NetworkSpec:
        mult = d.get("multiplier") or {}
        spec = cls(
            layers=[dict(x) for x in d.get("layers", LENET5_LAYERS)],
            input_shape=tuple(d.get("input_shape", (1, 28, 28))),
            quant_mode=d.get("quant_mode", "posit82"),
            multiplier=make_spec(mult.get("kind", "exact"), mult.get("width", 4), mult.get("t"),
                                 mult.get("lut_path")),
            lanes=int(d.get("lanes", 4)),
            acc_feedback=d.get("acc_feedback", "posit"),
        )
        parse_mode(spec.quant_mode)
        return spec

    def to_dict(self) -> dict:
        m = self.multiplier
        return {
            "layers": self.layers,
            "input_shape": list(self.input_shape),
            "quant_mode": self.quant_mode,
            "multiplier": {"kind": m.kind.value, "width": m.width, "t": m.trunc, "lut_path": m.lut_path},
            "lanes": self.lanes,
            "acc_feedback": self.acc_feedback,
        }


def _build_layer(d: dict, in_shape, quant: str) -> Layer:
    kind = d.get("type")
    q = d.get("quant", quant)
    if kind == "conv":
        return Conv2d(in_shape[0], int(d["out_ch"]), int(d["kernel"]), int(d.get("stride", 1)), q)
    if kind == "fc":
        return Dense(in_shape[0], int(d["units"]), q)
    if kind == "maxpool":
        return MaxPool2d(int(d.get("size", 2)))
    if kind == "tanh":
        return Tanh()
    if kind == "softmax":
        return Softmax()
    if kind == "flatten":
        return Flatten()
    raise StructureError(f"unknown layer type {kind!r}")


class Network:
    def __init__(self, spec: NetworkSpec | None = None, dtype=np.float32):
        self.spec = spec or NetworkSpec()
        self.dtype = np.dtype(dtype)
        self.layers: list[Layer] = []
        shape = tuple(self.spec.input_shape)
        for d in self.spec.layers:
            if d.get("type") == "fc" and len(shape) != 1:
                flat = Flatten()
                self.layers.append(flat)
                shape = flat.output_shape(shape)
            layer = _build_layer(d, shape, self.spec.quant_mode)
            try:
                shape = layer.output_shape(shape)
            except ValueError as exc:
                raise StructureError(f"layer {d}: {exc}") from None
            self.layers.append(layer)
        if not self.layers or not isinstance(self.layers[-1], Softmax):
            raise StructureError("network must end with a softmax layer")
        self.output_shape = shape
        for layer in self.layers:
            for k, v in layer.params.items():
                layer.params[k] = v.astype(self.dtype)
        self._approx = None

    # -- parameters -----------------------------------------------------------

    def param_layers(self):
        return [l for l in self.layers if l.params]

    def parameters(self) -> list[np.ndarray]:
        return [p for l in self.param_layers() for p in l.params.values()]

    def gradients(self) -> list[np.ndarray]:
        return [l.grads[k] for l in self.param_layers() for k in l.params]

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def init_params(self, seed: int = 0):
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        for layer in self.param_layers():
            W = layer.params["W"]
            if isinstance(layer, Conv2d):
                fan_in = layer.in_ch * layer.kernel ** 2
                fan_out = layer.out_ch * layer.kernel ** 2
            else:
                fan_in, fan_out = W.shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            layer.params["W"] = rng.uniform(-limit, limit, W.shape).astype(self.dtype)
            layer.params["b"] = np.zeros_like(layer.params["b"])
        return self

    # -- forward/backward -------------------------------------------------------

    def approx_context(self) -> ApproxContext:
        if self._approx is None or self._approx.engine.multiplier != self.spec.multiplier:
            self._approx = ApproxContext(engine_for(self.spec.multiplier), self.spec.lanes, self.spec.acc_feedback)
        return self._approx

    def forward(self, x: np.ndarray, mode: str = "fp32") -> np.ndarray:
        if mode not in MODES:
            raise ValueError(f"unknown forward mode {mode!r}")
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 3:
            x = x[:, None]
        if tuple(x.shape[1:]) != tuple(self.spec.input_shape):
            raise StructureError(f"input shape {tuple(x.shape[1:])} != {tuple(self.spec.input_shape)}")
        approx = self.approx_context() if mode == "approx_posit" else None
        for layer in self.layers:
            x = layer.forward(x, mode, approx)
        return x

    def backward(self, labels: np.ndarray):
        d = self.layers[-1].backward(np.asarray(labels))
        for layer in reversed(self.layers[:-1]):
            d = layer.backward(d)
        return self.gradients()

    def predict(self, x: np.ndarray, mode: str = "fp32", batch: int = 500) -> np.ndarray:
        out = []
        for i in range(0, len(x), batch):
            out.append(self.forward(x[i:i + batch], mode).argmax(axis=1))
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    # -- checkpoints --------------------------------------------------------------

    def save(self, path: str | Path) -> Path:
        """Binary layout (little-endian):

        magic b"REAPNN1" | u32 spec_len | spec JSON (utf-8) | u32 layer_count |
        per parameter layer: u32 tensor_count, per tensor: u32 ndim,
        ndim x u32 dims, prod(dims) x f32
        """
        path = Path(path)
        spec_json = json.dumps(self.spec.to_dict(), sort_keys=True).encode()
        parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(spec_json)), spec_json]
        layers = self.param_layers()
        parts.append(struct.pack("<I", len(layers)))
        for layer in layers:
            parts.append(struct.pack("<I", len(layer.params)))
            for name in ("W", "b"):
                t = np.ascontiguousarray(layer.params[name], dtype="<f4")
                parts.append(struct.pack("<I", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape))
                parts.append(t.tobytes())
        path.write_bytes(b"".join(parts))
        return path

    @classmethod
    def load(cls, path: str | Path) -> Network:
        raw = Path(path).read_bytes()
        if not raw.startswith(CHECKPOINT_MAGIC):
            raise StructureError(f"{path}: not a REAPNN1 checkpoint")
        pos = len(CHECKPOINT_MAGIC)

        def take(fmt):
            nonlocal pos
            size = struct.calcsize(fmt)
            if pos + size > len(raw):
                raise StructureError(f"{path}: truncated checkpoint")
            vals = struct.unpack_from(fmt, raw, pos)
            pos += size
            return vals

        (spec_len,) = take("<I")
        spec = NetworkSpec.from_dict(json.loads(raw[pos:pos + spec_len]))
        pos += spec_len
        net = cls(spec)
        (n_layers,) = take("<I")
        layers = net.param_layers()
        if n_layers != len(layers):
            raise StructureError(f"{path}: {n_layers} parameter layers, network has {len(layers)}")
        for layer in layers:
            (n_tensors,) = take("<I")
            if n_tensors != 2:
                raise StructureError(f"{path}: expected 2 tensors per layer, got {n_tensors}")
            for name in ("W", "b"):
                (ndim,) = take("<I")
                shape = take(f"<{ndim}I")
                if tuple(shape) != layer.params[name].shape:
                    raise StructureError(f"{path}: tensor shape {shape} != {layer.params[name].shape}")
                count = int(np.prod(shape))
                if pos + 4 * count > len(raw):
                    raise StructureError(f"{path}: truncated checkpoint")
                data = np.frombuffer(raw, dtype="<f4", count=count, offset=pos)
                pos += 4 * count
                layer.params[name] = data.reshape(shape).astype(net.dtype)
        return net


def sgd_update(weights: list[np.ndarray], grads: list[np.ndarray], eta: float) -> list[np.ndarray]:
    """W <- W - eta * dL/dW_hat, in place on the master copies."""
    if len(weights) != len(grads):
        raise ValueError(f"{len(weights)} weight tensors but {len(grads)} gradients")
    for w, g in zip(weights, grads):
        if w.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != weight shape {w.shape}")
        w -= (eta * g).astype(w.dtype, copy=False)
    return weights

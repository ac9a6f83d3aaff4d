"""Declarative layer stacks and the reference candlestick CNN."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ..errors import ContractError, TrainingDiverged
from . import layers as L


@dataclass(frozen=True)
class ConvSpec:
    filters: int


@dataclass(frozen=True)
class PoolSpec:
    pass


@dataclass(frozen=True)
class DropoutSpec:
    rate: float


@dataclass(frozen=True)
class ResidualSpec:
    pass  # channel count is inherited from the input


@dataclass(frozen=True)
class FlattenSpec:
    pass


@dataclass(frozen=True)
class DenseSpec:
    units: int
    relu: bool = True


@dataclass(frozen=True)
class SoftmaxOutput:
    units: int = 2


LayerSpec = Union[ConvSpec, PoolSpec, DropoutSpec, ResidualSpec, FlattenSpec, DenseSpec, SoftmaxOutput]

# Dropout placement follows the table; the rates themselves are our choice.
MID_DROPOUT = 0.25
HEAD_DROPOUT = 0.5


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]

    def shape_trace(self) -> list[tuple[int, ...]]:
        """Output shape after each layer descriptor (batch axis omitted)."""
        shape: tuple[int, ...] = self.input_shape
        trace = []
        for spec in self.layers:
            if isinstance(spec, ConvSpec):
                shape = (shape[0], shape[1], spec.filters)
            elif isinstance(spec, PoolSpec):
                if shape[0] < 2 or shape[1] < 2:
                    raise ContractError(f"cannot max-pool a {shape[0]}x{shape[1]} map")
                shape = (shape[0] // 2, shape[1] // 2, shape[2])
            elif isinstance(spec, FlattenSpec):
                shape = (int(np.prod(shape)),)
            elif isinstance(spec, (DenseSpec, SoftmaxOutput)):
                if len(shape) != 1:
                    raise ContractError("dense layer needs a flattened input")
                shape = (spec.units,)
            trace.append(shape)
        return trace

    @property
    def flatten_size(self) -> int:
        for spec, shape in zip(self.layers, self.shape_trace()):
            if isinstance(spec, FlattenSpec):
                return shape[0]
        raise ContractError("network has no Flatten layer")


def build_table2_network(spec) -> NetworkSpec:
    """Conv32-pool-Conv48-pool-Drop-Conv64-pool-Conv96-pool-Drop-Flatten-Dense256-Drop-Dense2.

    ``spec`` is a DatasetSpec (only ``dimension`` is used); inputs are RGB.
    """
    d = spec.dimension
    if d < 16:
        raise ContractError(f"dimension {d} is too small for four 2x2 poolings (need >= 16)")
    net = NetworkSpec(
        (d, d, 3),
        (
            ConvSpec(32), PoolSpec(),
            ConvSpec(48), PoolSpec(), DropoutSpec(MID_DROPOUT),
            ConvSpec(64), PoolSpec(),
            ConvSpec(96), PoolSpec(), DropoutSpec(MID_DROPOUT),
            FlattenSpec(),
            DenseSpec(256), DropoutSpec(HEAD_DROPOUT),
            SoftmaxOutput(2),
        ),
    )  # fmt: skip
    net.shape_trace()
    return net


class Network:
    """A concrete, trainable instance of a NetworkSpec."""

    def __init__(self, spec: NetworkSpec, seed: int = 0, dtype=np.float32):
        if not spec.layers or not isinstance(spec.layers[-1], SoftmaxOutput) or spec.layers[-1].units != 2:
            raise ContractError("network must end in a 2-unit softmax output")
        self.spec = spec
        self.layers: list[L.Layer] = []
        counts: dict[str, int] = {}

        def name(kind):
            counts[kind] = counts.get(kind, 0) + 1
            return f"{kind}{counts[kind]}"

        shapes = [spec.input_shape] + spec.shape_trace()
        rng = np.random.default_rng(seed)
        for ls, shape_in in zip(spec.layers, shapes):
            if isinstance(ls, ConvSpec):
                conv = L.Conv2D(shape_in[2], ls.filters, name("conv"))
                conv.params["kernel"] = _he((3, 3, shape_in[2], ls.filters), 9 * shape_in[2], rng)
                self.layers += [conv, L.ReLU(conv.name + ".relu")]
            elif isinstance(ls, PoolSpec):
                self.layers.append(L.MaxPool2D(name("pool")))
            elif isinstance(ls, DropoutSpec):
                self.layers.append(L.Dropout(ls.rate, name("dropout")))
            elif isinstance(ls, ResidualSpec):
                res = L.Residual(shape_in[2], name("residual"))
                fan_in = 9 * shape_in[2]
                res.params["kernel1"] = _he(res.params["kernel1"].shape, fan_in, rng)
                res.params["kernel2"] = _he(res.params["kernel2"].shape, fan_in, rng)
                self.layers.append(res)
            elif isinstance(ls, FlattenSpec):
                self.layers.append(L.Flatten(name("flatten")))
            elif isinstance(ls, DenseSpec):
                dn = L.Dense(shape_in[0], ls.units, name("dense"))
                dn.params["weight"] = _he((shape_in[0], ls.units), shape_in[0], rng)
                self.layers.append(dn)
                if ls.relu:
                    self.layers.append(L.ReLU(dn.name + ".relu"))
            elif isinstance(ls, SoftmaxOutput):
                dn = L.Dense(shape_in[0], ls.units, name("dense"))
                limit = np.sqrt(6.0 / (shape_in[0] + ls.units))  # Glorot-uniform: this layer feeds softmax
                dn.params["weight"] = rng.uniform(-limit, limit, (shape_in[0], ls.units)).astype(np.float32)
                self.layers.append(dn)
        self.astype(dtype)

    # parameters ------------------------------------------------------------

    def named_params(self) -> dict[str, np.ndarray]:
        return {f"{l.name}.{k}": v for l in self.layers for k, v in l.params.items()}

    def named_grads(self) -> dict[str, np.ndarray]:
        return {f"{l.name}.{k}": v for l in self.layers for k, v in l.grads.items()}

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        own = self.named_params()
        if set(params) != set(own):
            raise ContractError(f"parameter names differ: {sorted(set(params) ^ set(own))}")
        for key, val in params.items():
            if val.shape != own[key].shape:
                raise ContractError(f"{key}: expected shape {own[key].shape}, got {val.shape}")
        for l in self.layers:
            for k in l.params:
                l.params[k] = np.array(params[f"{l.name}.{k}"], dtype=self.dtype)

    def astype(self, dtype) -> "Network":
        self.dtype = np.dtype(dtype)
        for l in self.layers:
            for k in l.params:
                l.params[k] = l.params[k].astype(self.dtype)
        return self

    def checksum(self) -> str:
        h = hashlib.sha256()
        for key, val in self.named_params().items():
            h.update(key.encode())
            h.update(np.ascontiguousarray(val).tobytes())
        return h.hexdigest()

    def seed_dropout(self, seed: int) -> None:
        seqs = np.random.SeedSequence(seed).spawn(len(self.layers))
        for l, s in zip(self.layers, seqs):
            if isinstance(l, L.Dropout):
                l.rng = np.random.default_rng(s)

    # passes ------------------------------------------------------------------

    def forward(self, x: np.ndarray, training: bool = False, check_finite: bool = False) -> np.ndarray:
        """Logits for a batch (N, H, W, C)."""
        if x.ndim != 4 or tuple(x.shape[1:]) != tuple(self.spec.input_shape):
            raise ContractError(f"expected input (N, {', '.join(map(str, self.spec.input_shape))}), got {x.shape}")
        x = x.astype(self.dtype, copy=False)
        for l in self.layers:
            x = l.forward(x, training)
            if check_finite and not np.isfinite(x).all():
                raise TrainingDiverged(l.name)
        return x

    def backward(self, grad_logits: np.ndarray) -> np.ndarray:
        g = grad_logits
        for l in reversed(self.layers):
            g = l.backward(g)
        return g

    def predict_proba(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Eval-mode class probabilities, shape (N, 2)."""
        out = [L.softmax(self.forward(x[i : i + batch_size])) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, 2), self.dtype)


def _he(shape, fan_in, rng) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)


def predict(network: Network, image: np.ndarray) -> tuple[int, tuple[float, float]]:
    """Label (0 = Down, 1 = Up) and the (P(Down), P(Up)) pair for one HWC image."""
    if image.ndim != 3:
        raise ContractError(f"expected one HWC image, got shape {image.shape}")
    p = network.predict_proba(image[None])[0].astype(np.float64)
    return int(p[1] > p[0]), (float(p[0]), float(p[1]))

"""Declarative network descriptions: ``LayerSpec`` and ``NetworkConfig``."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import ShapeError, ValidationError
from .tensor import ConvGeometry

KINDS = ("conv", "relu", "maxpool", "flatten", "dense", "dropout", "softmax")
PARAM_KINDS = ("conv", "dense")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    geometry: ConvGeometry | None = None
    in_features: int | None = None
    out_features: int | None = None
    rate: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv" and self.geometry is None:
            raise ValidationError("conv layer needs a geometry")
        if self.kind == "dense" and (not self.in_features or not self.out_features):
            raise ValidationError("dense layer needs in_features and out_features")
        if self.kind == "dropout" and not (self.rate is not None and 0.0 <= self.rate < 1.0):
            raise ValidationError(f"dropout rate must lie in [0, 1), got {self.rate}")

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        """Per-example output shape (no batch axis) for per-example ``shape``."""
        k = self.kind
        if k == "conv":
            g = self.geometry
            if len(shape) != 3 or shape[0] != g.in_channels:
                raise ShapeError(f"conv expects ({g.in_channels}, H, W), got {shape}")
            return (g.out_channels, *g.output_size(shape[1], shape[2]))
        if k == "maxpool":
            if len(shape) != 3 or shape[1] % 2 or shape[2] % 2:
                raise ShapeError(f"maxpool expects (C, even H, even W), got {shape}")
            return (shape[0], shape[1] // 2, shape[2] // 2)
        if k == "flatten":
            return (math.prod(shape),)
        if k == "dense":
            if shape != (self.in_features,):
                raise ShapeError(f"dense expects ({self.in_features},), got {shape}")
            return (self.out_features,)
        return tuple(shape)

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        if self.kind == "conv":
            return [("weight", self.geometry.weight_shape), ("bias", (self.geometry.out_channels,))]
        if self.kind == "dense":
            return [("weight", (self.out_features, self.in_features)), ("bias", (self.out_features,))]
        return []

    def fan_in(self) -> int:
        if self.kind == "conv":
            g = self.geometry
            return g.in_channels * g.kernel_h * g.kernel_w
        return self.in_features

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "conv":
            g = self.geometry
            d.update(in_channels=g.in_channels, out_channels=g.out_channels, kernel_h=g.kernel_h,
                     kernel_w=g.kernel_w, stride=g.stride, padding=g.padding)
        elif self.kind == "dense":
            d.update(in_features=self.in_features, out_features=self.out_features)
        elif self.kind == "dropout":
            d.update(rate=self.rate)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        d = dict(d)
        kind = d.pop("kind")
        if kind == "conv":
            return cls(kind, geometry=ConvGeometry(**d))
        return cls(kind, **d)


def conv(in_channels, out_channels, kernel=3, stride=1, padding=1) -> LayerSpec:
    return LayerSpec("conv", geometry=ConvGeometry(in_channels, out_channels, kernel, kernel, stride, padding))


def dense(in_features, out_features) -> LayerSpec:
    return LayerSpec("dense", in_features=in_features, out_features=out_features)


def dropout(rate) -> LayerSpec:
    return LayerSpec("dropout", rate=rate)


def relu() -> LayerSpec:
    return LayerSpec("relu")


def maxpool() -> LayerSpec:
    return LayerSpec("maxpool")


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


def softmax() -> LayerSpec:
    return LayerSpec("softmax")


@dataclass(frozen=True)
class NetworkConfig:
    """Ordered layer list plus the per-example input shape ``(C, H, W)``.

    Construction walks the shapes end to end, so an instance is always
    consistent and ends in ``num_classes`` outputs.
    """

    name: str
    input_shape: tuple[int, ...]
    num_classes: int
    layers: tuple[LayerSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        out = self.shapes()[-1]
        if out != (self.num_classes,):
            raise ShapeError(f"{self.name}: network ends in shape {out}, expected ({self.num_classes},)")

    def shapes(self) -> list[tuple[int, ...]]:
        """Per-example shapes: entry 0 is the input, entry i+1 the output of layer i."""
        shapes = [self.input_shape]
        for i, layer in enumerate(self.layers):
            try:
                shapes.append(layer.output_shape(shapes[-1]))
            except ShapeError as e:
                raise ShapeError(f"{self.name}: layer {i} ({layer.kind}): {e}") from None
        return shapes

    def param_names(self, index: int) -> list[str]:
        layer = self.layers[index]
        return [f"{layer.kind}{index}.{p}" for p, _ in layer.param_shapes()]

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        out = []
        for i, layer in enumerate(self.layers):
            for p, shape in layer.param_shapes():
                out.append((f"{layer.kind}{i}.{p}", shape))
        return out

    def head_index(self) -> int:
        """Index of the last parameterised layer (the classifier head)."""
        for i in range(len(self.layers) - 1, -1, -1):
            if self.layers[i].kind in PARAM_KINDS:
                return i
        raise ValidationError(f"{self.name}: network has no parameterised layer")

    def count_params(self) -> int:
        return sum(math.prod(shape) for _, shape in self.param_shapes())

    def with_dropout(self, rate: float) -> "NetworkConfig":
        layers = [dropout(rate) if l.kind == "dropout" else l for l in self.layers]
        return NetworkConfig(self.name, self.input_shape, self.num_classes, tuple(layers))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "layers": [l.to_dict() for l in self.layers],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(d["name"], tuple(d["input_shape"]), d["num_classes"],
                   tuple(LayerSpec.from_dict(l) for l in d["layers"]))

    @classmethod
    def from_json(cls, text: str) -> "NetworkConfig":
        return cls.from_dict(json.loads(text))

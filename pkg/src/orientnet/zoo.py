"""Named network configurations."""
from __future__ import annotations

from .config import NetworkConfig, conv, dense, dropout, flatten, maxpool, relu
from .errors import ValidationError

MODEL_NAMES = ("vgg16-orient", "tiny-orient")
DEFAULT_DROPOUT = 0.7

# VGG-16 ("configuration D"): channel counts, "M" marks a 2x2 max-pool
_VGG16_STACK = (64, 64, "M", 128, 128, "M", 256, 256, 256, "M",
                512, 512, 512, "M", 512, 512, 512, "M")


def vgg16_orient(input_side: int = 224, num_classes: int = 4, drop_rate: float = DEFAULT_DROPOUT) -> NetworkConfig:
    if input_side != 224:
        raise ValidationError(f"vgg16-orient requires input side 224, got {input_side}")
    layers = []
    channels = 3
    for item in _VGG16_STACK:
        if item == "M":
            layers.append(maxpool())
        else:
            layers += [conv(channels, item), relu()]
            channels = item
    layers += [
        flatten(),
        dense(512 * 7 * 7, 4096), relu(), dropout(drop_rate),
        dense(4096, 4096), relu(), dropout(drop_rate),
        dense(4096, num_classes),
    ]
    return NetworkConfig("vgg16-orient", (3, input_side, input_side), num_classes, tuple(layers))


def tiny_orient(input_side: int = 32, num_classes: int = 4, drop_rate: float = DEFAULT_DROPOUT) -> NetworkConfig:
    if input_side not in (32, 64):
        raise ValidationError(f"tiny-orient supports input side 32 or 64, got {input_side}")
    feat = input_side // 8
    layers = (
        conv(3, 16), relu(), maxpool(),
        conv(16, 32), relu(), maxpool(),
        conv(32, 32), relu(), maxpool(),
        flatten(),
        dense(32 * feat * feat, 128), relu(), dropout(drop_rate),
        dense(128, num_classes),
    )
    return NetworkConfig("tiny-orient", (3, input_side, input_side), num_classes, layers)


def build_model(name: str, input_side: int | None = None, **kwargs) -> NetworkConfig:
    """Return the config registered under ``name`` for square inputs of ``input_side``."""
    if name == "vgg16-orient":
        return vgg16_orient(224 if input_side is None else input_side, **kwargs)
    if name == "tiny-orient":
        return tiny_orient(32 if input_side is None else input_side, **kwargs)
    raise ValidationError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")


def count_params(config: NetworkConfig) -> int:
    """Total number of weight and bias elements."""
    return config.count_params()

"""Guided Backpropagation saliency maps.

The backward pass starts from a one-hot seed on one output unit. At every
ReLU the gradient is kept only where the unit was active in the forward
pass and the incoming gradient is positive. Other layers backpropagate as
usual, and max-pooling still routes through its stored argmax.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import NetworkConfig
from .errors import ShapeError, ValidationError
from .nn import RELU_GUIDED, RELU_STANDARD, backward, forward


@dataclass
class SaliencyMap:
    values: np.ndarray  # (C, H, W), signed
    image_id: str
    target: int
    was_argmax: bool
    logits: np.ndarray | None = None


def select_explained_output(logits) -> int:
    """Index of the largest output; ties go to the lowest index."""
    logits = np.asarray(logits, dtype=np.float64).ravel()
    if not np.all(np.isfinite(logits)):
        raise ValidationError(f"logits must be finite, got {logits.tolist()}")
    return int(np.argmax(logits))


def _input_gradient(config, params, image, target, relu_mode, relu_hook=None):
    image = np.asarray(image)
    if image.shape != config.input_shape:
        raise ShapeError(f"image shape {image.shape} does not match network input {config.input_shape}")
    logits, cache = forward(config, params, image[None], "eval")
    n_out = logits.shape[1]
    if target is None:
        target = select_explained_output(logits[0])
    if not (isinstance(target, (int, np.integer)) and 0 <= target < n_out):
        raise ValidationError(f"target index must lie in 0..{n_out - 1}, got {target}")
    seed = np.zeros_like(logits)
    seed[0, target] = 1
    grad, _ = backward(config, params, cache, seed, relu_mode=relu_mode,
                       param_grads=False, relu_hook=relu_hook)
    return grad[0], int(target), logits[0]


def guided_backward(config: NetworkConfig, params: dict, image, target_index: int | None = None,
                    image_id: str = "", relu_hook=None) -> SaliencyMap:
    """Guided saliency of output ``target_index`` (default: the argmax) w.r.t. ``image``."""
    values, target, logits = _input_gradient(config, params, image, target_index, RELU_GUIDED, relu_hook)
    was_argmax = target == select_explained_output(logits)
    return SaliencyMap(values, image_id, target, was_argmax, logits)


def plain_gradient(config: NetworkConfig, params: dict, image, target_index: int | None = None,
                   image_id: str = "") -> SaliencyMap:
    """Ordinary ``d output / d image``, for comparison with the guided map."""
    values, target, logits = _input_gradient(config, params, image, target_index, RELU_STANDARD)
    return SaliencyMap(values, image_id, target, target == select_explained_output(logits), logits)


def _round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def render_saliency(smap: SaliencyMap | np.ndarray, mode: str = "absolute") -> np.ndarray:
    """Render to an ``(H, W)`` uint8 image.

    ``absolute``: channel-summed magnitudes scaled so the maximum is 255.
    ``signed``: ``128 + v * 127 / max|v|``, so zero is mid-gray.
    """
    values = smap.values if isinstance(smap, SaliencyMap) else np.asarray(smap)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        values = values[None]
    if not np.all(np.isfinite(values)):
        raise ValidationError("saliency map contains non-finite values")
    if mode == "absolute":
        mag = np.abs(values).sum(axis=0)
        peak = mag.max()
        if peak == 0:
            return np.zeros(mag.shape, dtype=np.uint8)
        return _round_half_away(mag * (255.0 / peak)).astype(np.uint8)
    if mode == "signed":
        v = values.sum(axis=0)
        peak = np.abs(v).max()
        if peak == 0:
            return np.full(v.shape, 128, dtype=np.uint8)
        return (128 + _round_half_away(v * (127.0 / peak))).astype(np.uint8)
    raise ValidationError(f"render mode must be 'absolute' or 'signed', got {mode!r}")

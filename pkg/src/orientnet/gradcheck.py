"""Central finite differences, used as the independent oracle for backward passes.

Nothing here calls a backward pass; only forward evaluations are used.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import NetworkConfig
from .nn import cross_entropy_loss, forward

EPS = 1e-3
RTOL = 1e-2
# denominators below this are clamped, so near-zero gradients are compared absolutely
REL_FLOOR = 1e-4


def rel_error(a, b, floor: float = REL_FLOOR):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def numerical_gradient(f, x: np.ndarray, eps: float = EPS, indices=None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``x``, perturbing ``x`` in place.

    With ``indices`` (flat positions) only those coordinates are computed and
    a 1-D array is returned.
    """
    flat = x.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = []
    for i in idx:
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        out.append((fp - fm) / (2 * eps))
    out = np.asarray(out, dtype=np.float64)
    return out.reshape(x.shape) if indices is None else out


def _gates(cache, config):
    """ReLU activity patterns and pooling winners, the piecewise-linear 'regime'."""
    gates = []
    for i, layer in enumerate(config.layers):
        if layer.kind == "relu":
            gates.append(cache.inputs[i] > 0)
        elif layer.kind == "maxpool":
            gates.append(cache.aux[i])
    return gates


@dataclass
class NetworkGradCheck:
    checked: int
    skipped: int
    max_rel_error: float
    failures: list


def check_network_gradients(config: NetworkConfig, params: dict, images, labels, analytic: dict,
                            n_coords: int = 200, rng: np.random.Generator | None = None,
                            eps: float = EPS, rtol: float = RTOL) -> NetworkGradCheck:
    """Compare ``analytic`` parameter gradients of the eval-mode loss with central differences.

    Tensors are visited round-robin and a random coordinate is drawn from
    each, until ``n_coords`` coordinates have been compared. A coordinate is skipped when a perturbation of ``eps``
    changes any ReLU activity or pooling winner anywhere in the network, i.e.
    when the difference quotient would straddle a kink.
    """
    rng = rng or np.random.default_rng(0)
    names = list(params)
    total = sum(params[n].size for n in names)
    base_gates = _gates(forward(config, params, images, "eval")[1], config)

    def loss_and_gates():
        logits, cache = forward(config, params, images, "eval")
        return cross_entropy_loss(logits, labels)[0], cache

    checked = skipped = 0
    worst = 0.0
    failures = []
    seen = set()
    turn = 0
    while checked < n_coords and len(seen) < total:
        name = names[turn % len(names)]
        turn += 1
        local = int(rng.integers(params[name].size))
        if (name, local) in seen:
            continue
        seen.add((name, local))
        flat = params[name].reshape(-1)
        old = flat[local]
        flat[local] = old + eps
        fp, cp = loss_and_gates()
        flat[local] = old - eps
        fm, cm = loss_and_gates()
        flat[local] = old
        kinked = any(not np.array_equal(a, b)
                     for cache in (cp, cm)
                     for a, b in zip(_gates(cache, config), base_gates))
        if kinked:
            skipped += 1
            continue
        num = (fp - fm) / (2 * eps)
        ana = float(analytic[name].reshape(-1)[local])
        err = float(rel_error(ana, num))
        worst = max(worst, err)
        if err > rtol:
            failures.append((name, int(local), ana, num, err))
        checked += 1
    return NetworkGradCheck(checked, skipped, worst, failures)

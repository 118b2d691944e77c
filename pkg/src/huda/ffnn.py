"""Small fully-connected networks that run on plain arrays and duals alike."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch

ACTIVATIONS = {
    "tanh": np.tanh,
    "identity": lambda x: x,
}

# The network used as machine-learning submodel in the combination experiment.
DEFAULT_LAYERS = ((4, 8), (8, 2))


@dataclass(frozen=True)
class FfnnSpec:
    layers: tuple[tuple[int, int], ...] = DEFAULT_LAYERS
    activations: tuple[str, ...] = ("tanh", "tanh")

    def __post_init__(self):
        if len(self.activations) != len(self.layers):
            raise ValueError("one activation per layer required")
        for (_, out), (nxt, _) in zip(self.layers[:-1], self.layers[1:]):
            if out != nxt:
                raise ValueError(f"layer sizes do not chain: {self.layers}")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")

    @property
    def n_in(self) -> int:
        return self.layers[0][0]

    @property
    def n_out(self) -> int:
        return self.layers[-1][1]

    @property
    def n_params(self) -> int:
        return sum(i * o + o for i, o in self.layers)


def ffnn_forward(spec: FfnnSpec, params, x):
    """Evaluate the network on a flat parameter vector.

    Parameters are laid out per layer as the row-major ``(out, in)`` weight
    matrix followed by the bias, which keeps the same flat vector usable for
    plain floats and duals.
    """
    if len(params) != spec.n_params:
        raise DimensionMismatch(f"expected {spec.n_params} parameters, got {len(params)}")
    if len(x) != spec.n_in:
        raise DimensionMismatch(f"expected input of length {spec.n_in}, got {len(x)}")
    h = x
    off = 0
    for (n_in, n_out), act in zip(spec.layers, spec.activations):
        w = params[off : off + n_in * n_out].reshape(n_out, n_in)
        off += n_in * n_out
        b = params[off : off + n_out]
        off += n_out
        h = ACTIVATIONS[act](w @ h + b)
    return h


def init_ffnn(spec: FfnnSpec, seed: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    parts = []
    for n_in, n_out in spec.layers:
        bound = np.sqrt(6.0 / (n_in + n_out))
        parts.append(rng.uniform(-bound, bound, size=n_in * n_out))
        parts.append(np.zeros(n_out))
    return np.concatenate(parts)


def unpack(spec: FfnnSpec, params):
    """Split a flat vector into ``[(W, b), ...]``."""
    out = []
    off = 0
    for n_in, n_out in spec.layers:
        w = np.asarray(params[off : off + n_in * n_out]).reshape(n_out, n_in)
        off += n_in * n_out
        out.append((w, np.asarray(params[off : off + n_out])))
        off += n_out
    return out

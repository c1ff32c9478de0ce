"""Fully connected tanh networks with flat parameter views for optimizers.

Every hidden layer has the same width.  Parameters live in per-layer weight
matrices and bias vectors; ``flatten``/``from_flat`` provide the 1-D view
optimizers work on (layer by layer, weights row-major, then biases).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


class ShapeError(ValueError):
    """Input length does not match the network layout."""


@dataclass(frozen=True)
class NetLayout:
    """Architecture of one network: sizes only, no values."""

    n_inputs: int
    n_outputs: int
    n_hidden_layers: int
    neurons_per_layer: int

    def __post_init__(self):
        for name in ("n_inputs", "n_outputs", "n_hidden_layers", "neurons_per_layer"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def layer_dims(self):
        """(fan_in, fan_out) per affine layer, input to output."""
        widths = (
            [self.n_inputs]
            + [self.neurons_per_layer] * self.n_hidden_layers
            + [self.n_outputs]
        )
        return list(zip(widths[:-1], widths[1:]))

    @property
    def n_params(self):
        return sum(fi * fo + fo for fi, fo in self.layer_dims)


class MlpParams:
    """Weights and biases of one network plus the flat vector view."""

    def __init__(self, layout, weights, biases):
        self.layout = layout
        self.weights = weights
        self.biases = biases

    def flatten(self):
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, layout, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (layout.n_params,):
            raise ShapeError(
                f"flat vector has length {flat.shape}, layout needs {layout.n_params}"
            )
        weights, biases, pos = [], [], 0
        for fi, fo in layout.layer_dims:
            weights.append(flat[pos : pos + fi * fo].reshape(fi, fo).copy())
            pos += fi * fo
            biases.append(flat[pos : pos + fo].copy())
            pos += fo
        return cls(layout, weights, biases)

    def save(self, path):
        record = {
            "layout": {
                "n_inputs": self.layout.n_inputs,
                "n_outputs": self.layout.n_outputs,
                "n_hidden_layers": self.layout.n_hidden_layers,
                "neurons_per_layer": self.layout.neurons_per_layer,
            },
            "values": self.flatten().tolist(),
        }
        with open(path, "w") as fh:
            json.dump(record, fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            record = json.load(fh)
        layout = NetLayout(**record["layout"])
        return cls.from_flat(layout, np.array(record["values"]))


def init_params(layout, seed):
    """Glorot-uniform weights (gain 1, right for tanh), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fi, fo in layout.layer_dims:
        limit = np.sqrt(6.0 / (fi + fo))
        weights.append(rng.uniform(-limit, limit, size=(fi, fo)))
        biases.append(np.zeros(fo))
    return MlpParams(layout, weights, biases)


class ParamVars:
    """Leaf nodes for every layer, ready for graph building."""

    def __init__(self, params):
        self.layout = params.layout
        self.weights = [ad.variable(w) for w in params.weights]
        self.biases = [ad.variable(b) for b in params.biases]

    @property
    def all(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


def forward_vars(pvars, inputs):
    """Batched forward pass on graph nodes.

    ``inputs`` is one (N,)-shaped node per input coordinate; returns one
    (N,)-shaped node per output, differentiable in inputs and parameters.
    """
    if len(inputs) != pvars.layout.n_inputs:
        raise ShapeError(
            f"expected {pvars.layout.n_inputs} inputs, got {len(inputs)}"
        )
    h = ad.stack_cols(inputs)
    for w, b in zip(pvars.weights[:-1], pvars.biases[:-1]):
        h = ad.tanh(ad.matmul(h, w) + b)
    out = ad.matmul(h, pvars.weights[-1]) + pvars.biases[-1]
    return [ad.col(out, j) for j in range(pvars.layout.n_outputs)]


def forward(params, inputs):
    """Forward pass for plain use: accepts nodes or reals, returns nodes.

    Scalar inputs are run as a batch of one and squeezed back, so the result
    behaves like a scalar node.
    """
    pvars = params if isinstance(params, ParamVars) else ParamVars(params)
    nodes = []
    scalar = True
    for x in inputs:
        node = x if isinstance(x, ad.DiffValue) else ad.constant(x)
        if np.ndim(node.value) > 0:
            scalar = False
        nodes.append(node)
    if scalar:
        ones = ad.constant(np.ones(1))
        nodes = [n * ones for n in nodes]
    outs = forward_vars(pvars, nodes)
    if scalar:
        outs = [ad.vsum(o) for o in outs]
    return outs


def forward_values(params, coords):
    """Plain numpy forward pass over an (N, n_inputs) coordinate block."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != params.layout.n_inputs:
        raise ShapeError(
            f"coords must be (N, {params.layout.n_inputs}), got {coords.shape}"
        )
    h = coords
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.tanh(h @ w + b)
    return h @ params.weights[-1] + params.biases[-1]

"""Minimal dense MLP engine over flat parameter vectors.

Parameters live in one float64 array with a canonical layout: layers in
order, each layer's weight matrix in row-major (out x in) order followed
by its biases.  Forward passes are pure functions; reverse-mode gradients
are provided for the meta-learner's training (inner Q-networks are used
forward-only).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .seeding import as_u64

HIDDEN_ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class MlpSpec:
    """Fully-connected architecture: sizes of every layer, input first."""

    layer_sizes: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        if any(int(s) <= 0 for s in self.layer_sizes):
            raise ValueError(f"layer sizes must be positive, got {self.layer_sizes}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"hidden_activation must be one of {HIDDEN_ACTIVATIONS}")
        if self.output_activation != "identity":
            raise ValueError("only identity output activation is supported")
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]


def param_count(spec: MlpSpec) -> int:
    sizes = spec.layer_sizes
    return sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1))


def unflatten(spec: MlpSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (no copies) of (W, b) per layer; W has shape (out, in)."""
    params = np.asarray(params)
    if params.shape != (param_count(spec),):
        raise ValueError(f"expected {param_count(spec)} parameters, got shape {params.shape}")
    layers = []
    offset = 0
    sizes = spec.layer_sizes
    for i in range(len(sizes) - 1):
        n_in, n_out = sizes[i], sizes[i + 1]
        w = params[offset : offset + n_in * n_out].reshape(n_out, n_in)
        offset += n_in * n_out
        b = params[offset : offset + n_out]
        offset += n_out
        layers.append((w, b))
    return layers


def flatten(spec: MlpSpec, layers: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    parts = []
    for (w, b), n_in, n_out in zip(layers, spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        if w.shape != (n_out, n_in) or b.shape != (n_out,):
            raise ValueError(f"layer shapes {w.shape}/{b.shape} do not match spec")
        parts.append(np.asarray(w, dtype=np.float64).ravel())
        parts.append(np.asarray(b, dtype=np.float64))
    return np.concatenate(parts)


def init_params(spec: MlpSpec, seed: int) -> np.ndarray:
    """Per layer: weights uniform in +-sqrt(6/(fan_in+fan_out)), biases zero."""
    rng = np.random.default_rng(as_u64(seed))
    parts = []
    sizes = spec.layer_sizes
    for i in range(len(sizes) - 1):
        n_in, n_out = sizes[i], sizes[i + 1]
        limit = np.sqrt(6.0 / (n_in + n_out))
        parts.append(rng.uniform(-limit, limit, size=n_in * n_out))
        parts.append(np.zeros(n_out))
    return np.concatenate(parts)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _forward_cached(spec: MlpSpec, params: np.ndarray, inputs: np.ndarray):
    """Batched forward keeping post-activation values for backprop."""
    layers = unflatten(spec, params)
    activations = [inputs]
    h = inputs
    for li, (w, b) in enumerate(layers):
        h = h @ w.T + b
        if li < len(layers) - 1:
            h = _activate(h, spec.hidden_activation)
        activations.append(h)
    return h, activations


def forward_batch(spec: MlpSpec, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """(n, in) -> (n, out) affine+activation composition."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != spec.n_inputs:
        raise ValueError(f"expected inputs of shape (n, {spec.n_inputs}), got {inputs.shape}")
    out, _ = _forward_cached(spec, params, inputs)
    return out


def forward(spec: MlpSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Single input vector -> output vector; pure function of its arguments."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.n_inputs,):
        raise ValueError(f"expected input of shape ({spec.n_inputs},), got {x.shape}")
    return forward_batch(spec, params, x[None, :])[0]


def backward_batch(
    spec: MlpSpec, params: np.ndarray, inputs: np.ndarray, output_grads: np.ndarray
) -> np.ndarray:
    """Sum over the batch of d(output_i . output_grads_i)/d(params).

    Returned gradient uses the same flat layout as the parameter vector.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    output_grads = np.asarray(output_grads, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != spec.n_inputs:
        raise ValueError(f"expected inputs of shape (n, {spec.n_inputs}), got {inputs.shape}")
    if output_grads.shape != (inputs.shape[0], spec.n_outputs):
        raise ValueError(
            f"expected output_grads of shape ({inputs.shape[0]}, {spec.n_outputs}), "
            f"got {output_grads.shape}"
        )
    layers = unflatten(spec, params)
    _, acts = _forward_cached(spec, params, inputs)
    grad = np.zeros_like(np.asarray(params, dtype=np.float64))
    grad_layers = unflatten(spec, grad)
    delta = output_grads
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        gw, gb = grad_layers[li]
        gw += delta.T @ acts[li]
        gb += delta.sum(axis=0)
        if li > 0:
            delta = delta @ w
            a = acts[li]  # post-activation of the previous hidden layer
            if spec.hidden_activation == "relu":
                delta = delta * (a > 0.0)
            else:
                delta = delta * (1.0 - a * a)
    return grad


def backward(
    spec: MlpSpec, params: np.ndarray, x: np.ndarray, output_grad: np.ndarray
) -> np.ndarray:
    """Reverse-mode gradient of (forward(x) . output_grad) w.r.t. params."""
    x = np.asarray(x, dtype=np.float64)
    output_grad = np.asarray(output_grad, dtype=np.float64)
    if x.shape != (spec.n_inputs,):
        raise ValueError(f"expected input of shape ({spec.n_inputs},), got {x.shape}")
    if output_grad.shape != (spec.n_outputs,):
        raise ValueError(f"expected output_grad of shape ({spec.n_outputs},), got {output_grad.shape}")
    return backward_batch(spec, params, x[None, :], output_grad[None, :])


# --------------------------------------------------------------------------
# Serialization: little-endian binary with a short header, plus JSON export.

_MAGIC = b"R2NN"


def save_params(path, spec: MlpSpec, params: np.ndarray) -> None:
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (param_count(spec),):
        raise ValueError("parameter vector does not match spec")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(spec.layer_sizes)))
        fh.write(struct.pack(f"<{len(spec.layer_sizes)}I", *spec.layer_sizes))
        fh.write(params.astype("<f8").tobytes())


def load_params(path) -> tuple[tuple[int, ...], np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not a parameter file (bad magic {magic!r})")
        (n_sizes,) = struct.unpack("<I", fh.read(4))
        sizes = struct.unpack(f"<{n_sizes}I", fh.read(4 * n_sizes))
        values = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
    expected = sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1))
    if values.shape != (expected,):
        raise ValueError(f"expected {expected} values for sizes {sizes}, got {values.shape[0]}")
    return tuple(int(s) for s in sizes), values


def params_to_json(spec: MlpSpec, params: np.ndarray) -> str:
    layers = [
        {"weights": w.tolist(), "biases": b.tolist()} for w, b in unflatten(spec, params)
    ]
    return json.dumps(
        {
            "layer_sizes": list(spec.layer_sizes),
            "hidden_activation": spec.hidden_activation,
            "output_activation": spec.output_activation,
            "layers": layers,
        }
    )

"""Dense feed-forward Q-network with hand-written backpropagation.

Weights are kept as a plain list of (W, b) numpy pairs, with lossless
flat-vector views so federated averaging can treat a whole model as one
vector. No autodiff framework: the network topology is a fixed MLP with
rectified-linear hidden units and a linear output head, and the backward
pass is derived by hand and validated against central finite differences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"FWV1"

Weights = list[tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths, input first and output last: e.g. (6, 512, 256, 128, 36)."""

    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        if any(s <= 0 for s in self.layer_sizes):
            raise ValueError("layer sizes must be positive")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def num_params(self) -> int:
        sizes = self.layer_sizes
        return sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1))


def init_weights(spec: MlpSpec, rng: np.random.Generator, dtype=np.float32) -> Weights:
    """He-style uniform fan-in init for the matrices, zero biases."""
    weights = []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)
        b = np.zeros(fan_out, dtype=dtype)
        weights.append((w, b))
    return weights


def copy_weights(weights: Weights) -> Weights:
    return [(w.copy(), b.copy()) for w, b in weights]


def forward(weights: Weights, x: np.ndarray) -> np.ndarray:
    """Q-values for a single observation (1D) or a batch (2D)."""
    out, _ = _forward_cached(weights, x)
    return out


def _forward_cached(weights: Weights, x: np.ndarray):
    """Forward pass keeping post-activation layer inputs for backprop."""
    x = np.asarray(x)
    if x.shape[-1] != weights[0][0].shape[0]:
        raise ValueError(
            f"input dim {x.shape[-1]} does not match network input {weights[0][0].shape[0]}"
        )
    acts = [x]
    h = x
    last = len(weights) - 1
    for k, (w, b) in enumerate(weights):
        h = h @ w + b
        if k < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return h, acts


def backward(weights: Weights, x: np.ndarray, output_gradient: np.ndarray) -> Weights:
    """Gradient of a scalar loss w.r.t. every weight and bias.

    ``output_gradient`` is dLoss/dOutput, same shape as forward(weights, x).
    """
    _, acts = _forward_cached(weights, x)
    return _backward_from_cache(weights, acts, output_gradient)


def _backward_from_cache(weights: Weights, acts, output_gradient: np.ndarray) -> Weights:
    delta = np.asarray(output_gradient)
    if delta.shape != acts[-1].shape:
        raise ValueError("output gradient shape does not match network output")
    single = delta.ndim == 1
    grads: Weights = [None] * len(weights)  # type: ignore[list-item]
    for k in range(len(weights) - 1, -1, -1):
        w, _ = weights[k]
        a_in = acts[k]
        if single:
            gw = np.outer(a_in, delta)
            gb = delta.copy()
        else:
            gw = a_in.T @ delta
            gb = delta.sum(axis=0)
        grads[k] = (gw, gb)
        if k > 0:
            delta = delta @ w.T
            # rectified-linear: no gradient where the unit was inactive
            delta = np.where(acts[k] > 0.0, delta, 0.0)
    return grads


def sgd_step(weights: Weights, gradient: Weights, lr: float) -> Weights:
    """One plain gradient-descent step: w <- w - lr * g, elementwise."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    return [(w - lr * gw, b - lr * gb) for (w, b), (gw, gb) in zip(weights, gradient)]


def flatten_weights(weights: Weights) -> np.ndarray:
    """All weights and biases as one vector, layer by layer (W then b)."""
    return np.concatenate([a.ravel() for w, b in weights for a in (w, b)])


def unflatten_weights(spec: MlpSpec, flat: np.ndarray) -> Weights:
    flat = np.asarray(flat)
    if flat.size != spec.num_params:
        raise ValueError(f"expected {spec.num_params} parameters, got {flat.size}")
    weights = []
    pos = 0
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        w = flat[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out).copy()
        pos += fan_in * fan_out
        b = flat[pos : pos + fan_out].copy()
        pos += fan_out
        weights.append((w, b))
    return weights


def gradient_check(spec: MlpSpec, seed: int, dtype=np.float64) -> float:
    """Max relative error of backprop vs central finite differences.

    Uses the half-squared error against a random target as the scalar loss.
    Loss evaluations run in float64 even when the weights are stored in
    float32, and the difference quotient divides by the realized step
    (w_plus - w_minus) so weight quantization does not inflate the error.
    """
    if spec.num_params > 2000:
        raise ValueError("gradient check is meant for small specs")
    rng = np.random.default_rng(seed)
    weights = init_weights(spec, rng, dtype=dtype)
    x = rng.standard_normal(spec.input_dim)
    target = rng.standard_normal(spec.output_dim)

    def loss(ws: Weights) -> float:
        diff = forward([(w.astype(np.float64), b.astype(np.float64)) for w, b in ws], x) - target
        return float(0.5 * np.dot(diff, diff))

    out = forward([(w.astype(np.float64), b.astype(np.float64)) for w, b in weights], x)
    analytic = backward(
        [(w.astype(np.float64), b.astype(np.float64)) for w, b in weights], x, out - target
    )

    step = 1e-4
    worst = 0.0
    for k, (w, b) in enumerate(weights):
        for arr, grad in ((w, analytic[k][0]), (b, analytic[k][1])):
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = dtype(orig + step)
                hi_w = float(arr[idx])
                hi = loss(weights)
                arr[idx] = dtype(orig - step)
                lo_w = float(arr[idx])
                lo = loss(weights)
                arr[idx] = orig
                numeric = (hi - lo) / (hi_w - lo_w)
                a = float(grad[idx])
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                worst = max(worst, err)
    return worst


def save_weights(path, spec: MlpSpec, weights: Weights) -> None:
    """Binary snapshot: magic, layer count, layer sizes, then float32 LE flat."""
    flat = flatten_weights(weights).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(spec.layer_sizes)))
        fh.write(struct.pack(f"<{len(spec.layer_sizes)}I", *spec.layer_sizes))
        fh.write(flat.tobytes())


def load_weights(path) -> tuple[MlpSpec, Weights]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"not a weight snapshot: bad magic {magic!r}")
        (n_layers,) = struct.unpack("<I", fh.read(4))
        sizes = struct.unpack(f"<{n_layers}I", fh.read(4 * n_layers))
        spec = MlpSpec(tuple(int(s) for s in sizes))
        flat = np.frombuffer(fh.read(), dtype="<f4")
    if flat.size != spec.num_params:
        raise ValueError(
            f"snapshot holds {flat.size} parameters, spec {spec.layer_sizes} needs {spec.num_params}"
        )
    return spec, unflatten_weights(spec, flat.astype(np.float32))

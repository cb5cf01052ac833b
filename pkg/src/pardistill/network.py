"""Feed-forward classifier: sigmoid hidden layers, softmax output, exact backprop.

The same architecture family serves teachers, students and baselines.  Models
serialize to a small binary format (magic ``KDAM1``, one-line JSON header,
then raw little-endian float64 weights and biases per layer) so checkpoints
round-trip bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, UsageError
from .numerics import RngStream, sigmoid, softmax

MODEL_MAGIC = b"KDAM1"


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden: tuple[int, ...]
    output_dim: int

    def __post_init__(self):
        try:
            object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        except (TypeError, ValueError) as exc:
            raise UsageError(f"hidden widths must be integers: {exc}") from exc
        widths = (self.input_dim, *self.hidden, self.output_dim)
        if any(not isinstance(w, (int, np.integer)) or w < 1 for w in widths):
            raise UsageError(f"architecture widths must all be >= 1, got {widths}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per affine layer, input to output."""
        widths = (self.input_dim, *self.hidden, self.output_dim)
        return list(zip(widths[:-1], widths[1:]))


@dataclass
class ModelParams:
    arch: Architecture
    weights: list[np.ndarray]  # each (out x in)
    biases: list[np.ndarray]   # each (out,)

    def validate(self) -> "ModelParams":
        dims = self.arch.layer_dims
        if len(self.weights) != len(dims) or len(self.biases) != len(dims):
            raise UsageError("layer count does not match architecture")
        for i, (fan_in, fan_out) in enumerate(dims):
            if self.weights[i].shape != (fan_out, fan_in):
                raise UsageError(
                    f"layer {i} weight shape {self.weights[i].shape} != ({fan_out}, {fan_in})"
                )
            if self.biases[i].shape != (fan_out,):
                raise UsageError(f"layer {i} bias shape {self.biases[i].shape} != ({fan_out},)")
            if not (np.all(np.isfinite(self.weights[i])) and np.all(np.isfinite(self.biases[i]))):
                raise UsageError(f"layer {i} contains non-finite parameters")
        return self

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, [w.copy() for w in self.weights],
                           [b.copy() for b in self.biases])


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class ForwardTrace:
    """Per-layer activations of a batch plus the final posteriors."""

    inputs: list[np.ndarray] = field(repr=False)  # inputs[i] feeds affine layer i
    logits: np.ndarray = field(repr=False)
    posteriors: np.ndarray = field(repr=False)


def init_params(arch: Architecture, rng: RngStream) -> ModelParams:
    """Weights ~ N(0, 1/fan_in), biases zero; draw order is layer by layer."""
    weights, biases = [], []
    for fan_in, fan_out in arch.layer_dims:
        scale = 1.0 / np.sqrt(fan_in)
        weights.append(rng.gaussians(fan_out * fan_in).reshape(fan_out, fan_in) * scale)
        biases.append(np.zeros(fan_out))
    return ModelParams(arch, weights, biases)


def forward(params: ModelParams, batch: np.ndarray) -> ForwardTrace:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != params.arch.input_dim:
        raise UsageError(
            f"batch shape {batch.shape} incompatible with input_dim {params.arch.input_dim}"
        )
    inputs = [batch]
    a = batch
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        if i == last:
            return ForwardTrace(inputs, z, softmax(z, axis=1))
        a = sigmoid(z)
        inputs.append(a)
    raise AssertionError("unreachable: architecture has at least one layer")


def backward(params: ModelParams, trace: ForwardTrace, grad_logits: np.ndarray) -> Gradients:
    """Exact reverse-mode gradients of the logits contraction sum(logits * grad)."""
    grad_logits = np.asarray(grad_logits, dtype=np.float64)
    if grad_logits.shape != trace.logits.shape:
        raise UsageError(
            f"grad_logits shape {grad_logits.shape} != logits shape {trace.logits.shape}"
        )
    n_layers = len(params.weights)
    g_w: list = [None] * n_layers
    g_b: list = [None] * n_layers
    delta = grad_logits
    for i in range(n_layers - 1, -1, -1):
        g_w[i] = delta.T @ trace.inputs[i]
        g_b[i] = delta.sum(axis=0)
        if i > 0:
            a = trace.inputs[i]  # sigmoid output of layer i-1
            delta = (delta @ params.weights[i]) * a * (1.0 - a)
    return Gradients(g_w, g_b)


def sgd_step(params: ModelParams, grads: Gradients, lr: float) -> ModelParams:
    if lr < 0:
        raise UsageError(f"learning rate must be >= 0, got {lr}")
    weights = [w - lr * g for w, g in zip(params.weights, grads.weights)]
    biases = [b - lr * g for b, g in zip(params.biases, grads.biases)]
    return ModelParams(params.arch, weights, biases)


def _serialize(params: ModelParams) -> bytes:
    header = {
        "version": 1,
        "arch": {
            "input_dim": params.arch.input_dim,
            "hidden": list(params.arch.hidden),
            "output_dim": params.arch.output_dim,
        },
    }
    chunks = [MODEL_MAGIC, b"\n", json.dumps(header, sort_keys=True).encode(), b"\n"]
    for w, b in zip(params.weights, params.biases):
        chunks.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(chunks)


def save_model(params: ModelParams, path) -> None:
    params.validate()
    with open(path, "wb") as fh:
        fh.write(_serialize(params))


def load_model(path) -> ModelParams:
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip(b"\n")
        if magic != MODEL_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MODEL_MAGIC!r}")
        try:
            header = json.loads(fh.readline().decode())
            arch = Architecture(
                int(header["arch"]["input_dim"]),
                tuple(int(w) for w in header["arch"]["hidden"]),
                int(header["arch"]["output_dim"]),
            )
        except (KeyError, TypeError, ValueError, UnicodeDecodeError) as exc:
            raise FormatError(f"{path}: malformed model header: {exc}") from exc
        body = fh.read()
    expected = sum((fan_in + 1) * fan_out for fan_in, fan_out in arch.layer_dims) * 8
    if len(body) != expected:
        raise FormatError(
            f"{path}: body is {len(body)} bytes, expected {expected} for arch {arch}"
        )
    flat = np.frombuffer(body, dtype="<f8")
    if not np.all(np.isfinite(flat)):
        raise FormatError(f"{path}: model contains non-finite parameters")
    weights, biases, offset = [], [], 0
    for fan_in, fan_out in arch.layer_dims:
        weights.append(flat[offset:offset + fan_out * fan_in].reshape(fan_out, fan_in).copy())
        offset += fan_out * fan_in
        biases.append(flat[offset:offset + fan_out].copy())
        offset += fan_out
    return ModelParams(arch, weights, biases).validate()


def params_hash(params: ModelParams) -> str:
    """SHA-256 fingerprint of the exact serialized parameter bytes."""
    return hashlib.sha256(_serialize(params)).hexdigest()

"""ReLU feedforward networks on a flat parameter vector.

The parameter layout is layer-major, weights then biases per layer:

    [W1 (fan_in*fan_out, row-major), b1 (fan_out), W2, b2, ...]

so clamping, checkpointing and optimizer state all operate on one flat
float64 array.  Hidden layers apply ReLU; the output layer is affine.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .tape import Node, Tape

CHECKPOINT_MAGIC = b"DEEPTV1"


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of a scalar-output ReLU MLP."""

    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int = 1
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim not in (1, 2):
            raise ValueError(f"input_dim must be 1 or 2, got {self.input_dim}")
        if any(w <= 0 for w in self.hidden_widths):
            raise ValueError("hidden widths must be positive")
        if self.output_dim != 1:
            raise ValueError("only scalar outputs are supported")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = (self.input_dim, *self.hidden_widths, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))

    @property
    def depth(self) -> int:
        return len(self.hidden_widths) + 1

    @property
    def param_count(self) -> int:
        return sum((fi + 1) * fo for fi, fo in self.layer_dims)


def _layout(spec: NetworkSpec):
    """Offsets of each layer's weight and bias block in the flat vector."""
    blocks = []
    pos = 0
    for fan_in, fan_out in spec.layer_dims:
        w = (pos, pos + fan_in * fan_out, (fan_in, fan_out))
        pos = w[1]
        b = (pos, pos + fan_out)
        pos = b[1]
        blocks.append((w, b))
    return blocks


def init_params(spec: NetworkSpec, seed: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases; deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    parts = []
    for fan_in, fan_out in spec.layer_dims:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        parts.append(rng.uniform(-limit, limit, size=fan_in * fan_out))
        parts.append(np.zeros(fan_out))
    return np.concatenate(parts).astype(np.float64)


def _as_batch(spec: NetworkSpec, points) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        if spec.input_dim != 1:
            raise ValueError("1-d point array only valid for input_dim=1")
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(
            f"points must have shape (n, {spec.input_dim}), got {x.shape}"
        )
    return x


def forward(spec: NetworkSpec, theta: np.ndarray, points) -> np.ndarray:
    """Evaluate the network at a batch of points; returns shape (n,)."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (spec.param_count,):
        raise ValueError(
            f"theta has length {theta.size}, expected {spec.param_count}"
        )
    x = _as_batch(spec, points)
    blocks = _layout(spec)
    for i, ((w0, w1, wshape), (b0, b1)) in enumerate(blocks):
        z = x @ theta[w0:w1].reshape(wshape) + theta[b0:b1]
        x = np.maximum(z, 0.0) if i < len(blocks) - 1 else z
    return x[:, 0]


def forward_on_tape(tape: Tape, spec: NetworkSpec, theta_node: Node, points) -> Node:
    """Same forward pass, recorded on a tape; returns an (n,) node."""
    x = _as_batch(spec, points)
    blocks = _layout(spec)
    out = None
    for i, ((w0, w1, wshape), (b0, b1)) in enumerate(blocks):
        w = tape.segment(theta_node, w0, w1, wshape)
        b = tape.segment(theta_node, b0, b1)
        out = tape.affine(
            x if out is None else out, w, b, relu=i < len(blocks) - 1
        )
    return tape.reshape(out, (x.shape[0],))


def clamp(theta: np.ndarray, c: float) -> np.ndarray:
    """Project every entry onto [-c, c]; idempotent."""
    if c < 0:
        raise ValueError("weight bound c must be nonnegative")
    return np.clip(np.asarray(theta, dtype=np.float64), -c, c)


# -- checkpoints ---------------------------------------------------------
#
# Binary layout: magic "DEEPTV1", then little-endian uint32 input_dim,
# uint32 number of hidden layers, one uint32 per hidden width, then the
# flat parameter vector as little-endian float64 in the canonical layout.


def save_params(path, spec: NetworkSpec, theta: np.ndarray) -> None:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (spec.param_count,):
        raise ValueError("theta does not match the network spec")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", spec.input_dim, len(spec.hidden_widths)))
        f.write(struct.pack(f"<{len(spec.hidden_widths)}I", *spec.hidden_widths))
        f.write(theta.astype("<f8").tobytes())


def load_params(path) -> tuple[NetworkSpec, np.ndarray]:
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a parameter checkpoint: bad magic {magic!r}")
        input_dim, n_hidden = struct.unpack("<II", f.read(8))
        widths = struct.unpack(f"<{n_hidden}I", f.read(4 * n_hidden))
        spec = NetworkSpec(input_dim=input_dim, hidden_widths=widths)
        theta = np.frombuffer(f.read(), dtype="<f8").astype(np.float64)
    if theta.shape != (spec.param_count,):
        raise ValueError("checkpoint payload does not match its header")
    return spec, theta

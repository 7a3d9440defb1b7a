"""Generator/critic MLPs, RMSProp, weight clipping and checkpoint I/O."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .data import Rng

HIDDEN_LAYERS = 3
ACTIVATIONS = ("relu", "tanh")
ROLES = ("generator", "critic")


@dataclass
class MlpParams:
    """Layers are ``(weight [d_in, d_out], bias [d_out])`` pairs."""

    layers: list[tuple[np.ndarray, np.ndarray]]
    activation: str = "relu"
    role: str = "critic"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if len(self.layers) != HIDDEN_LAYERS + 1:
            raise ValueError(
                f"expected {HIDDEN_LAYERS} hidden layers ({HIDDEN_LAYERS + 1} affine maps), "
                f"got {len(self.layers)} affine maps"
            )
        layers = []
        for i, (w, b) in enumerate(self.layers):
            w = np.array(w, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if layers and layers[-1][0].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: input dim {w.shape[0]} does not chain")
            layers.append((w, b))
        self.layers = layers
        if self.role == "critic" and (self.dims[0] != 2 or self.dims[-1] != 1):
            raise ValueError(f"critic must map 2 -> 1, got {self.dims[0]} -> {self.dims[-1]}")
        if self.role == "generator" and self.dims[-1] != 2:
            raise ValueError(f"generator must output 2-D points, got {self.dims[-1]}")

    @property
    def dims(self) -> list[int]:
        return [self.layers[0][0].shape[0]] + [w.shape[1] for w, _ in self.layers]

    def arrays(self) -> list[np.ndarray]:
        """Flat list ``[W0, b0, W1, b1, ...]``; the order used by grads and optimizers."""
        return [a for pair in self.layers for a in pair]

    def with_arrays(self, arrays: list[np.ndarray]) -> "MlpParams":
        pairs = list(zip(arrays[0::2], arrays[1::2]))
        return MlpParams(pairs, self.activation, self.role)

    def copy(self) -> "MlpParams":
        return self.with_arrays([a.copy() for a in self.arrays()])


def init_mlp(
    rng: Rng,
    role: str,
    hidden_width: int = 512,
    activation: str = "relu",
    latent_dim: int = 2,
) -> MlpParams:
    """He-normal weights, zero biases."""
    if hidden_width < 1:
        raise ValueError("hidden_width must be >= 1")
    d_in = 2 if role == "critic" else latent_dim
    d_out = 1 if role == "critic" else 2
    dims = [d_in] + [hidden_width] * HIDDEN_LAYERS + [d_out]
    layers = []
    for a, b in zip(dims[:-1], dims[1:]):
        w = rng.normal((a, b)) * np.sqrt(2.0 / a)
        layers.append((w, np.zeros(b)))
    return MlpParams(layers, activation, role)


def bind(params: MlpParams, tape: ad.Tape) -> list[ad.Node]:
    """Differentiable leaves for every parameter, in ``params.arrays()`` order."""
    return [ad.input(tape, a) for a in params.arrays()]


def forward(params: MlpParams, x: ad.Node, tape: ad.Tape, bound: list[ad.Node] | None = None) -> ad.Node:
    """Affine + activation per hidden layer, final affine without activation.

    Pass ``bound`` (from :func:`bind`) to differentiate with respect to the
    parameters; otherwise they enter the tape as constants.
    """
    if x.tape is not tape:
        raise ad.AutodiffError("forward: input node is not on the given tape")
    if x.value.ndim != 2 or x.shape[1] != params.dims[0]:
        raise ad.AutodiffError(
            f"forward: input shape {list(x.shape)} does not match input dim {params.dims[0]}"
        )
    nodes = bound if bound is not None else [ad.constant(tape, a) for a in params.arrays()]
    act = ad.relu if params.activation == "relu" else ad.tanh
    n = x.shape[0]
    h = x
    last = len(params.layers) - 1
    for i in range(len(params.layers)):
        w, b = nodes[2 * i], nodes[2 * i + 1]
        h = ad.add(ad.matmul(h, w), ad.broadcast(b, (n, b.shape[0])))
        if i < last:
            h = act(h)
    return h


def evaluate(params: MlpParams, x: np.ndarray) -> np.ndarray:
    tape = ad.Tape()
    return forward(params, ad.constant(tape, x), tape).value


@dataclass
class RmsPropState:
    accumulators: list[np.ndarray]
    learning_rate: float = 5e-5
    decay: float = 0.9
    epsilon: float = 1e-10
    steps: int = field(default=0)

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ValueError(f"decay must lie in (0, 1), got {self.decay}")
        if self.epsilon <= 0.0 or self.learning_rate <= 0.0:
            raise ValueError("epsilon and learning_rate must be positive")

    @classmethod
    def zeros_like(cls, params: MlpParams, **kwargs) -> "RmsPropState":
        return cls([np.zeros_like(a) for a in params.arrays()], **kwargs)


def rmsprop_step(
    state: RmsPropState, params: MlpParams, grads: list[np.ndarray]
) -> tuple[MlpParams, RmsPropState]:
    """ms <- decay*ms + (1-decay)*g^2;  p <- p - lr*g/(sqrt(ms) + eps).

    Returns new objects; the inputs are left untouched.
    """
    arrays = params.arrays()
    if len(grads) != len(arrays):
        raise ValueError(f"expected {len(arrays)} gradients, got {len(grads)}")
    new_params, new_acc = [], []
    for k, (p, g, ms) in enumerate(zip(arrays, grads, state.accumulators)):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ValueError(f"gradient for parameter {_param_name(k)} has shape {g.shape}, expected {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {_param_name(k)}")
        ms = state.decay * ms + (1.0 - state.decay) * (g * g)
        new_acc.append(ms)
        new_params.append(p - state.learning_rate * g / (np.sqrt(ms) + state.epsilon))
    new_state = RmsPropState(new_acc, state.learning_rate, state.decay, state.epsilon, state.steps + 1)
    return params.with_arrays(new_params), new_state


def _param_name(k: int) -> str:
    return f"{'weight' if k % 2 == 0 else 'bias'}[{k // 2}]"


def clip_weights(params: MlpParams, c: float) -> MlpParams:
    if not c > 0:
        raise ValueError(f"clip bound must be positive, got {c}")
    return params.with_arrays([np.clip(a, -c, c) for a in params.arrays()])


# Checkpoint layout, per network:
#   one ASCII header line  "wganlab-mlp 1 <role> <activation> <d0>,<d1>,...\n"
#   then every array of params.arrays() as little-endian float64, row-major.
# A checkpoint file may hold several networks back to back.
_MAGIC = "wganlab-mlp"


def params_to_bytes(params: MlpParams) -> bytes:
    dims = ",".join(str(d) for d in params.dims)
    header = f"{_MAGIC} 1 {params.role} {params.activation} {dims}\n".encode("ascii")
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays())
    return header + body


def params_from_bytes(blob: bytes, offset: int = 0) -> tuple[MlpParams, int]:
    """Parse one network starting at ``offset``; returns it and the next offset."""
    end = blob.index(b"\n", offset)
    parts = blob[offset:end].decode("ascii").split()
    if len(parts) != 5 or parts[0] != _MAGIC or parts[1] != "1":
        raise ValueError(f"not a network checkpoint header: {blob[offset:end]!r}")
    _, _, role, activation, dims_s = parts
    dims = [int(d) for d in dims_s.split(",")]
    pos = end + 1
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        w, pos = _read(blob, pos, (d_in, d_out))
        bias, pos = _read(blob, pos, (d_out,))
        layers.append((w, bias))
    return MlpParams(layers, activation, role), pos


def _read(blob: bytes, pos: int, shape: tuple) -> tuple[np.ndarray, int]:
    count = int(np.prod(shape))
    if pos + 8 * count > len(blob):
        raise ValueError("checkpoint truncated")
    arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).astype(np.float64)
    return arr.reshape(shape), pos + 8 * count


def save_checkpoint(path, *networks: MlpParams) -> bytes:
    blob = b"".join(params_to_bytes(p) for p in networks)
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(blob)
    return blob


def load_checkpoint(path_or_bytes) -> list[MlpParams]:
    if isinstance(path_or_bytes, (bytes, bytearray)):
        blob = bytes(path_or_bytes)
    else:
        with open(path_or_bytes, "rb") as fh:
            blob = fh.read()
    out, pos = [], 0
    while pos < len(blob):
        params, pos = params_from_bytes(blob, pos)
        out.append(params)
    return out

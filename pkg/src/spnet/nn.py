"""Minimal deterministic dense-network engine.

Feed-forward stacks of fully connected layers with exact analytic forward
and backward passes, SGD/Adam optimizers, and a binary checkpoint format
with bit-exact float64 round trips. The final layer is always linear:
softmax and the losses live in :mod:`spnet.losses`.

Everything is float64 and single-threaded; a given seed and configuration
reproduce the identical parameter trajectory. Forward and gradient
evaluation on a frozen network are read-only and safe to call
concurrently; parameter updates are exclusive.
"""

import struct
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import losses
from .errors import CacheError, CheckpointError, ShapeError, UnsupportedVersionError

ACTIVATIONS = ("identity", "relu", "tanh")
_ACT_CODES = {name: i for i, name in enumerate(ACTIVATIONS)}

_MAGIC = b"SPNET"
_VERSION = b"1"
_OPT_MAGIC = b"OPT1"


def _apply_activation(pre: np.ndarray, name: str) -> np.ndarray:
    if name == "identity":
        return pre
    if name == "relu":
        return np.maximum(pre, 0.0)
    return np.tanh(pre)


def _activation_grad(pre: np.ndarray, post: np.ndarray, name: str) -> np.ndarray:
    if name == "identity":
        return np.ones_like(pre)
    if name == "relu":
        return (pre > 0.0).astype(np.float64)
    return 1.0 - post * post


@dataclass
class DenseLayer:
    """One fully connected layer: out = act(x @ weights.T + bias)."""

    weights: np.ndarray  # (out, in)
    bias: np.ndarray     # (out,)
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 2:
            raise ShapeError("weights must be 2-D (out, in)")
        if self.bias.shape[0] != self.weights.shape[0]:
            raise ShapeError("bias length must equal the layer's output width")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation)


@dataclass
class ForwardCache:
    """Intermediate activations from one forward pass, keyed to a network."""

    signature: tuple
    batch: np.ndarray
    pre: List[np.ndarray]
    post: List[np.ndarray]


@dataclass
class Gradients:
    """Per-parameter gradients plus the gradient w.r.t. the batch input."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    batch: np.ndarray


class Network:
    """Ordered stack of dense layers; the last layer must be linear."""

    def __init__(self, layers: List[DenseLayer]):
        if not layers:
            raise ValueError("a network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(
                    f"layer widths do not chain: {prev.out_dim} -> {nxt.in_dim}"
                )
        if layers[-1].activation != "identity":
            raise ValueError("final layer activation must be identity (softmax lives in the loss)")
        self.layers = layers

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def signature(self) -> tuple:
        return tuple((l.in_dim, l.out_dim, l.activation) for l in self.layers)

    def copy(self) -> "Network":
        return Network([l.copy() for l in self.layers])

    def parameters(self) -> List[np.ndarray]:
        out = []
        for l in self.layers:
            out.append(l.weights)
            out.append(l.bias)
        return out

    def forward(self, batch: np.ndarray):
        """Run the stack on a batch (n, input_dim).

        Returns (logits, cache); the cache carries everything backward()
        needs and is only valid against this network's current structure.
        """
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2:
            raise ShapeError("batch must be 2-D (n, input_dim)")
        if batch.shape[1] != self.input_dim:
            raise ShapeError(
                f"batch has {batch.shape[1]} columns, network expects {self.input_dim}"
            )
        pre_list, post_list = [], []
        x = batch
        for layer in self.layers:
            pre = x @ layer.weights.T + layer.bias
            post = _apply_activation(pre, layer.activation)
            pre_list.append(pre)
            post_list.append(post)
            x = post
        cache = ForwardCache(self.signature(), batch, pre_list, post_list)
        return x, cache

    def backward(self, cache: ForwardCache, dlogits: np.ndarray) -> Gradients:
        """Backpropagate an upstream logit gradient through the cached pass."""
        if cache.signature != self.signature():
            raise CacheError("cache does not match this network's structure")
        dlogits = np.asarray(dlogits, dtype=np.float64)
        if dlogits.shape != cache.post[-1].shape:
            raise CacheError(
                f"upstream gradient shape {dlogits.shape} does not match cached logits "
                f"{cache.post[-1].shape}"
            )
        d_weights = [None] * len(self.layers)
        d_biases = [None] * len(self.layers)
        g = dlogits
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            d_pre = g * _activation_grad(cache.pre[i], cache.post[i], layer.activation)
            x_in = cache.batch if i == 0 else cache.post[i - 1]
            d_weights[i] = d_pre.T @ x_in
            d_biases[i] = d_pre.sum(axis=0)
            g = d_pre @ layer.weights
        return Gradients(d_weights, d_biases, g)

    def predict(self, batch: np.ndarray) -> np.ndarray:
        logits, _ = self.forward(batch)
        return np.argmax(logits, axis=1)


def dense_network(layer_sizes, hidden_activation: str = "tanh", seed: int = 0) -> Network:
    """Build a seeded network from a width list like [2, 16, 2].

    Weights are uniform with a Kaiming-style fan-in bound sqrt(6/fan_in);
    biases start at zero. Hidden layers share one activation, the output
    layer is linear.
    """
    if len(layer_sizes) < 2:
        raise ValueError("need at least input and output sizes")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(layer_sizes, layer_sizes[1:])):
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = np.zeros(fan_out)
        act = "identity" if i == len(layer_sizes) - 2 else hidden_activation
        layers.append(DenseLayer(w, b, act))
    return Network(layers)


def scale_last_layer(net: Network, c: float) -> Network:
    """Return a copy with the last layer's weights and bias multiplied by c.

    On a network that classifies every sample correctly, any c > 1 keeps
    all argmax predictions and strictly lowers total cross entropy, which
    is exactly why cross entropy alone never pins down a boundary.
    """
    if c <= 0:
        raise ValueError("scale factor must be > 0")
    scaled = net.copy()
    scaled.layers[-1].weights *= c
    scaled.layers[-1].bias *= c
    return scaled


def input_gradient(net: Network, spec: "losses.LossSpec", batch: np.ndarray,
                   labels: np.ndarray) -> np.ndarray:
    """Gradient of the summed loss w.r.t. the input batch (same shape as batch)."""
    logits, cache = net.forward(batch)
    _, dlogits, _ = losses.loss_on_logits(logits, labels, spec)
    return net.backward(cache, dlogits).batch


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------

@dataclass
class Sgd:
    """Plain gradient descent: theta <- theta - lr * g."""

    learning_rate: float
    kind: str = field(default="sgd", init=False)

    def step(self, net: Network, grads: Gradients) -> None:
        _check_grad_shapes(net, grads)
        for layer, dw, db in zip(net.layers, grads.weights, grads.biases):
            layer.weights -= self.learning_rate * dw
            layer.bias -= self.learning_rate * db


@dataclass
class Adam:
    """Adam with bias correction; moments allocate lazily to match the net."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    kind: str = field(default="adam", init=False)

    def __post_init__(self):
        self.t = 0
        self.m: Optional[List[np.ndarray]] = None
        self.v: Optional[List[np.ndarray]] = None

    def step(self, net: Network, grads: Gradients) -> None:
        _check_grad_shapes(net, grads)
        flat = []
        for dw, db in zip(grads.weights, grads.biases):
            flat.append(dw)
            flat.append(db)
        params = net.parameters()
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, flat, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _check_grad_shapes(net: Network, grads: Gradients) -> None:
    if len(grads.weights) != len(net.layers) or len(grads.biases) != len(net.layers):
        raise ShapeError("gradient list length does not match layer count")
    for layer, dw, db in zip(net.layers, grads.weights, grads.biases):
        if dw.shape != layer.weights.shape or db.shape != layer.bias.shape:
            raise ShapeError("gradient shapes do not match parameters")


def make_optimizer(kind: str, learning_rate: float, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8):
    if kind == "sgd":
        return Sgd(learning_rate)
    if kind == "adam":
        return Adam(learning_rate, beta1, beta2, eps)
    raise ValueError(f"unknown optimizer kind {kind!r}")


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------
#
# Layout (all little-endian):
#   magic      b"SPNET" + 1 version byte (b"1")
#   uint32     layer count
#   per layer: uint32 in_dim, uint32 out_dim, uint8 activation code
#   per layer: float64 weights row-major (out*in), float64 bias (out)
#   optional:  b"OPT1", uint8 kind (0 sgd / 1 adam), float64 lr,
#              adam only: float64 beta1, beta2, eps, uint64 step,
#                         then m and v arrays shaped like the parameters.


def save_checkpoint(net: Network, path, optimizer=None) -> None:
    """Write the network (and optionally optimizer state) to path."""
    chunks = [_MAGIC, _VERSION, struct.pack("<I", len(net.layers))]
    for layer in net.layers:
        chunks.append(
            struct.pack("<IIB", layer.in_dim, layer.out_dim, _ACT_CODES[layer.activation])
        )
    for layer in net.layers:
        chunks.append(layer.weights.astype("<f8").tobytes())
        chunks.append(layer.bias.astype("<f8").tobytes())
    if optimizer is not None:
        chunks.append(_OPT_MAGIC)
        if optimizer.kind == "sgd":
            chunks.append(struct.pack("<Bd", 0, optimizer.learning_rate))
        else:
            chunks.append(
                struct.pack(
                    "<BddddQ",
                    1,
                    optimizer.learning_rate,
                    optimizer.beta1,
                    optimizer.beta2,
                    optimizer.eps,
                    optimizer.t,
                )
            )
            if optimizer.m is not None:
                for arr in optimizer.m + optimizer.v:
                    chunks.append(arr.astype("<f8").tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(chunks))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("checkpoint truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)

    def remaining(self) -> int:
        return len(self.buf) - self.pos


def load_checkpoint(path) -> Network:
    """Load a network; raises CheckpointError on any structural problem."""
    net, _ = load_checkpoint_full(path)
    return net


def load_checkpoint_full(path):
    """Load (network, optimizer-or-None) from a checkpoint file."""
    with open(path, "rb") as f:
        r = _Reader(f.read())
    magic = r.take(len(_MAGIC))
    if magic != _MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    version = r.take(1)
    if version != _VERSION:
        raise UnsupportedVersionError(
            f"unsupported checkpoint version {version!r} (expected {_VERSION!r})"
        )
    (n_layers,) = struct.unpack("<I", r.take(4))
    if n_layers == 0:
        raise CheckpointError("checkpoint declares zero layers")
    headers = []
    for _ in range(n_layers):
        in_dim, out_dim, act = struct.unpack("<IIB", r.take(9))
        if act >= len(ACTIVATIONS):
            raise CheckpointError(f"unknown activation code {act}")
        headers.append((in_dim, out_dim, ACTIVATIONS[act]))
    layers = []
    for in_dim, out_dim, act in headers:
        w = r.floats(out_dim * in_dim).reshape(out_dim, in_dim)
        b = r.floats(out_dim)
        layers.append(DenseLayer(w, b, act))
    try:
        net = Network(layers)
    except (ShapeError, ValueError) as exc:
        raise CheckpointError(f"inconsistent layer structure: {exc}") from exc

    optimizer = None
    if r.remaining():
        tag = r.take(len(_OPT_MAGIC))
        if tag != _OPT_MAGIC:
            raise CheckpointError("trailing bytes after parameters")
        (kind_code,) = struct.unpack("<B", r.take(1))
        if kind_code == 0:
            (lr,) = struct.unpack("<d", r.take(8))
            optimizer = Sgd(lr)
        elif kind_code == 1:
            lr, b1, b2, eps, step = struct.unpack("<ddddQ", r.take(40))
            optimizer = Adam(lr, b1, b2, eps)
            optimizer.t = int(step)
            if r.remaining():
                m, v = [], []
                for target in (m, v):
                    for layer in net.layers:
                        target.append(
                            r.floats(layer.out_dim * layer.in_dim).reshape(
                                layer.out_dim, layer.in_dim
                            )
                        )
                        target.append(r.floats(layer.out_dim))
                optimizer.m, optimizer.v = m, v
        else:
            raise CheckpointError(f"unknown optimizer code {kind_code}")
        if r.remaining():
            raise CheckpointError("trailing bytes after optimizer state")
    return net, optimizer

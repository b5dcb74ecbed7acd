"""A small numpy CNN engine: LeNet-5 style network with and without average
pooling, exact backpropagation, Adam/SGD training and gradient checking.

Tensors are plain ``float64`` numpy arrays laid out ``(n, c, h, w)`` for
feature maps and ``(n, d)`` after flattening.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptySplit, InvalidParams, IoFailure, ShapeMismatch

CHECKPOINT_FORMAT = "dyadscan-checkpoint"
CHECKPOINT_VERSION = 1


class Arch(str, enum.Enum):
    WITH_POOLING = "pool"
    NO_POOLING = "nopool"


# ----------------------------------------------------------------------------
# Layers


class Layer:

    def __init__(self):
        self.params = {}
        self.grads = {}

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        raise NotImplementedError

    def backward(self, g):
        raise NotImplementedError

    def spec(self) -> dict:
        return {"kind": type(self).__name__}


class Conv2d(Layer):
    """Valid cross-correlation with shared weights and a per-map bias."""

    def __init__(self, in_ch, out_ch, kh, kw, stride=1):
        super().__init__()
        self.in_ch, self.out_ch, self.kh, self.kw, self.stride = in_ch, out_ch, kh, kw, stride
        self.params = {"W": np.zeros((out_ch, in_ch, kh, kw)), "b": np.zeros(out_ch)}

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_ch:
            raise ShapeMismatch(f"conv expects {self.in_ch} input channels, got {c}")
        if self.kh > h or self.kw > w or min(self.kh, self.kw, self.stride) < 1:
            raise ShapeMismatch(f"kernel {self.kh}x{self.kw} does not fit input {h}x{w}")
        return (self.out_ch, (h - self.kh) // self.stride + 1, (w - self.kw) // self.stride + 1)

    def _window(self, x, p, q, ho, wo):
        s = self.stride
        return x[:, :, p:p + s * (ho - 1) + 1:s, q:q + s * (wo - 1) + 1:s]

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeMismatch(f"conv input must be 4-D, got {x.shape}")
        _, ho, wo = self.out_shape(x.shape[1:])
        W, b = self.params["W"], self.params["b"]
        out = np.zeros((x.shape[0], self.out_ch, ho, wo), dtype=x.dtype)
        for p in range(self.kh):
            for q in range(self.kw):
                out += np.einsum("nchw,oc->nohw", self._window(x, p, q, ho, wo), W[:, :, p, q])
        out += b[None, :, None, None]
        self._x = x
        return out

    def backward(self, g):
        x = self._x
        ho, wo = g.shape[2], g.shape[3]
        W = self.params["W"]
        dW = np.zeros_like(W)
        dx = np.zeros_like(x)
        s = self.stride
        for p in range(self.kh):
            for q in range(self.kw):
                dW[:, :, p, q] = np.einsum("nohw,nchw->oc", g, self._window(x, p, q, ho, wo))
                dx[:, :, p:p + s * (ho - 1) + 1:s, q:q + s * (wo - 1) + 1:s] += np.einsum(
                    "nohw,oc->nchw", g, W[:, :, p, q])
        self.grads = {"W": dW, "b": g.sum(axis=(0, 2, 3))}
        return dx

    def spec(self):
        return {"kind": "Conv2d", "out_ch": self.out_ch, "kh": self.kh, "kw": self.kw,
                "stride": self.stride}


class AvgPool(Layer):
    """Non-overlapping window mean; a trailing remainder is dropped."""

    def __init__(self, ph, pw):
        super().__init__()
        self.ph, self.pw = ph, pw

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if self.ph < 1 or self.pw < 1 or self.ph > h or self.pw > w:
            raise ShapeMismatch(f"pool {self.ph}x{self.pw} does not fit input {h}x{w}")
        return (c, h // self.ph, w // self.pw)

    def forward(self, x):
        n, c, h, w = x.shape
        ho, wo = h // self.ph, w // self.pw
        self._in = x.shape
        blocks = x[:, :, :ho * self.ph, :wo * self.pw].reshape(n, c, ho, self.ph, wo, self.pw)
        return blocks.mean(axis=(3, 5))

    def backward(self, g):
        n, c, ho, wo = g.shape
        dx = np.zeros(self._in, dtype=g.dtype)
        spread = np.repeat(np.repeat(g, self.ph, axis=2), self.pw, axis=3) / (self.ph * self.pw)
        dx[:, :, :ho * self.ph, :wo * self.pw] = spread
        return dx

    def spec(self):
        return {"kind": "AvgPool", "ph": self.ph, "pw": self.pw}


class Flatten(Layer):
    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        self._in = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape(self._in)


class Dense(Layer):
    def __init__(self, in_dim, units):
        super().__init__()
        self.in_dim, self.units = in_dim, units
        self.params = {"W": np.zeros((in_dim, units)), "b": np.zeros(units)}

    def out_shape(self, in_shape):
        if in_shape != (self.in_dim,):
            raise ShapeMismatch(f"dense expects ({self.in_dim},), got {in_shape}")
        return (self.units,)

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeMismatch(f"dense expects (n, {self.in_dim}), got {x.shape}")
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, g):
        self.grads = {"W": self._x.T @ g, "b": g.sum(axis=0)}
        return g @ self.params["W"].T

    def spec(self):
        return {"kind": "Dense", "units": self.units}


class Relu(Layer):
    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, g):
        return g * self._mask


class Tanh(Layer):
    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, g):
        return g * (1.0 - self._y ** 2)


class Softmax(Layer):
    """Terminal layer; its gradient is folded into the cross-entropy."""

    def forward(self, x):
        return softmax(x)

    def backward(self, g):
        raise RuntimeError("Softmax backward is handled by the cross-entropy loss")


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


# ----------------------------------------------------------------------------
# Network


@dataclass(frozen=True)
class NetConfig:
    """Architecture knobs; the defaults give the 18x1 single-channel layout."""

    input_hw: tuple = (18, 1)
    conv_channels: tuple = (6, 16)
    kernel: tuple = (3, 1)
    stride: int = 1
    pool: tuple = (2, 1)
    dense_units: tuple = (128, 128, 128)
    n_classes: int = 2
    activation: str = "relu"

    def __post_init__(self):
        for name in ("input_hw", "conv_channels", "kernel", "pool", "dense_units"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if self.activation not in ("relu", "tanh"):
            raise InvalidParams(f"unknown activation {self.activation!r}")


def _act(name):
    return Relu() if name == "relu" else Tanh()


class Network:
    def __init__(self, arch: Arch | str = Arch.NO_POOLING, config: NetConfig | None = None,
                 seed: int = 0):
        self.arch = Arch(arch)
        self.config = config or NetConfig()
        cfg = self.config
        layers: list = []
        shape = (1,) + cfg.input_hw
        in_ch = 1
        for out_ch in cfg.conv_channels:
            layers.append(Conv2d(in_ch, out_ch, cfg.kernel[0], cfg.kernel[1], cfg.stride))
            layers.append(_act(cfg.activation))
            if self.arch is Arch.WITH_POOLING:
                layers.append(AvgPool(*cfg.pool))
            in_ch = out_ch
        layers.append(Flatten())
        self.layers = layers
        # validate the conv part of the chain before sizing the dense stack
        for layer in layers:
            shape = layer.out_shape(shape)
        dim = shape[0]
        for units in cfg.dense_units:
            layers += [Dense(dim, units), _act(cfg.activation)]
            dim = units
        layers += [Dense(dim, cfg.n_classes), Softmax()]
        self.shapes = self._shape_chain()
        self.initialize(seed)

    def _shape_chain(self):
        shape = (1,) + self.config.input_hw
        chain = [shape]
        for layer in self.layers:
            shape = layer.out_shape(shape)
            chain.append(shape)
        return chain

    @property
    def input_shape(self):
        return (1,) + self.config.input_hw

    def initialize(self, seed: int) -> None:
        """He-uniform for hidden layers, Glorot-uniform for the output, zero biases."""
        rng = np.random.default_rng(seed)
        trainable = [l for l in self.layers if l.params]
        for k, layer in enumerate(trainable):
            W = layer.params["W"]
            if isinstance(layer, Conv2d):
                fan_in = layer.in_ch * layer.kh * layer.kw
                fan_out = layer.out_ch * layer.kh * layer.kw
            else:
                fan_in, fan_out = W.shape
            last = k == len(trainable) - 1
            limit = np.sqrt(6.0 / (fan_in + fan_out)) if last else np.sqrt(6.0 / fan_in)
            layer.params["W"] = rng.uniform(-limit, limit, size=W.shape)
            layer.params["b"] = np.zeros_like(layer.params["b"])

    def parameters(self):
        """``(name, array)`` pairs in a fixed order."""
        out = []
        for i, layer in enumerate(self.layers):
            for key in sorted(layer.params):
                out.append((f"{i}.{type(layer).__name__}.{key}", layer.params[key]))
        return out

    def set_parameter(self, name, value):
        i, _, key = name.split(".")
        self.layers[int(i)].params[key] = value

    def n_parameters(self) -> int:
        return sum(p.size for _, p in self.parameters())

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2 and x.shape[1] == int(np.prod(self.config.input_hw)):
            x = x.reshape((x.shape[0],) + self.input_shape)
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise ShapeMismatch(f"expected batch of shape (n, {self.input_shape}), got {x.shape}")
        return x

    def logits(self, x):
        x = self._check_input(x)
        for layer in self.layers[:-1]:
            x = layer.forward(x)
        return x

    def forward(self, x):
        return softmax(self.logits(x))

    __call__ = forward

    def predict(self, x):
        return np.argmax(self.logits(x), axis=1)

    def backward(self, g):
        for layer in reversed(self.layers[:-1]):
            g = layer.backward(g)
        return g

    def gradients(self):
        out = []
        for i, layer in enumerate(self.layers):
            for key in sorted(layer.params):
                out.append((f"{i}.{type(layer).__name__}.{key}", layer.grads[key]))
        return out

    def describe(self):
        return [layer.spec() for layer in self.layers]


def forward(net: Network, batch):
    return net.forward(batch)


def loss_and_grads(net: Network, batch, labels):
    """Mean softmax cross-entropy and its exact gradient for every parameter.

    Returns ``(loss, [(name, grad), ...])`` in :meth:`Network.parameters` order.
    """
    labels = np.asarray(labels)
    z = net.logits(batch)
    if labels.shape != (z.shape[0],):
        raise ShapeMismatch(f"labels shape {labels.shape} does not match batch of {z.shape[0]}")
    if np.any((labels < 0) | (labels >= z.shape[1])):
        raise ShapeMismatch("labels out of range")
    labels = labels.astype(int)
    n = z.shape[0]
    logp = log_softmax(z)
    loss = -logp[np.arange(n), labels].mean()
    g = np.exp(logp)
    g[np.arange(n), labels] -= 1.0
    net.backward(g / n)
    return float(loss), net.gradients()


# ----------------------------------------------------------------------------
# Training


class Optimizer(str, enum.Enum):
    SGD = "sgd"
    ADAM = "adam"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: Optimizer = Optimizer.ADAM
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        if self.epochs < 1 or self.batch_size < 1 or not self.learning_rate >= 0:
            raise InvalidParams("need epochs >= 1, batch_size >= 1, learning_rate >= 0")

    def to_dict(self):
        d = asdict(self)
        d["optimizer"] = self.optimizer.value
        return d


class _Adam:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.m: dict = {}
        self.v: dict = {}
        self.t = 0

    def step(self, net, grads):
        c = self.cfg
        self.t += 1
        params = dict(net.parameters())
        for name, g in grads:
            m = self.m.get(name, 0.0) * c.beta1 + (1 - c.beta1) * g
            v = self.v.get(name, 0.0) * c.beta2 + (1 - c.beta2) * g * g
            self.m[name], self.v[name] = m, v
            mhat = m / (1 - c.beta1 ** self.t)
            vhat = v / (1 - c.beta2 ** self.t)
            net.set_parameter(name, params[name] - c.learning_rate * mhat / (np.sqrt(vhat) + c.eps))


class _Sgd:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg

    def step(self, net, grads):
        params = dict(net.parameters())
        for name, g in grads:
            net.set_parameter(name, params[name] - self.cfg.learning_rate * g)


@dataclass
class TrainResult:
    net: Network
    loss_history: list = field(default_factory=list)


def train(net: Network, x, y, cfg: TrainConfig | None = None) -> TrainResult:
    """Mini-batch training; shuffling is seeded and the last partial batch is kept.

    ``loss_history`` holds the sample-weighted mean training loss per epoch.
    """
    cfg = cfg or TrainConfig()
    x = net._check_input(x)
    y = np.asarray(y)
    n = x.shape[0]
    if n == 0:
        raise EmptySplit("cannot train on an empty split")
    if y.shape != (n,):
        raise ShapeMismatch("labels do not match samples")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    opt = _Adam(cfg) if cfg.optimizer is Optimizer.ADAM else _Sgd(cfg)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, grads = loss_and_grads(net, x[idx], y[idx])
            opt.step(net, grads)
            total += loss * idx.size
        history.append(total / n)
    return TrainResult(net, history)


def build_and_train(arch, x, y, cfg: TrainConfig | None = None,
                    net_config: NetConfig | None = None) -> TrainResult:
    cfg = cfg or TrainConfig()
    net = Network(arch, net_config, seed=int(np.random.SeedSequence([cfg.seed, 0]).generate_state(1)[0]))
    return train(net, x, y, cfg)


# ----------------------------------------------------------------------------
# Gradient checking


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_parameter: str
    n_checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def _rel_error(a, b, floor):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def grad_check(net: Network, batch, labels, tolerance: float = 1e-5, eps: float = 1e-5,
               floor: float = 1e-8) -> GradCheckReport:
    """Compare analytic gradients with central finite differences, entry by entry.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``. Float64 central
    differences carry ~1e-11 of rounding noise, which swamps entries of order
    1e-8, so entries below ``_REFINE_BELOW`` that disagree are re-differenced
    in extended precision.
    """
    _, grads = loss_and_grads(net, batch, labels)
    analytic = {name: g.copy().reshape(-1) for name, g in grads}
    labels = np.asarray(labels, dtype=int)
    x = net._check_input(batch)

    numeric = _finite_differences(net, x, labels, eps, None)
    refine = {}
    for name, a in analytic.items():
        n = numeric[name]
        idx = np.flatnonzero((np.maximum(np.abs(a), np.abs(n)) < _REFINE_BELOW) & (a != n))
        if idx.size:
            refine[name] = idx
    if refine:
        originals = net.parameters()
        for name, p in originals:
            net.set_parameter(name, p.astype(np.longdouble))
        try:
            precise = _finite_differences(net, x.astype(np.longdouble), labels,
                                          np.longdouble(eps), refine)
        finally:
            for name, p in originals:
                net.set_parameter(name, p)
        for name, idx in refine.items():
            numeric[name][idx] = precise[name][idx]

    worst, worst_name, count = 0.0, "", 0
    for name, a in analytic.items():
        err = _rel_error(a, numeric[name], floor)
        count += a.size
        if err.size and err.max() > worst:
            worst, worst_name = float(err.max()), name
    return GradCheckReport(worst, worst_name, count, tolerance)


_REFINE_BELOW = 1e-4


def _finite_differences(net, x, labels, eps, only):
    # activations entering each layer; perturbing layer k only reruns k onwards
    inputs = [x]
    for layer in net.layers[:-1]:
        inputs.append(layer.forward(inputs[-1]))
    out = {}
    for name, p in net.parameters():
        if only is not None and name not in only:
            continue
        k = int(name.split(".")[0])
        flat = p.reshape(-1)
        numeric = np.zeros(flat.size)
        for idx in (range(flat.size) if only is None else only[name]):
            orig = flat[idx]
            flat[idx] = orig + eps
            lp = _loss_from(net, k, inputs[k], labels)
            flat[idx] = orig - eps
            lm = _loss_from(net, k, inputs[k], labels)
            flat[idx] = orig
            numeric[idx] = (lp - lm) / (2 * eps)
        out[name] = numeric
    return out


def _loss_from(net, k, h, labels):
    for layer in net.layers[k:-1]:
        h = layer.forward(h)
    logp = log_softmax(h)
    return -logp[np.arange(h.shape[0]), labels].mean()


# ----------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(net: Network, path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "arch": net.arch.value,
        "config": {k: list(v) if isinstance(v, tuple) else v
                   for k, v in asdict(net.config).items()},
        "layers": net.describe(),
        "params": [{"name": name, "shape": list(p.shape), "data": p.reshape(-1).tolist()}
                   for name, p in net.parameters()],
    }
    try:
        Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path) -> Network:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise IoFailure(f"{path} is not a version-{CHECKPOINT_VERSION} dyadscan checkpoint")
    net = Network(doc["arch"], NetConfig(**doc["config"]))
    current = dict(net.parameters())
    for entry in doc["params"]:
        arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        if entry["name"] not in current or current[entry["name"]].shape != arr.shape:
            raise ShapeMismatch(f"checkpoint parameter {entry['name']} does not fit the network")
        net.set_parameter(entry["name"], arr)
    return net

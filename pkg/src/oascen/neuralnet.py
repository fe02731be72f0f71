"""A minimal feed-forward network engine for the generator and discriminator.

Networks are stacks of Dense or Conv1D layers acting on row batches. The first
layer sees ``concat(data, one_hot(label))``. Parameters live in one flat
vector so SGD is a single vector update and checkpoints are one array.

``backward`` returns the gradient of ``sum(upstream * output)`` with respect to
the flat parameters *and* the data part of the input; the latter is what lets a
discriminator gradient flow into the generator.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataIOError, DimensionMismatch, ParseError, ValidationError

ACTIVATIONS = ("relu", "sigmoid", "tanh", "identity")
EPS_CLIP = 1e-7
CHECKPOINT_FORMAT = "oascen-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    fan_in: int
    fan_out: int
    activation: str = "relu"
    scale: float = 1.0          # output multiplier, e.g. tanh * output_range
    channels_in: int = 1        # conv1d only
    channels_out: int = 1
    kernel: int = 3

    def __post_init__(self):
        if self.kind not in ("dense", "conv1d"):
            raise ValidationError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        if self.kind == "conv1d":
            if self.kernel % 2 == 0:
                raise ValidationError("conv1d kernel must be odd ('same' padding)")
            if self.fan_in % self.channels_in or \
                    self.fan_out != self.channels_out * (self.fan_in // self.channels_in):
                raise ValidationError("conv1d fan_in/fan_out inconsistent with channels")

    @property
    def length(self) -> int:
        return self.fan_in // self.channels_in

    @property
    def n_params(self) -> int:
        if self.kind == "dense":
            return self.fan_in * self.fan_out + self.fan_out
        return self.channels_out * self.channels_in * self.kernel + self.channels_out


@dataclass(frozen=True)
class NetSpec:
    layers: tuple[LayerSpec, ...]
    n_labels: int = 4

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValidationError("network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.fan_out != b.fan_in:
                raise ValidationError(f"layer widths do not chain: {a.fan_out} -> {b.fan_in}")
        if self.n_labels < 0:
            raise ValidationError("n_labels must be nonnegative")
        if self.layers[0].fan_in <= self.n_labels:
            raise ValidationError("first layer must be wider than the label embedding")

    @property
    def n_data(self) -> int:
        return self.layers[0].fan_in - self.n_labels

    @property
    def n_out(self) -> int:
        return self.layers[-1].fan_out

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    def offsets(self) -> list[int]:
        out, k = [], 0
        for layer in self.layers:
            out.append(k)
            k += layer.n_params
        return out

    def to_dict(self) -> dict:
        return {"n_labels": self.n_labels, "layers": [asdict(lay) for lay in self.layers]}

    @classmethod
    def from_dict(cls, d) -> "NetSpec":
        return cls(tuple(LayerSpec(**lay) for lay in d["layers"]), int(d["n_labels"]))


@dataclass(frozen=True)
class NetParams:
    theta: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float).reshape(-1)
        if not np.all(np.isfinite(th)):
            raise ValidationError("non-finite network parameters")
        object.__setattr__(self, "theta", th)


@dataclass(frozen=True)
class NoiseSpec:
    n_z: int = 16

    def __post_init__(self):
        if self.n_z <= 0:
            raise ValidationError("noise dimension must be positive")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.standard_normal((n, self.n_z))


def generator_spec(n_z: int, n_out: int, n_labels: int = 4, hidden: int = 128,
                   output_range: float = 2.5) -> NetSpec:
    return NetSpec((
        LayerSpec("dense", n_z + n_labels, hidden, "relu"),
        LayerSpec("dense", hidden, hidden, "relu"),
        LayerSpec("dense", hidden, n_out, "tanh", scale=output_range),
    ), n_labels)


def discriminator_spec(n_in: int, n_labels: int = 4, hidden: int = 128) -> NetSpec:
    return NetSpec((
        LayerSpec("dense", n_in + n_labels, hidden, "relu"),
        LayerSpec("dense", hidden, hidden, "relu"),
        LayerSpec("dense", hidden, 1, "sigmoid"),
    ), n_labels)


def init_params(spec: NetSpec, seed: int) -> NetParams:
    """Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases."""
    rng = np.random.default_rng(seed)
    parts = []
    for lay in spec.layers:
        if lay.kind == "dense":
            lim = np.sqrt(6.0 / (lay.fan_in + lay.fan_out))
            parts.append(rng.uniform(-lim, lim, lay.fan_in * lay.fan_out))
            parts.append(np.zeros(lay.fan_out))
        else:
            lim = np.sqrt(6.0 / ((lay.channels_in + lay.channels_out) * lay.kernel))
            parts.append(rng.uniform(-lim, lim, lay.channels_out * lay.channels_in * lay.kernel))
            parts.append(np.zeros(lay.channels_out))
    return NetParams(np.concatenate(parts), seed)


def _unpack(lay: LayerSpec, theta: np.ndarray, off: int):
    if lay.kind == "dense":
        nw = lay.fan_in * lay.fan_out
        W = theta[off:off + nw].reshape(lay.fan_in, lay.fan_out)
        return W, theta[off + nw:off + nw + lay.fan_out]
    nw = lay.channels_out * lay.channels_in * lay.kernel
    W = theta[off:off + nw].reshape(lay.channels_out, lay.channels_in, lay.kernel)
    return W, theta[off + nw:off + nw + lay.channels_out]


def _activate(kind, a, scale):
    if kind == "relu":
        return np.maximum(a, 0.0)
    if kind == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * a))
    if kind == "tanh":
        return scale * np.tanh(a)
    return a


def _activate_grad(kind, a, out, scale):
    if kind == "relu":
        return (a > 0).astype(float)
    if kind == "sigmoid":
        return out * (1.0 - out)
    if kind == "tanh":
        return scale * (1.0 - np.tanh(a) ** 2)
    return np.ones_like(a)


def one_hot(labels, n_labels: int) -> np.ndarray:
    labels = np.atleast_1d(np.asarray(labels, dtype=int))
    if n_labels == 0:
        return np.zeros((labels.size, 0))
    if labels.size and (labels.min() < 0 or labels.max() >= n_labels):
        raise ValidationError(f"label outside vocabulary 0..{n_labels - 1}")
    out = np.zeros((labels.size, n_labels))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _conv_forward(lay, W, b, h):
    B = h.shape[0]
    x = h.reshape(B, lay.channels_in, lay.length)
    pad = lay.kernel // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    win = sliding_window_view(xp, lay.kernel, axis=2)          # (B, Cin, L, K)
    a = np.einsum("bilk,oik->bol", win, W) + b[None, :, None]
    return a.reshape(B, -1), win


def _conv_backward(lay, W, win, g):
    B = g.shape[0]
    g = g.reshape(B, lay.channels_out, lay.length)
    dW = np.einsum("bol,bilk->oik", g, win)
    db = g.sum(axis=(0, 2))
    pad = lay.kernel // 2
    dxp = np.zeros((B, lay.channels_in, lay.length + 2 * pad))
    for k in range(lay.kernel):
        dxp[:, :, k:k + lay.length] += np.einsum("bol,oi->bil", g, W[:, :, k])
    dx = dxp[:, :, pad:pad + lay.length]
    return dW, db, dx.reshape(B, -1)


def forward(spec: NetSpec, params: NetParams, x, labels=None):
    """Run the network on a batch.

    ``x`` is ``(B, n_data)`` (or a single vector); ``labels`` is an int or a
    length-B sequence. Returns ``(output, tape)`` with output ``(B, n_out)``
    (or a vector for vector input).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != spec.n_data:
        raise DimensionMismatch(f"input width {X.shape[1]} != {spec.n_data}")
    if params.theta.size != spec.n_params:
        raise DimensionMismatch(f"{params.theta.size} parameters for a {spec.n_params}-parameter net")
    if labels is None:
        if spec.n_labels:
            raise ValidationError("this network is label-conditioned; pass labels")
        labels = 0
    lab = np.broadcast_to(np.asarray(labels, dtype=int), (X.shape[0],))
    h = np.hstack([X, one_hot(lab, spec.n_labels)])
    records = []
    for lay, off in zip(spec.layers, spec.offsets()):
        W, b = _unpack(lay, params.theta, off)
        if lay.kind == "dense":
            a, aux = h @ W + b, None
        else:
            a, aux = _conv_forward(lay, W, b, h)
        out = _activate(lay.activation, a, lay.scale)
        records.append((h, a, out, aux))
        h = out
    tape = {"records": records, "single": single}
    return (h[0] if single else h), tape


def backward(spec: NetSpec, params: NetParams, tape, upstream):
    """Gradient of ``sum(upstream * output)``.

    Returns ``(grad_theta, grad_data)``; ``grad_data`` has the shape of the
    forward input (label columns dropped).
    """
    g = np.asarray(upstream, dtype=float)
    if tape["single"]:
        g = g[None, :]
    records = tape["records"]
    if g.shape != records[-1][2].shape:
        raise DimensionMismatch(f"upstream shape {g.shape} != output {records[-1][2].shape}")
    grad = np.zeros(spec.n_params)
    offsets = spec.offsets()
    for lay, off, (h, a, out, aux) in zip(reversed(spec.layers), reversed(offsets), reversed(records)):
        W, _ = _unpack(lay, params.theta, off)
        ga = g * _activate_grad(lay.activation, a, out, lay.scale)
        if lay.kind == "dense":
            dW, db, g = h.T @ ga, ga.sum(axis=0), ga @ W.T
        else:
            dW, db, g = _conv_backward(lay, W, aux, ga)
        grad[off:off + dW.size] = dW.reshape(-1)
        grad[off + dW.size:off + dW.size + db.size] = db
    g_data = g[:, :spec.n_data]
    return grad, (g_data[0] if tape["single"] else g_data)


def sgd_step(params: NetParams, grad, alpha: float) -> NetParams:
    grad = np.asarray(grad, dtype=float)
    if grad.shape != params.theta.shape:
        raise DimensionMismatch("gradient and parameter shapes differ")
    return NetParams(params.theta - alpha * grad, params.seed)


def clip_prob(p):
    return np.clip(p, EPS_CLIP, 1.0 - EPS_CLIP)


# -- checkpoints ---------------------------------------------------------

def save_checkpoint(path, nets: dict, meta: dict | None = None) -> None:
    """Write ``{name: (NetSpec, NetParams)}`` plus metadata as JSON.

    Floats are written with ``repr`` so a reload is bit-exact.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "nets": {name: {"spec": spec.to_dict(), "seed": p.seed,
                        "theta": [float(v) for v in p.theta]}
                 for name, (spec, p) in nets.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(nets, meta)``."""
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataIOError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"checkpoint {path} is not valid JSON: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ParseError(f"{path} is not a version-{CHECKPOINT_VERSION} checkpoint")
    nets = {}
    for name, d in doc["nets"].items():
        spec = NetSpec.from_dict(d["spec"])
        p = NetParams(np.array(d["theta"], dtype=float), d.get("seed"))
        if p.theta.size != spec.n_params:
            raise ParseError(f"checkpoint net {name!r} has wrong parameter count")
        nets[name] = (spec, p)
    return nets, doc.get("meta", {})

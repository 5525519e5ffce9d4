"""Early-fusion GRU regressor with hand-written backward pass.

Row-vector convention throughout: a dense layer computes ``x @ W + b`` with
``W`` of shape (fan_in, fan_out). Parameter order (also the checkpoint
order): fusion W, fusion b; per GRU layer, forward then backward direction,
W_r, W_z, W_n, U_r, U_z, U_n, b_r, b_z, b_n; then head W1, b1, W2, b2.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import InvalidConfig, ShapeMismatch, StaleCache
from . import _kernels

log = logging.getLogger(__name__)

GATE_NAMES = ("W_r", "W_z", "W_n", "U_r", "U_z", "U_n", "b_r", "b_z", "b_n")
STANDARD_DIMS = (128, 256)


@dataclass(frozen=True)
class ModelConfig:
    input_dims: tuple
    fused_dim: int = 256
    rnn_layers: int = 1
    rnn_bidirectional: bool = False
    head_hidden: int | None = None
    seed: int = 0
    modality_names: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "input_dims", tuple(int(n) for n in self.input_dims))
        object.__setattr__(self, "modality_names", tuple(self.modality_names))
        if self.head_hidden is None:
            object.__setattr__(self, "head_hidden", max(1, self.fused_dim // 2))
        self.validate()

    def validate(self):
        if not self.input_dims or any(n < 1 for n in self.input_dims):
            raise InvalidConfig("input_dims must be a non-empty list of positive widths")
        for name in ("fused_dim", "rnn_layers", "head_hidden"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise InvalidConfig(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise InvalidConfig(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.modality_names and len(self.modality_names) != len(self.input_dims):
            raise InvalidConfig("modality_names and input_dims differ in length")
        return self

    @property
    def input_width(self):
        return sum(self.input_dims)

    @property
    def directions(self):
        return ("fwd", "bwd") if self.rnn_bidirectional else ("fwd",)

    @property
    def gru_out(self):
        return self.fused_dim * len(self.directions)

    def to_dict(self):
        d = asdict(self)
        d["input_dims"] = list(self.input_dims)
        d["modality_names"] = list(self.modality_names)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            input_dims=tuple(d["input_dims"]),
            fused_dim=int(d["fused_dim"]),
            rnn_layers=int(d["rnn_layers"]),
            rnn_bidirectional=bool(d["rnn_bidirectional"]),
            head_hidden=int(d["head_hidden"]),
            seed=int(d["seed"]),
            modality_names=tuple(d.get("modality_names", ())),
        )


def param_shapes(cfg):
    """Ordered (name, shape) pairs for ``cfg``."""
    d = cfg.fused_dim
    shapes = [("fusion.W", (cfg.input_width, d)), ("fusion.b", (d,))]
    for layer in range(cfg.rnn_layers):
        fan_in = d if layer == 0 else cfg.gru_out
        for direction in cfg.directions:
            pre = f"gru{layer}.{direction}."
            shapes += [(pre + g, (fan_in, d)) for g in ("W_r", "W_z", "W_n")]
            shapes += [(pre + g, (d, d)) for g in ("U_r", "U_z", "U_n")]
            shapes += [(pre + g, (d,)) for g in ("b_r", "b_z", "b_n")]
    h = cfg.head_hidden
    shapes += [("head.W1", (cfg.gru_out, h)), ("head.b1", (h,)),
               ("head.W2", (h, 1)), ("head.b2", (1,))]
    return shapes


class Model:
    """Parameters plus a version counter bumped on every in-place update."""

    def __init__(self, config, params):
        self.config = config
        expected = param_shapes(config)
        if [n for n, _ in expected] != list(params):
            raise ShapeMismatch("parameter names do not match the config layout")
        for name, shape in expected:
            if params[name].shape != shape:
                raise ShapeMismatch(f"{name}: shape {params[name].shape}, expected {shape}")
        self.params = {n: np.ascontiguousarray(params[n], dtype=np.float64) for n, _ in expected}
        self.version = 0

    def copy(self):
        return Model(self.config, {k: v.copy() for k, v in self.params.items()})

    def n_parameters(self):
        return sum(v.size for v in self.params.values())

    def bump(self):
        self.version += 1


def init_model(config):
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases.

    Each parameter draws from its own PCG64 stream keyed by (seed, index), so
    adding a layer never changes the draws of earlier ones.
    """
    if not isinstance(config, ModelConfig):
        raise InvalidConfig("init_model expects a ModelConfig")
    config.validate()
    if config.fused_dim not in STANDARD_DIMS:
        log.debug("fused_dim=%d is outside the usual {128, 256}", config.fused_dim)
    params = {}
    for k, (name, shape) in enumerate(param_shapes(config)):
        if len(shape) == 1:
            params[name] = np.zeros(shape)
            continue
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed, spawn_key=(k,))))
        bound = 1.0 / np.sqrt(shape[0])
        params[name] = rng.uniform(-bound, bound, size=shape)
    return Model(config, params)


@dataclass
class _DirCache:
    inp: np.ndarray
    W: np.ndarray
    H: np.ndarray
    G: np.ndarray


@dataclass
class ForwardCache:
    model_id: int
    version: int
    single: bool
    X: np.ndarray
    layers: list
    top: np.ndarray
    A1: np.ndarray
    R: np.ndarray


def _stack(p, pre, names, axis=1):
    return np.ascontiguousarray(np.concatenate([p[pre + n] for n in names], axis=axis))


def _time_major(x, width):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        X, single = x[:, None, :], True
    elif x.ndim == 3:
        X, single = x.transpose(1, 0, 2), False
    else:
        raise ShapeMismatch(f"input must be T x N or B x T x N, got shape {x.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise ShapeMismatch("input must contain at least one time step")
    if X.shape[2] != width:
        raise ShapeMismatch(f"input width {X.shape[2]} does not match model width {width}")
    return np.ascontiguousarray(X), single


def forward(model, x):
    """Predictions for a (T, N) sequence -> (T,), or a (B, T, N) batch -> (B, T)."""
    cfg = model.config
    p = model.params
    X, single = _time_major(x, cfg.input_width)
    d = cfg.fused_dim

    layer_in = X @ p["fusion.W"] + p["fusion.b"]
    layers = []
    for layer in range(cfg.rnn_layers):
        outs, dirs = [], []
        for direction in cfg.directions:
            pre = f"gru{layer}.{direction}."
            inp = layer_in if direction == "fwd" else np.ascontiguousarray(layer_in[::-1])
            W = _stack(p, pre, ("W_r", "W_z", "W_n"))
            bias = np.concatenate([p[pre + "b_r"], p[pre + "b_z"], np.zeros(d)])
            P = np.ascontiguousarray(inp @ W + bias)
            U = _stack(p, pre, ("U_r", "U_z", "U_n"))
            H, G = _kernels.forward_scan(P, U, p[pre + "b_n"])
            out = H[1:] if direction == "fwd" else H[1:][::-1]
            outs.append(out)
            dirs.append(_DirCache(inp, W, H, G))
        layers.append((layer_in, dirs))
        layer_in = np.ascontiguousarray(np.concatenate(outs, axis=2) if len(outs) > 1 else outs[0])

    A1 = layer_in @ p["head.W1"] + p["head.b1"]
    R = np.maximum(A1, 0.0)
    y = (R @ p["head.W2"])[..., 0] + p["head.b2"][0]
    cache = ForwardCache(id(model), model.version, single, X, layers, layer_in, A1, R)
    pred = y[:, 0] if single else np.ascontiguousarray(y.T)
    return pred, cache


def backward(model, cache, d_pred, input_grad=False):
    """Gradients of ``sum(d_pred * pred)`` for every parameter.

    Returns a dict keyed like ``model.params``; with ``input_grad`` it also
    carries ``"input"`` shaped like the forward input.
    """
    if cache.model_id != id(model) or cache.version != model.version:
        raise StaleCache("cache was produced by a different model state")
    cfg = model.config
    p = model.params
    d = cfg.fused_dim
    T, B = cache.X.shape[:2]
    dy = np.asarray(d_pred, dtype=np.float64)
    dy = dy[:, None] if cache.single else dy.T
    if dy.shape != (T, B):
        raise ShapeMismatch(f"d_pred shape does not match forward output ({T} steps x {B})")

    g = {}
    h = cfg.head_hidden
    g["head.W2"] = cache.R.reshape(-1, h).T @ dy.reshape(-1, 1)
    g["head.b2"] = np.array([dy.sum()])
    dA1 = (dy[..., None] * p["head.W2"][:, 0]) * (cache.A1 > 0)
    g["head.W1"] = cache.top.reshape(-1, cfg.gru_out).T @ dA1.reshape(-1, h)
    g["head.b1"] = dA1.sum(axis=(0, 1))
    d_out = dA1 @ p["head.W1"].T

    gru_grads = {}
    for layer in range(cfg.rnn_layers - 1, -1, -1):
        layer_in, dirs = cache.layers[layer]
        d_in = np.zeros_like(layer_in)
        for k, (direction, dc) in enumerate(zip(cfg.directions, dirs)):
            pre = f"gru{layer}.{direction}."
            part = d_out[..., k * d:(k + 1) * d]
            dH = np.ascontiguousarray(part if direction == "fwd" else part[::-1])
            UT = np.ascontiguousarray(_stack(p, pre, ("U_r", "U_z", "U_n")).T)
            dP, dRec = _kernels.backward_scan(dH, dc.H, dc.G, UT)
            dU = dc.H[:-1].reshape(-1, d).T @ dRec.reshape(-1, 3 * d)
            dW = dc.inp.reshape(-1, dc.inp.shape[2]).T @ dP.reshape(-1, 3 * d)
            for i, gate in enumerate("rzn"):
                gru_grads[pre + "W_" + gate] = dW[:, i * d:(i + 1) * d]
                gru_grads[pre + "U_" + gate] = dU[:, i * d:(i + 1) * d]
            gru_grads[pre + "b_r"] = dP[..., :d].sum(axis=(0, 1))
            gru_grads[pre + "b_z"] = dP[..., d:2 * d].sum(axis=(0, 1))
            gru_grads[pre + "b_n"] = dRec[..., 2 * d:].sum(axis=(0, 1))
            dx = dP @ dc.W.T
            d_in += dx if direction == "fwd" else dx[::-1]
        d_out = d_in

    g["fusion.W"] = cache.X.reshape(-1, cfg.input_width).T @ d_out.reshape(-1, d)
    g["fusion.b"] = d_out.sum(axis=(0, 1))
    grads = {name: np.ascontiguousarray(g.get(name, gru_grads.get(name))) for name in p}
    if input_grad:
        dX = d_out @ p["fusion.W"].T
        grads["input"] = dX[:, 0, :] if cache.single else np.ascontiguousarray(dX.transpose(1, 0, 2))
    return grads


def predict(model, x):
    return forward(model, x)[0]

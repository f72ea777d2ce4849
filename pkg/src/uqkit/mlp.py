"""A small multilayer perceptron over a flat parameter vector.

Parameters live in one flat 64-bit vector with a fixed layer-major
layout: for each layer, the weight matrix (fan_in x fan_out, row-major)
followed by the bias vector. The forward pass accepts either a plain
ndarray or a tape variable; both run the identical numpy arithmetic, so
values agree bitwise and the taped path is differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .rng import Rng

ACTIVATIONS = ("tanh", "relu")


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int
    activation: str = "tanh"
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(self.hidden_widths))
        dims = (self.input_dim, *self.hidden_widths, self.output_dim)
        if any(d < 1 for d in dims):
            raise ValueError("all layer dimensions must be at least 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths, self.output_dim)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_widths": list(self.hidden_widths),
            "output_dim": self.output_dim,
            "activation": self.activation,
            "init_seed": self.init_seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "MlpConfig":
        return MlpConfig(
            input_dim=int(d["input_dim"]),
            hidden_widths=tuple(int(w) for w in d["hidden_widths"]),
            output_dim=int(d["output_dim"]),
            activation=str(d["activation"]),
            init_seed=int(d["init_seed"]),
        )


def param_count(cfg: MlpConfig) -> int:
    dims = cfg.dims
    return sum((dims[i] + 1) * dims[i + 1] for i in range(len(dims) - 1))


def init_params(cfg: MlpConfig) -> np.ndarray:
    """Seeded scaled-uniform fan-in initialization.

    Layer l weights are U(-a, a) with a = sqrt(6 / fan_in), drawn
    row-major from the child stream (init_seed, l); biases start at zero.
    """
    dims = cfg.dims
    theta = np.empty(param_count(cfg))
    offset = 0
    for layer in range(len(dims) - 1):
        fan_in, fan_out = dims[layer], dims[layer + 1]
        a = np.sqrt(6.0 / fan_in)
        stream = Rng(cfg.init_seed).child(layer)
        w = a * (2.0 * stream.uniforms(fan_in * fan_out) - 1.0)
        theta[offset : offset + fan_in * fan_out] = w
        offset += fan_in * fan_out
        theta[offset : offset + fan_out] = 0.0
        offset += fan_out
    return theta


def unpack_params(cfg: MlpConfig, theta):
    """Split a flat parameter vector (ndarray or Var) into (W, b) pairs."""
    dims = cfg.dims
    if np.shape(theta.value if isinstance(theta, ad.Var) else theta) != (
        param_count(cfg),
    ):
        raise ValueError(
            f"parameter vector has wrong length; expected {param_count(cfg)}"
        )
    layers = []
    offset = 0
    for layer in range(len(dims) - 1):
        fan_in, fan_out = dims[layer], dims[layer + 1]
        w = ad.reshape(
            ad.take_slice(theta, offset, offset + fan_in * fan_out),
            (fan_in, fan_out),
        )
        offset += fan_in * fan_out
        b = ad.take_slice(theta, offset, offset + fan_out)
        offset += fan_out
        layers.append((w, b))
    return layers


def mlp_forward(cfg: MlpConfig, theta, inputs: np.ndarray):
    """Forward pass producing the raw output matrix (n x output_dim).

    For classification the outputs are logits; for regression rows hold a
    (mean, log-variance) pair, so output_dim is 2.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != cfg.input_dim:
        raise ValueError(
            f"inputs must have shape (n, {cfg.input_dim}), got {inputs.shape}"
        )
    act = ad.tanh if cfg.activation == "tanh" else ad.relu
    h = inputs
    layers = unpack_params(cfg, theta)
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if i < len(layers) - 1:
            h = act(h)
    return h

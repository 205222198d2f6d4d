"""Squared-gradient-average optimizer and weight clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .tensor import Tensor

__all__ = ["OptimizerState", "rmsprop_step", "clip_weights"]

RMS_EPS = 1e-8


@dataclass
class OptimizerState:
    """Per-parameter accumulators for the squared-gradient moving average."""

    acc: dict
    step: int = 0

    @classmethod
    def for_params(cls, params: dict) -> "OptimizerState":
        return cls(acc={name: np.zeros_like(p.data) for name, p in params.items()})


def rmsprop_step(
    params: dict, state: OptimizerState, lr: float, decay: float = 0.9
) -> None:
    """acc = decay*acc + (1-decay)*g^2; p -= lr*g/sqrt(acc + eps), in place.

    Parameters whose .grad is None are treated as zero-gradient: their
    accumulator decays and their value stays put.
    """
    if lr <= 0.0:
        raise ConfigError(f"rmsprop_step: lr must be positive, got {lr}")
    if not 0.0 <= decay < 1.0:
        raise ConfigError(f"rmsprop_step: decay must be in [0, 1), got {decay}")
    for name, p in params.items():
        acc = state.acc[name]
        g = p.grad
        if g is None:
            acc *= decay
            continue
        if not np.all(np.isfinite(g)):
            raise NumericError(f"rmsprop_step: non-finite gradient for {name!r}")
        acc *= decay
        acc += (1.0 - decay) * g * g
        p.data -= lr * g / np.sqrt(acc + RMS_EPS)
    state.step += 1


def clip_weights(params, c: float) -> None:
    """Clamp every tensor into [-c, c] in place."""
    if c <= 0.0:
        raise ConfigError(f"clip_weights: c must be positive, got {c}")
    tensors = params.values() if isinstance(params, dict) else params
    for p in tensors:
        np.clip(p.data, -c, c, out=p.data)

"""Adam with decoupled weight decay, global-norm gradient clipping, and
telemetry over the moment buffers (l1 norm / max element of sqrt(v),
l1 norm of m).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GradientError
from .model import Parameters


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    decoupled_weight_decay: bool = True

    @classmethod
    def init(cls, params: Parameters, **hypers) -> "AdamState":
        m = {n: np.zeros_like(t.data) for n, t in params.tensors.items()}
        v = {n: np.zeros_like(t.data) for n, t in params.tensors.items()}
        return cls(m=m, v=v, **hypers)


@dataclass(frozen=True)
class VarianceStats:
    var_l1: float   # sum of |sqrt(v_i)| over all parameters
    var_max: float  # max element of sqrt(v)
    mom_l1: float   # sum of |m_i|


def clip_global_norm(
    grads: dict[str, np.ndarray], max_norm: float
) -> tuple[dict[str, np.ndarray], float, bool]:
    """Scale all gradients so the global l2 norm is at most max_norm.

    Returns (gradients, pre-clip norm, clipped flag). Direction is
    preserved; gradients are returned unchanged when under the limit.
    """
    if max_norm <= 0:
        raise ConfigError(f"max_norm must be > 0, got {max_norm}")
    sq = 0.0
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise GradientError(f"non-finite gradient in parameter {name!r}")
        sq += float(np.dot(g.ravel(), g.ravel()))
    pre_norm = math.sqrt(sq)
    if pre_norm <= max_norm:
        return grads, pre_norm, False
    factor = max_norm / pre_norm
    return {n: g * factor for n, g in grads.items()}, pre_norm, True


def adam_step(
    params: Parameters,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> None:
    """One bias-corrected Adam update, applied in place.

    Decoupled weight decay subtracts lr*wd*theta separately from the
    adaptive update (AdamW); the coupled variant adds wd*theta into the
    gradient instead.
    """
    if lr < 0:
        raise ConfigError(f"learning rate must be >= 0, got {lr}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, tensor in params.tensors.items():
        g = grads[name]
        if state.weight_decay and not state.decoupled_weight_decay:
            g = g + state.weight_decay * tensor.data
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        tensor.data -= lr * update
        if state.weight_decay and state.decoupled_weight_decay:
            tensor.data -= lr * state.weight_decay * tensor.data


def variance_stats(state: AdamState) -> VarianceStats:
    var_l1 = 0.0
    var_max = 0.0
    mom_l1 = 0.0
    for name in state.v:
        sqrt_v = np.sqrt(state.v[name])
        var_l1 += float(sqrt_v.sum())
        if sqrt_v.size:
            var_max = max(var_max, float(sqrt_v.max()))
        mom_l1 += float(np.abs(state.m[name]).sum())
    return VarianceStats(var_l1=var_l1, var_max=var_max, mom_l1=mom_l1)

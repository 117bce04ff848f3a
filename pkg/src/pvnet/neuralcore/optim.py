"""Adam with bias correction."""
from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from ..errors import DimensionError


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step_count: int = 0
    lr: float = 0.0015
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params, **hyper):
        state = cls(**hyper)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        return state


def adam_update(params, grads, state):
    """Apply one Adam step to ``params`` in place.

    Returns ``(params, state)`` for chaining.  Every parameter in ``params``
    must have a gradient of identical shape.
    """
    for name, p in params.items():
        g = grads.get(name)
        if g is None or g.shape != p.shape or state.m[name].shape != p.shape:
            raise DimensionError(f"gradient/state for {name!r} does not match parameter shape {p.shape}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    inv_sqrt_c2 = 1.0 / np.sqrt(c2)
    step = state.lr / c1
    for name, p in params.items():
        m, v = state.m[name], state.v[name]
        if any(not a.flags.c_contiguous or a.dtype != np.float64 for a in (p, m, v)):
            raise DimensionError(f"parameter and moments of {name!r} must be C-contiguous float64")
        g = np.ascontiguousarray(grads[name], dtype=np.float64)
        K.adam_step(p.reshape(-1), g.reshape(-1), m.reshape(-1), v.reshape(-1),
                    b1, b2, step, inv_sqrt_c2, state.epsilon)
    return params, state


from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def fresh(cls, model, lr=1e-3, **kw):
        return cls(lr=lr, m={k: np.zeros_like(p) for k, p in model.params.items()},
                   v={k: np.zeros_like(p) for k, p in model.params.items()}, **kw)


def adam_step(model, grads, state):
    """One bias-corrected Adam update, in place. Returns ``(model, state)``."""
    if not state.m:
        state.m = {k: np.zeros_like(p) for k, p in model.params.items()}
        state.v = {k: np.zeros_like(p) for k, p in model.params.items()}
    for name, p in model.params.items():
        g = grads.get(name)
        if g is None or g.shape != p.shape or state.m[name].shape != p.shape:
            raise ShapeMismatch(f"gradient/state for {name} does not match parameter shape {p.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in model.params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    model.bump()
    return model, state

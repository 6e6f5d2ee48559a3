"""Adam with lazy (row-sparse) updates for the object table."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch
from .model import RowGrad


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def moments(self, name: str, like: np.ndarray):
        if name not in self.m:
            self.m[name] = np.zeros_like(like)
            self.v[name] = np.zeros_like(like)
        elif self.m[name].shape[0] < like.shape[0] and like.ndim == 2:
            # table grew since the last step
            pad = np.zeros((like.shape[0] - self.m[name].shape[0], like.shape[1]))
            self.m[name] = np.vstack([self.m[name], pad])
            self.v[name] = np.vstack([self.v[name], pad])
        return self.m[name], self.v[name]


CHUNK = 1 << 15  # elements per block; keeps the temporaries cache-resident


def _dense_update(p, g, m, v, b1, b2, step_size, denom_scale, eps):
    """Adam update over flat views, processed in blocks."""
    p, g, m, v = p.reshape(-1), g.reshape(-1), m.reshape(-1), v.reshape(-1)
    buf = np.empty(min(CHUNK, p.size))
    for lo in range(0, p.size, CHUNK):
        sl = slice(lo, lo + CHUNK)
        gs, ms, vs = g[sl], m[sl], v[sl]
        t = buf[: gs.size]
        ms *= b1
        np.multiply(gs, 1 - b1, out=t)
        ms += t
        vs *= b2
        np.multiply(gs, gs, out=t)
        t *= 1 - b2
        vs += t
        np.sqrt(vs, out=t)
        t *= denom_scale
        t += eps
        np.divide(ms, t, out=t)
        t *= step_size
        p[sl] -= t


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> None:
    """In-place bias-corrected Adam update.

    A :class:`RowGrad` only touches its rows (moments included); rows outside
    the batch keep their parameters and moments unchanged.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name in sorted(grads):
        g = grads[name]
        p = params[name]
        m, v = state.moments(name, p)
        if isinstance(g, RowGrad):
            if g.values.shape != (len(g.rows),) + p.shape[1:]:
                raise ShapeMismatch(f"{name}: row grad {g.values.shape} vs table {p.shape}")
            rows = g.rows
            m[rows] = b1 * m[rows] + (1 - b1) * g.values
            v[rows] = b2 * v[rows] + (1 - b2) * g.values**2
            p[rows] -= lr * (m[rows] / c1) / (np.sqrt(v[rows] / c2) + state.eps)
        else:
            if g.shape != p.shape:
                raise ShapeMismatch(f"{name}: grad {g.shape} vs param {p.shape}")
            # m_hat / (sqrt(v_hat) + eps) with the bias corrections folded in
            _dense_update(p, np.ascontiguousarray(g, dtype=np.float64), m, v, b1, b2, lr / c1, 1 / np.sqrt(c2), state.eps)

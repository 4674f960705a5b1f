"""Decoupled-weight-decay adaptive moment optimizer (AdamW).

Bias-corrected first/second moments; the decay term is applied directly
to the parameter (never through the moments) and is skipped for all 1-D
parameters (normalization gains/biases, biases, mixing weights).
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class AdamW:
    def __init__(self, params: dict, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.01):
        self.params = dict(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def _decays(self, name: str, p: Tensor) -> bool:
        return p.data.ndim > 1

    def step(self, lr: float):
        """Apply one update from each parameter's .grad (missing grad = 0)."""
        self.t += 1
        b1, b2 = np.float32(self.beta1), np.float32(self.beta2)
        c1 = np.float32(1.0 / (1.0 - self.beta1 ** self.t))
        c2 = np.float32(1.0 / (1.0 - self.beta2 ** self.t))
        lr32 = np.float32(lr)
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * np.square(g)
            update = (m * c1) / (np.sqrt(v * c2) + np.float32(self.eps))
            if self.weight_decay and self._decays(name, p):
                update = update + np.float32(self.weight_decay) * p.data
            p.data -= lr32 * update

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_arrays(self) -> dict:
        out = {}
        for name in self.params:
            out[f"{name}.m"] = self.m[name]
            out[f"{name}.v"] = self.v[name]
        return out

    def load_state(self, arrays: dict, t: int):
        for name in self.params:
            self.m[name] = np.array(arrays[f"{name}.m"], np.float32)
            self.v[name] = np.array(arrays[f"{name}.v"], np.float32)
        self.t = int(t)

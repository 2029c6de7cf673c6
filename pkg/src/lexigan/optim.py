"""Adam and RMSProp parameter updates.

Both optimizers own per-parameter accumulators whose shapes mirror the
parameters exactly, and a step counter that increments once per update
call. Learning rate defaults to 1e-4 everywhere.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import ValidationError


class Adam:
    kind = "adam"

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params.items()}

    def step(self, grad_scale: float = 1.0) -> None:
        """Apply one bias-corrected Adam update from the stored .grad buffers.

        `grad_scale` multiplies every gradient before it enters the moment
        estimates (used to weight the information loss on the generator).
        Parameters with a missing grad are treated as zero-gradient.
        """
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ValidationError(
                    f"adam: grad shape {g.shape} != param {name} shape {p.data.shape}"
                )
            g = g * grad_scale
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


class RMSProp:
    kind = "rmsprop"

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-4,
                 decay: float = 0.9, eps: float = 1e-10):
        self.params = dict(params)
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.t = 0
        self.v = {n: np.zeros_like(p.data) for n, p in self.params.items()}

    def step(self, grad_scale: float = 1.0) -> None:
        """v <- decay*v + (1-decay)*g^2; p <- p - lr*g/sqrt(v+eps)."""
        self.t += 1
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ValidationError(
                    f"rmsprop: grad shape {g.shape} != param {name} shape {p.data.shape}"
                )
            g = g * grad_scale
            v = self.v[name]
            v *= self.decay
            v += (1.0 - self.decay) * g * g
            p.data -= self.lr * g / np.sqrt(v + self.eps)

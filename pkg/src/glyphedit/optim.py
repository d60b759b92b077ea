"""Adam optimizer over named parameter tensors."""
from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class Adam:
    """Standard Adam. Defaults follow the training recipe: lr 2e-4, beta1 0.5."""

    def __init__(self, params: dict[str, Tensor], alpha: float = 2e-4,
                 beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.alpha = alpha
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            p.data -= self.alpha * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

    def state_tensors(self, prefix: str = "opt/") -> dict[str, np.ndarray]:
        """Optimizer state as named arrays for checkpointing."""
        out = {f"{prefix}t": np.asarray([float(self.t)], dtype=np.float64)}
        for name in self.params:
            out[f"{prefix}m/{name}"] = self.m[name]
            out[f"{prefix}v/{name}"] = self.v[name]
        return out

    def load_state_tensors(self, arrays: dict[str, np.ndarray], prefix: str = "opt/") -> None:
        self.t = int(arrays[f"{prefix}t"][0])
        for name in self.params:
            self.m[name] = arrays[f"{prefix}m/{name}"].astype(self.m[name].dtype).copy()
            self.v[name] = arrays[f"{prefix}v/{name}"].astype(self.v[name].dtype).copy()

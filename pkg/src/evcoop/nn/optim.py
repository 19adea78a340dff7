"""Adam optimizer over named parameter dicts."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class DivergenceError(RuntimeError):
    """Raised when a parameter or gradient stops being finite."""


class Adam:
    """Standard Adam with bias correction.

    ``params`` is a flat name -> Tensor dict; first and second moments are
    kept per name so the same optimizer instance survives checkpoint
    round-trips as long as parameter names and shapes are stable.
    """

    def __init__(self, params: dict[str, Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        """Apply one update from the accumulated gradients.

        Parameters with no gradient this round are left untouched (their
        moment buffers also stay put, so a frozen branch costs nothing).
        """
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise DivergenceError(f"non-finite gradient in {name}")
            m = self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
            if not np.all(np.isfinite(p.data)):
                raise DivergenceError(f"non-finite parameter {name} after update")

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Moment buffers and step count, flat and np.savez-friendly."""
        out: dict[str, np.ndarray] = {"adam.t": np.array(self.t)}
        for k in self.params:
            out[f"adam.m.{k}"] = self.m[k]
            out[f"adam.v.{k}"] = self.v[k]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.t = int(arrays["adam.t"])
        for k in self.params:
            m, v = arrays[f"adam.m.{k}"], arrays[f"adam.v.{k}"]
            if m.shape != self.m[k].shape or v.shape != self.v[k].shape:
                raise ValueError(f"optimizer state shape mismatch for {k}")
            self.m[k] = m.astype(np.float64)
            self.v[k] = v.astype(np.float64)

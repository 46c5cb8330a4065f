"""Adam optimizer with decoupled weight decay."""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter


class Adam:
    """Standard Adam with bias correction.

    Weight decay is decoupled: p <- p - lr*wd*p is applied before the Adam
    delta, independent of the moment estimates.
    """

    def __init__(self, params: list[Parameter], lr=1e-4, beta1=0.9, beta2=0.999,
                 eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names in optimizer")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p in self.params:
            g = p.grad
            if g is None:
                continue
            if self.weight_decay:
                p.data -= (self.lr * self.weight_decay) * p.data
            m = self.m[p.name]
            v = self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Moment buffers and step counter, for checkpointing."""
        out = {}
        for p in self.params:
            out[f"opt.m.{p.name}"] = self.m[p.name]
            out[f"opt.v.{p.name}"] = self.v[p.name]
        out["opt.step"] = np.array([self.step_count], dtype=np.int64)
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        for p in self.params:
            for prefix, store in (("opt.m.", self.m), ("opt.v.", self.v)):
                key = prefix + p.name
                if key not in arrays:
                    raise KeyError(f"optimizer state missing {key}")
                blob = arrays[key]
                if blob.shape != p.data.shape:
                    raise ValueError(
                        f"optimizer state {key}: shape {blob.shape} != parameter {p.data.shape}"
                    )
                store[p.name] = blob.astype(p.data.dtype, copy=True)
        self.step_count = int(arrays["opt.step"][0])

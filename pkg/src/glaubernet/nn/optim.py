"""Adam with the standard bias-corrected moment estimates."""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self._scratch: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray],
             grads: dict[str, np.ndarray]) -> None:
        """One in-place update of every parameter tensor."""
        if set(grads) != set(params):
            raise ValueError("gradient names do not match parameters")
        self.t += 1
        # theta -= lr * m_hat / (sqrt(v_hat) + eps), with m_hat = m/(1-b1^t)
        # and v_hat = v/(1-b2^t); the corrections fold into scalars.
        lr_t = self.lr / (1.0 - self.beta1 ** self.t)
        v_corr = 1.0 / np.sqrt(1.0 - self.beta2 ** self.t)
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape mismatch for {name}")
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for {name}")
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
                self._scratch[name] = np.empty_like(p)
            m, v, s = self.m[name], self.v[name], self._scratch[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            np.sqrt(v, out=s)
            s *= v_corr
            s += self.eps
            np.divide(m, s, out=s)
            s *= lr_t
            p -= s

    def state(self) -> dict:
        """Moment tensors and step counter, for exact checkpoint resume."""
        return {"t": self.t, "m": self.m, "v": self.v,
                "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps}

    @classmethod
    def from_state(cls, state: dict) -> "Adam":
        opt = cls(lr=state["lr"], beta1=state["beta1"],
                  beta2=state["beta2"], eps=state["eps"])
        opt.t = state["t"]
        opt.m = {k: np.array(a) for k, a in state["m"].items()}
        opt.v = {k: np.array(a) for k, a in state["v"].items()}
        for k, a in opt.m.items():
            opt._scratch[k] = np.empty_like(a)
        return opt

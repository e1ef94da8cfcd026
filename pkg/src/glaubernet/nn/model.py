"""CNN model: architecture descriptor, parameter container, forward/backward.

The model maps a (L, M) momentum record, treated as a one-channel image, to
K = L(L-1)/2 two-way probability heads, one per candidate connection.
"""

from __future__ import annotations

import numpy as np

from ..dynamics import num_pairs
from .layers import Conv2d, Dense, Flatten, MaxPool, ReLU
from .loss import nll_grad_logits, softmax_heads


def default_architecture() -> list[dict]:
    """Feature stack used unless a run overrides it; the K-head output
    dense layer is appended automatically when the model is built."""
    return [
        {"op": "conv2d", "kernel": [3, 3], "channels": 16},
        {"op": "relu"},
        {"op": "conv2d", "kernel": [3, 3], "channels": 32},
        {"op": "relu"},
        {"op": "maxpool", "pool": [1, 2]},
        {"op": "conv2d", "kernel": [3, 3], "channels": 64},
        {"op": "relu"},
        {"op": "flatten"},
        {"op": "dense", "width": 256},
        {"op": "relu"},
    ]


class Model:
    """Layered CNN with named parameters and (N, K, 2) softmax-head output."""

    def __init__(self, L: int, M: int, architecture: list[dict] | None = None,
                 seed: int = 0, dtype=np.float32):
        if L < 2 or M < 1:
            raise ValueError("need L >= 2 and M >= 1")
        self.L, self.M = L, M
        self.K = num_pairs(L)
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.architecture = (default_architecture() if architecture is None
                             else [dict(spec) for spec in architecture])
        self.layers = self._build(self.architecture)
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            if hasattr(layer, "init_params"):
                layer.init_params(rng, self.dtype)

    def _build(self, arch):
        layers = []
        h, w, c = self.L, self.M, 1
        counts: dict[str, int] = {}

        def tag(op):
            counts[op] = counts.get(op, 0) + 1
            return f"{op}{counts[op]}"

        flat = None
        for spec in arch:
            op = spec["op"]
            if op == "conv2d":
                layers.append(Conv2d(tag("conv"), c, spec["channels"],
                                     kernel=tuple(spec["kernel"])))
                c = spec["channels"]
            elif op == "relu":
                layers.append(ReLU(tag("relu")))
            elif op == "maxpool":
                ph, pw = spec["pool"]
                layers.append(MaxPool(tag("pool"), pool=(ph, pw)))
                h, w = h // ph, w // pw
                if h < 1 or w < 1:
                    raise ValueError("pooling exhausted the spatial extent")
            elif op == "flatten":
                layers.append(Flatten(tag("flatten")))
                flat = h * w * c
            elif op == "dense":
                if flat is None:
                    raise ValueError("dense requires a preceding flatten")
                layers.append(Dense(tag("dense"), flat, spec["width"]))
                flat = spec["width"]
            else:
                raise ValueError(f"unknown layer op {op!r}")
        if flat is None:
            raise ValueError("architecture must end in flatten/dense stages")
        layers.append(Dense("head", flat, 2 * self.K, head=True))
        return layers

    # -- parameter access ---------------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for layer in self.layers:
            for pname, arr in layer.params.items():
                out[f"{layer.name}.{pname}"] = arr
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for layer in self.layers:
            for pname, arr in layer.grads.items():
                out[f"{layer.name}.{pname}"] = arr
        return out

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        own = self.params()
        if set(values) != set(own):
            raise ValueError("parameter names do not match this architecture")
        for name, arr in values.items():
            if arr.shape != own[name].shape:
                raise ValueError(f"shape mismatch for {name}")
            own[name][...] = arr

    def num_params(self) -> int:
        return sum(a.size for a in self.params().values())

    # -- forward / backward -------------------------------------------------

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1:] != (self.L, self.M):
            raise ValueError(
                f"input shape {x.shape} does not match (L, M)=({self.L}, {self.M})")
        return x

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """(N, L, M) batch (or a single (L, M) record) -> (N, K, 2) heads."""
        single = np.asarray(x).ndim == 2
        a = self._check_input(x)[..., None]
        for layer in self.layers:
            a = layer.forward(a, train)
        probs = softmax_heads(a.reshape(a.shape[0], self.K, 2))
        if not np.all(np.isfinite(probs)):
            raise FloatingPointError("non-finite activations in forward pass")
        if train:
            self._probs = probs
        return probs[0] if single else probs

    def backward(self, labels: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of the mean NLL wrt every parameter; needs a prior
        forward(..., train=True) on the same batch."""
        probs = getattr(self, "_probs", None)
        if probs is None:
            raise RuntimeError("backward requires forward(train=True) first")
        labels = np.asarray(labels)
        if labels.shape != probs.shape[:2]:
            raise ValueError(f"labels shape {labels.shape} does not match batch")
        d = nll_grad_logits(probs, labels).astype(self.dtype)
        d = d.reshape(d.shape[0], 2 * self.K)
        for layer in reversed(self.layers):
            d = layer.backward(d)
        grads = self.grads()
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient in {name}")
        return grads


def forward(model: Model, instance) -> np.ndarray:
    """Probability heads (K, 2) for one evolution instance."""
    data = instance.data if hasattr(instance, "data") else instance
    return model.forward(np.asarray(data))

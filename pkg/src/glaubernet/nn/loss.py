"""Per-connection two-way softmax heads and the mean negative-log loss."""

from __future__ import annotations

import numpy as np

# Probabilities are clamped to this floor inside the log so a saturated
# wrong head costs ~27.6 nats instead of infinity.
PROB_FLOOR = 1e-12


def softmax_heads(logits: np.ndarray) -> np.ndarray:
    """(..., K, 2) logits -> per-head probabilities summing to 1."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def head_entropy(probs: np.ndarray) -> np.ndarray:
    """Shannon entropy -sum p ln p of each head; in [0, ln 2]."""
    p = np.clip(probs, PROB_FLOOR, 1.0)
    plogp = np.where(probs > 0, p * np.log(p), 0.0)
    return -plogp.sum(axis=-1)


def _selected(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if probs.ndim == 2:
        probs = probs[None]
        labels = labels[None]
    N, K, two = probs.shape
    if two != 2 or labels.shape != (N, K):
        raise ValueError(f"shape mismatch: probs {probs.shape}, labels {labels.shape}")
    return probs[np.arange(N)[:, None], np.arange(K)[None, :], labels.astype(np.intp)]


def nll_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean over all N*K head/label pairs of -log p(true bit)."""
    sel = _selected(probs, labels)
    return float(-np.log(np.clip(sel, PROB_FLOOR, 1.0)).mean(dtype=np.float64))


def nll_grad_logits(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d(nll_loss)/d(logits), shape (N, K, 2): (p - onehot) / (N*K)."""
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    single = probs.ndim == 2
    if single:
        probs = probs[None]
        labels = labels[None]
    N, K, _ = probs.shape
    d = probs.copy()
    d[np.arange(N)[:, None], np.arange(K)[None, :], labels.astype(np.intp)] -= 1.0
    d /= N * K
    return d[0] if single else d

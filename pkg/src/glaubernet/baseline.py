"""Statistical comparison reconstructor: thresholded time-lagged correlation.

The generative update couples s_j at step m to s_i at step m+1, so the
matched statistic is the lag-1 Pearson correlation between node series,
pooled over however many instances are supplied.  Reconstruction keeps the
E highest-scoring pairs, consuming the known edge budget (an advantage the
network is never given).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import AdjacencyMatrix, EvolutionInstance, num_pairs, pair_list


@dataclass
class CorrelationProfile:
    L: int
    lag: int
    scores: np.ndarray      # (K,) in [0, 1]
    degenerate: np.ndarray  # (K,) True where a constant series forced 0

    @property
    def K(self) -> int:
        return num_pairs(self.L)


def _stack(instances) -> np.ndarray:
    mats = []
    shape = None
    for inst in instances:
        data = inst.data if isinstance(inst, EvolutionInstance) else np.asarray(inst)
        if data.ndim != 2:
            raise ValueError("instances must be (L, M) matrices")
        if shape is None:
            shape = data.shape
        elif data.shape != shape:
            raise ValueError(f"instances disagree on shape: {data.shape} vs {shape}")
        mats.append(np.asarray(data, np.float64))
    if not mats:
        raise ValueError("need at least one instance")
    if shape[1] < 2:
        raise ValueError("need at least two time slices for a lagged score")
    return np.stack(mats)


def correlation_scores(instances, lag: int = 1) -> CorrelationProfile:
    """|Pearson| between node i at time m and node j at time m+lag,
    pooled over instances and symmetrized over (i, j)."""
    if lag not in (0, 1):
        raise ValueError("lag must be 0 or 1")
    data = _stack(instances)  # (n, L, M)
    n, L, M = data.shape
    # pooled source/target series per node
    src = np.concatenate([inst[:, :M - lag] for inst in data], axis=1)
    dst = np.concatenate([inst[:, lag:] for inst in data], axis=1)

    def standardize(A):
        A = A - A.mean(axis=1, keepdims=True)
        s = A.std(axis=1)
        live = s > 0
        A[live] /= s[live, None]
        return A, live

    src, src_live = standardize(src)
    dst, dst_live = standardize(dst)
    R = (src @ dst.T) / src.shape[1]

    K = num_pairs(L)
    scores = np.zeros(K)
    degenerate = np.zeros(K, dtype=bool)
    for k, (i, j) in enumerate(pair_list(L)):
        usable = src_live[i] and dst_live[j] and src_live[j] and dst_live[i]
        if not usable:
            degenerate[k] = True
            continue
        scores[k] = 0.5 * (abs(R[i, j]) + abs(R[j, i]))
    return CorrelationProfile(L=L, lag=lag, scores=scores, degenerate=degenerate)


def reconstruct_top_e(profile: CorrelationProfile, E: int) -> AdjacencyMatrix:
    """Predict the E best-scoring pairs as connected; ties keep the lower
    connection index."""
    K = profile.K
    if not (0 <= E <= K):
        raise ValueError(f"E={E} out of range (K={K})")
    order = np.lexsort((np.arange(K), -profile.scores))
    bits = np.zeros(K, dtype=np.uint8)
    bits[order[:E]] = 1
    return AdjacencyMatrix.from_bits(bits, profile.L)

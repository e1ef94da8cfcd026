"""Kinetic Ising lattices and their deterministic Glauber relaxation.

A system of L spins carries real-valued magnetic momenta s_i in [-1, 1].
Each discrete time step of size tau relaxes every momentum toward the
gain-weighted mean of its neighbours:

    s_i(t + tau) = s_i(t) + tau * (-s_i(t) + g(T)/deg(i) * sum_j A_ij s_j(t))

with A the symmetric binary adjacency matrix and g(T) a temperature gain.
Isolated nodes (deg = 0) relax freely: their coupling term is zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

GAIN_MODES = ("beta-form", "t-form")


def coupling_gain(T: float, mode: str = "beta-form") -> float:
    """Temperature gain of the neighbour-coupling term.

    "beta-form" is tanh(1/(2T)): the coupling weakens as T grows, so hot
    systems decay like independent spins.  "t-form" is the literal tanh(T/2),
    which instead saturates toward 1 at high T.  Both are in [0, 1).
    """
    if mode == "beta-form":
        return float(np.tanh(1.0 / (2.0 * T)))
    if mode == "t-form":
        return float(np.tanh(T / 2.0))
    raise ValueError(f"unknown gain mode {mode!r}; expected one of {GAIN_MODES}")


def num_pairs(L: int) -> int:
    """Number of candidate connections K = L(L-1)/2."""
    return L * (L - 1) // 2


def pair_list(L: int) -> list[tuple[int, int]]:
    """All unordered node pairs (i, j) with i < j, in lexicographic order.

    This ordering defines the global connection index k used everywhere:
    k=0 is (0,1), k=1 is (0,2), ..., k=K-1 is (L-2, L-1).
    """
    return [(i, j) for i in range(L) for j in range(i + 1, L)]


def pair_index(i: int, j: int, L: int) -> int:
    """Connection index k of the pair (i, j), i < j, under pair_list order."""
    if not (0 <= i < j < L):
        raise ValueError(f"need 0 <= i < j < L, got i={i} j={j} L={L}")
    return i * L - i * (i + 1) // 2 + (j - i - 1)


@dataclass(frozen=True)
class AdjacencyMatrix:
    """Symmetric binary connectivity of L nodes with zero diagonal.

    Edges are stored as a frozenset of (i, j) pairs with i < j; the symmetric
    counterpart (j, i) is implied.
    """

    L: int
    edges: frozenset[tuple[int, int]]
    lattice_id: Optional[str] = None

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be >= 1")
        for (i, j) in self.edges:
            if not (0 <= i < j < self.L):
                raise ValueError(f"edge ({i},{j}) not an upper pair for L={self.L}")
        if not isinstance(self.edges, frozenset):
            object.__setattr__(self, "edges", frozenset(self.edges))

    @property
    def E(self) -> int:
        return len(self.edges)

    def matrix(self) -> np.ndarray:
        """Dense (L, L) float64 matrix with A[i, j] = A[j, i] = 1 on edges."""
        A = np.zeros((self.L, self.L))
        for (i, j) in self.edges:
            A[i, j] = A[j, i] = 1.0
        return A

    def degrees(self) -> np.ndarray:
        return self.matrix().sum(axis=1)

    def bits(self) -> np.ndarray:
        """Length-K 0/1 vector over the global pair order."""
        q = np.zeros(num_pairs(self.L), dtype=np.uint8)
        for (i, j) in self.edges:
            q[pair_index(i, j, self.L)] = 1
        return q

    @classmethod
    def from_bits(cls, bits: Iterable[int], L: int,
                  lattice_id: Optional[str] = None) -> "AdjacencyMatrix":
        bits = np.asarray(list(bits), dtype=np.uint8)
        if bits.size != num_pairs(L):
            raise ValueError(f"expected {num_pairs(L)} bits for L={L}, got {bits.size}")
        pairs = pair_list(L)
        edges = frozenset(pairs[k] for k in np.flatnonzero(bits))
        return cls(L=L, edges=edges, lattice_id=lattice_id)


@dataclass(frozen=True)
class SimParams:
    """Evolution settings: temperature, step size, recorded slices, gain form."""

    T: float
    tau: float = 0.1
    M: int = 100
    gain_mode: str = "beta-form"

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not (0.0 < self.tau <= 1.0):
            raise ValueError("tau must lie in (0, 1]")
        # M=1 records only the initial slice; dynamics need M >= 2.
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.gain_mode not in GAIN_MODES:
            raise ValueError(f"gain_mode must be one of {GAIN_MODES}")

    @property
    def gain(self) -> float:
        return coupling_gain(self.T, self.gain_mode)

    @property
    def total_time(self) -> float:
        return (self.M - 1) * self.tau


@dataclass(frozen=True)
class EvolutionInstance:
    """One (L, M) record of momenta: column m holds the state at time m*tau."""

    data: np.ndarray
    params: SimParams
    lattice_id: Optional[str] = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError("instance data must be a 2-D (L, M) array")
        object.__setattr__(self, "data", data)

    @property
    def L(self) -> int:
        return self.data.shape[0]

    @property
    def M(self) -> int:
        return self.data.shape[1]


def _check_state(state: np.ndarray, adj: AdjacencyMatrix) -> np.ndarray:
    s = np.asarray(state, dtype=np.float64)
    if s.ndim != 1 or s.shape[0] != adj.L:
        raise ValueError(f"state length {s.shape} does not match L={adj.L}")
    if not np.all(np.isfinite(s)):
        raise ValueError("state contains non-finite values")
    return s


def glauber_step(state: np.ndarray, adj: AdjacencyMatrix,
                 params: SimParams) -> np.ndarray:
    """One discrete relaxation step; the input state is left untouched."""
    s = _check_state(state, adj)
    A = adj.matrix()
    deg = A.sum(axis=1)
    coupling = A @ s
    # Isolated nodes have no neighbour mean; they decay by (1 - tau) alone.
    np.divide(coupling, deg, out=coupling, where=deg > 0)
    coupling[deg == 0] = 0.0
    return s + params.tau * (-s + params.gain * coupling)


def evolve_instance(initial: np.ndarray, adj: AdjacencyMatrix,
                    params: SimParams) -> EvolutionInstance:
    """Record M slices of the relaxation started from a +-1 configuration."""
    s = _check_state(initial, adj)
    if not np.all(np.abs(s) == 1.0):
        raise ValueError("initial state entries must all be -1 or +1")
    data = np.empty((adj.L, params.M), dtype=np.float64)
    data[:, 0] = s
    A = adj.matrix()
    deg = A.sum(axis=1)
    safe_deg = np.where(deg > 0, deg, 1.0)
    g = params.gain
    for m in range(1, params.M):
        coupling = (A @ s) / safe_deg
        coupling[deg == 0] = 0.0
        s = s + params.tau * (-s + g * coupling)
        data[:, m] = s
    return EvolutionInstance(data=data, params=params, lattice_id=adj.lattice_id)


def random_lattice(L: int, E: int, rng: np.random.Generator,
                   lattice_id: Optional[str] = None) -> AdjacencyMatrix:
    """Uniformly sample an E-edge lattice out of the K possible connections."""
    K = num_pairs(L)
    if not (0 <= E <= K):
        raise ValueError(f"E={E} out of range for L={L} (K={K})")
    pairs = pair_list(L)
    chosen = rng.choice(K, size=E, replace=False)
    edges = frozenset(pairs[k] for k in sorted(chosen))
    return AdjacencyMatrix(L=L, edges=edges, lattice_id=lattice_id)


def random_initial(L: int, rng: np.random.Generator) -> np.ndarray:
    """Independent +-1 entries, each sign with probability 1/2."""
    if L < 1:
        raise ValueError("L must be >= 1")
    return rng.integers(0, 2, size=L).astype(np.float64) * 2.0 - 1.0

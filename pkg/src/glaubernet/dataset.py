"""Dataset construction and on-disk format.

A dataset couples evolution instances to the lattices that generated them,
under the sampling protocol used throughout:

  * train and test instances come from the same lattices, with the initial
    states of the two splits disjoint per lattice;
  * generalization instances come from freshly drawn lattices whose edge
    sets differ from every training lattice.

Files carry a human-readable header (see textheader), then a lattice table
and the instance records as little-endian float32, row-major (L, M).
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .dynamics import (AdjacencyMatrix, EvolutionInstance, SimParams,
                       evolve_instance, num_pairs, random_lattice)
from .textheader import FormatError, read_block, sha256_hex, write_block

SPLIT_TAGS = ("train", "test", "generalization")
_TAG_BYTE = {"train": b"t", "test": b"s", "generalization": b"g"}
_BYTE_TAG = {v: k for k, v in _TAG_BYTE.items()}

_FORMAT = "glaubernet-dataset"
_VERSION = 1
_LATTICE_RETRIES = 1000


@dataclass(frozen=True)
class DatasetSpec:
    """Sampling plan for one dataset family (train/test/generalization)."""

    L: int
    E: int
    N_L: int
    sim: SimParams
    seed: int
    N_train: Optional[int] = None
    n_train: Optional[int] = None
    N_test: int = 0
    N_L_gen: int = 0
    N_gen: Optional[int] = None

    def __post_init__(self):
        if self.L < 1 or self.N_L < 1:
            raise ValueError("L and N_L must be >= 1")
        if not (0 <= self.E <= num_pairs(self.L)):
            raise ValueError(f"E={self.E} out of range for L={self.L}")
        if self.N_train is None and self.n_train is None:
            raise ValueError("one of N_train or n_train is required")
        if self.n_train is not None:
            derived = self.n_train * self.N_L
            if self.N_train is not None and self.N_train != derived:
                raise ValueError("N_train and n_train disagree")
            object.__setattr__(self, "N_train", derived)
        if self.N_train < 1:
            raise ValueError("N_train must be >= 1")
        if self.N_train > self.N_L * 2 ** self.L:
            raise ValueError("N_train exceeds the number of distinct instances")
        if self.N_test < 0 or self.N_L_gen < 0:
            raise ValueError("counts must be non-negative")
        if self.N_gen is None:
            # Size the generalization split like the test split by default.
            object.__setattr__(self, "N_gen",
                               self.N_test if self.N_L_gen > 0 else 0)
        if self.N_gen > 0 and self.N_L_gen == 0:
            raise ValueError("N_gen > 0 requires N_L_gen >= 1")


@dataclass(frozen=True)
class LabeledInstance:
    """An evolution instance paired with its generating lattice."""

    instance: EvolutionInstance
    label: AdjacencyMatrix
    split: str

    def __post_init__(self):
        if self.split not in SPLIT_TAGS:
            raise ValueError(f"split must be one of {SPLIT_TAGS}")
        if self.instance.lattice_id != self.label.lattice_id:
            raise ValueError("instance and label lattice ids disagree")
        if self.instance.L != self.label.L:
            raise ValueError("instance and label disagree on L")


@dataclass
class Dataset:
    spec: DatasetSpec
    items: list[LabeledInstance] = field(default_factory=list)

    def split(self, tag: str) -> "Dataset":
        return Dataset(self.spec, [it for it in self.items if it.split == tag])

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(n, L, M) float32 inputs and (n, K) uint8 connection labels."""
        if not self.items:
            K = num_pairs(self.spec.L)
            return (np.zeros((0, self.spec.L, self.spec.sim.M), np.float32),
                    np.zeros((0, K), np.uint8))
        X = np.stack([it.instance.data for it in self.items]).astype(np.float32)
        Y = np.stack([it.label.bits() for it in self.items])
        return X, Y


def _balanced_counts(total: int, groups: int) -> list[int]:
    base, extra = divmod(total, groups)
    return [base + 1 if g < extra else base for g in range(groups)]


def _distinct_initials(L: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """n distinct +-1 configurations as an (n, L) array, bit i -> node i."""
    space = 2 ** L
    if n > space:
        raise ValueError(f"cannot draw {n} distinct initial states from 2^{L}")
    if space <= 1 << 20:
        codes = rng.permutation(space)[:n]
    else:
        seen: set[int] = set()
        while len(seen) < n:
            for c in rng.integers(0, space, size=n - len(seen)).tolist():
                seen.add(c)
        codes = np.fromiter(sorted(seen), dtype=np.int64)
        codes = codes[rng.permutation(n)]
    bits = (codes[:, None] >> np.arange(L)[None, :]) & 1
    return bits.astype(np.float64) * 2.0 - 1.0


def _fresh_lattice(spec: DatasetSpec, rng: np.random.Generator,
                   taken: set[frozenset], lattice_id: str) -> AdjacencyMatrix:
    for _ in range(_LATTICE_RETRIES):
        adj = random_lattice(spec.L, spec.E, rng, lattice_id=lattice_id)
        if adj.edges not in taken:
            taken.add(adj.edges)
            return adj
    raise RuntimeError(f"could not draw a fresh lattice in {_LATTICE_RETRIES} tries")


def build_splits(spec: DatasetSpec,
                 rng: Optional[np.random.Generator] = None) -> list[LabeledInstance]:
    """Generate every labeled instance of the train/test/generalization plan.

    Per training lattice, the train and test initial states are drawn
    together without replacement, so the two splits never share a state.
    Generalization lattices are redrawn until distinct (as edge sets) from
    all training lattices.  Deterministic given spec.seed (or the rng).
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    taken: set[frozenset] = set()
    train_lats = [_fresh_lattice(spec, rng, taken, f"train-{i:04d}")
                  for i in range(spec.N_L)]
    gen_lats = [_fresh_lattice(spec, rng, taken, f"gen-{i:04d}")
                for i in range(spec.N_L_gen)]

    n_train = _balanced_counts(spec.N_train, spec.N_L)
    n_test = _balanced_counts(spec.N_test, spec.N_L)
    n_gen = _balanced_counts(spec.N_gen, spec.N_L_gen) if spec.N_L_gen else []

    items: list[LabeledInstance] = []

    def emit(adj, initials, split):
        for s0 in initials:
            inst = evolve_instance(s0, adj, spec.sim)
            inst = EvolutionInstance(inst.data.astype(np.float32),
                                     inst.params, inst.lattice_id)
            items.append(LabeledInstance(inst, adj, split))

    for li, adj in enumerate(train_lats):
        states = _distinct_initials(spec.L, n_train[li] + n_test[li], rng)
        emit(adj, states[:n_train[li]], "train")
        emit(adj, states[n_train[li]:], "test")
    for li, adj in enumerate(gen_lats):
        emit(adj, _distinct_initials(spec.L, n_gen[li], rng), "generalization")
    return items


# ---------------------------------------------------------------------------
# serialization

def _spec_fields(spec: DatasetSpec) -> dict:
    return {
        "L": spec.L, "E": spec.E, "N_L": spec.N_L,
        "N_train": spec.N_train,
        "n_train": "none" if spec.n_train is None else spec.n_train,
        "N_test": spec.N_test, "N_L_gen": spec.N_L_gen, "N_gen": spec.N_gen,
        "T": repr(spec.sim.T), "tau": repr(spec.sim.tau), "M": spec.sim.M,
        "gain_mode": spec.sim.gain_mode, "seed": spec.seed,
    }


def _spec_from_fields(f: dict) -> DatasetSpec:
    sim = SimParams(T=float(f["T"]), tau=float(f["tau"]), M=int(f["M"]),
                    gain_mode=f["gain_mode"])
    return DatasetSpec(
        L=int(f["L"]), E=int(f["E"]), N_L=int(f["N_L"]), sim=sim,
        seed=int(f["seed"]), N_train=int(f["N_train"]),
        n_train=None if f["n_train"] == "none" else int(f["n_train"]),
        N_test=int(f["N_test"]), N_L_gen=int(f["N_L_gen"]),
        N_gen=int(f["N_gen"]))


def _payload(dataset: Dataset) -> bytes:
    spec = dataset.spec
    K = num_pairs(spec.L)
    lat_ids: list[str] = []
    lat_index: dict[str, int] = {}
    lat_bits: list[np.ndarray] = []
    for it in dataset.items:
        lid = it.label.lattice_id
        if lid is None:
            raise ValueError("labels need a lattice_id to be saved")
        if lid in lat_index:
            if not np.array_equal(lat_bits[lat_index[lid]], it.label.bits()):
                raise ValueError(f"lattice id {lid!r} maps to two edge sets")
        else:
            lat_index[lid] = len(lat_ids)
            lat_ids.append(lid)
            lat_bits.append(it.label.bits())

    buf = io.BytesIO()
    buf.write(struct.pack("<I", len(lat_ids)))
    for lid, bits in zip(lat_ids, lat_bits):
        raw = lid.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(np.packbits(bits).tobytes())
    for it in dataset.items:
        data = np.ascontiguousarray(it.instance.data, dtype="<f4")
        if data.shape != (spec.L, spec.sim.M):
            raise ValueError(f"instance shape {data.shape} does not match spec")
        buf.write(_TAG_BYTE[it.split])
        buf.write(struct.pack("<I", lat_index[it.label.lattice_id]))
        buf.write(data.tobytes())
    return buf.getvalue()


def save_dataset(path, dataset: Dataset) -> None:
    """Write the dataset; load_dataset(save_dataset(x)) is bit-exact."""
    payload = _payload(dataset)
    fields = _spec_fields(dataset.spec)
    fields["count"] = len(dataset.items)
    fields["checksum"] = sha256_hex(payload)
    with open(path, "wb") as fh:
        write_block(fh, _FORMAT, _VERSION, fields)
        fh.write(payload)


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        fields = read_block(fh, _FORMAT, _VERSION)
        payload = fh.read()
    if sha256_hex(payload) != fields.get("checksum"):
        raise FormatError(f"checksum mismatch in {path}")
    spec = _spec_from_fields(fields)
    count = int(fields["count"])
    K = num_pairs(spec.L)
    nbytes_bits = (K + 7) // 8
    buf = io.BytesIO(payload)

    def take(n: int) -> bytes:
        raw = buf.read(n)
        if len(raw) != n:
            raise FormatError(f"truncated payload in {path}")
        return raw

    (n_lat,) = struct.unpack("<I", take(4))
    lattices: list[AdjacencyMatrix] = []
    for _ in range(n_lat):
        (ln,) = struct.unpack("<H", take(2))
        lid = take(ln).decode("utf-8")
        bits = np.unpackbits(np.frombuffer(take(nbytes_bits), np.uint8))[:K]
        lattices.append(AdjacencyMatrix.from_bits(bits, spec.L, lattice_id=lid))

    items: list[LabeledInstance] = []
    rec_bytes = spec.L * spec.sim.M * 4
    for _ in range(count):
        tag = _BYTE_TAG.get(take(1))
        if tag is None:
            raise FormatError(f"bad split tag in {path}")
        (li,) = struct.unpack("<I", take(4))
        if li >= n_lat:
            raise FormatError(f"lattice index out of range in {path}")
        data = np.frombuffer(take(rec_bytes), dtype="<f4")
        data = data.reshape(spec.L, spec.sim.M).copy()
        inst = EvolutionInstance(data, spec.sim, lattices[li].lattice_id)
        items.append(LabeledInstance(inst, lattices[li], tag))
    if buf.read(1):
        raise FormatError(f"trailing bytes in {path}")
    return Dataset(spec, items)

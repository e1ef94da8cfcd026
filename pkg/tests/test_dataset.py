import numpy as np
import pytest

from glaubernet.dataset import (Dataset, DatasetSpec, LabeledInstance,
                                build_splits, load_dataset, save_dataset,
                                _balanced_counts)
from glaubernet.dynamics import SimParams
from glaubernet.textheader import FormatError


def make_spec(**kw):
    base = dict(L=6, E=5, N_L=3, sim=SimParams(T=0.5, tau=0.1, M=12), seed=42,
                n_train=8, N_test=6, N_L_gen=2, N_gen=4)
    base.update(kw)
    if base["N_L_gen"] == 0:
        base["N_gen"] = None
    return DatasetSpec(**base)


def by_split(items):
    out = {"train": [], "test": [], "generalization": []}
    for it in items:
        out[it.split].append(it)
    return out


class TestSpec:
    def test_n_train_derivation(self):
        spec = make_spec(n_train=8)
        assert spec.N_train == 24

    def test_conflicting_counts(self):
        with pytest.raises(ValueError):
            make_spec(n_train=8, N_train=10)

    def test_requires_some_count(self):
        with pytest.raises(ValueError):
            make_spec(n_train=None, N_train=None)

    def test_train_budget_bound(self):
        # 3 lattices x 2^3 = 24 distinct instances at most
        with pytest.raises(ValueError):
            make_spec(L=3, E=2, n_train=None, N_train=25, N_test=0)

    def test_paper_scale_balance(self):
        assert _balanced_counts(25000, 10) == [2500] * 10
        counts = _balanced_counts(25001, 10)
        assert sum(counts) == 25001 and max(counts) - min(counts) == 1


class TestBuildSplits:
    def test_sizes_and_tags(self):
        spec = make_spec()
        splits = by_split(build_splits(spec))
        assert len(splits["train"]) == 24
        assert len(splits["test"]) == 6
        assert len(splits["generalization"]) == 4

    def test_train_counts_per_lattice_balanced(self):
        spec = make_spec(n_train=None, N_train=10, N_test=0, N_L_gen=0)
        splits = by_split(build_splits(spec))
        per = {}
        for it in splits["train"]:
            per[it.label.lattice_id] = per.get(it.label.lattice_id, 0) + 1
        counts = sorted(per.values())
        assert sum(counts) == 10 and counts == [3, 3, 4]

    def test_train_test_initial_states_disjoint(self):
        spec = make_spec()
        splits = by_split(build_splits(spec))
        train_states = {}
        for it in splits["train"]:
            train_states.setdefault(it.label.lattice_id, set()).add(
                tuple(it.instance.data[:, 0]))
        for it in splits["test"]:
            state = tuple(it.instance.data[:, 0])
            assert state not in train_states[it.label.lattice_id]

    def test_train_initial_states_distinct(self):
        spec = make_spec()
        splits = by_split(build_splits(spec))
        per = {}
        for it in splits["train"]:
            per.setdefault(it.label.lattice_id, []).append(
                tuple(it.instance.data[:, 0]))
        for states in per.values():
            assert len(states) == len(set(states))

    def test_generalization_lattices_fresh(self):
        spec = make_spec()
        splits = by_split(build_splits(spec))
        train_edges = {it.label.edges for it in splits["train"]}
        gen_edges = {it.label.edges for it in splits["generalization"]}
        assert not (train_edges & gen_edges)

    def test_full_initial_state_space(self):
        # 16 instances per lattice on L=4 exhausts all 2^4 states exactly once
        spec = DatasetSpec(L=4, E=3, N_L=2, sim=SimParams(T=0.5, M=4),
                           seed=1, N_train=32, N_test=0)
        splits = by_split(build_splits(spec))
        per = {}
        for it in splits["train"]:
            per.setdefault(it.label.lattice_id, []).append(
                tuple(int(v) for v in it.instance.data[:, 0]))
        assert len(per) == 2
        full = {tuple(2 * ((code >> b) & 1) - 1 for b in range(4))
                for code in range(16)}
        for states in per.values():
            assert len(states) == 16
            assert set(states) == full

    def test_state_space_exhaustion_rejected(self):
        # 6 + 4 = 10 distinct initial states per lattice exceeds 2^3 = 8
        spec = make_spec(L=3, E=2, N_L=1, n_train=6, N_test=4, N_L_gen=0)
        with pytest.raises(ValueError):
            build_splits(spec)

    def test_determinism(self):
        a = build_splits(make_spec())
        b = build_splits(make_spec())
        for x, y in zip(a, b):
            assert np.array_equal(x.instance.data, y.instance.data)
            assert x.label.edges == y.label.edges
            assert x.split == y.split

    def test_labels_carry_edge_budget(self):
        for it in build_splits(make_spec()):
            assert it.label.E == 5

    def test_instance_data_is_float32(self):
        items = build_splits(make_spec())
        assert items[0].instance.data.dtype == np.float32


class TestRoundTrip:
    def test_bit_exact(self, tmp_path):
        spec = make_spec()
        ds = Dataset(spec, build_splits(spec))
        path = tmp_path / "d.dat"
        save_dataset(path, ds)
        back = load_dataset(path)
        assert back.spec == spec
        assert len(back.items) == len(ds.items)
        for x, y in zip(ds.items, back.items):
            assert np.array_equal(x.instance.data, y.instance.data)
            assert x.instance.data.dtype == y.instance.data.dtype
            assert x.label.edges == y.label.edges
            assert x.label.lattice_id == y.label.lattice_id
            assert x.split == y.split

    def test_empty_dataset(self, tmp_path):
        spec = make_spec()
        path = tmp_path / "empty.dat"
        save_dataset(path, Dataset(spec, []))
        back = load_dataset(path)
        assert back.spec == spec and back.items == []

    def test_corrupted_payload_detected(self, tmp_path):
        spec = make_spec()
        path = tmp_path / "d.dat"
        save_dataset(path, Dataset(spec, build_splits(spec)))
        raw = bytearray(path.read_bytes())
        raw[-3] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            load_dataset(path)

    def test_wrong_format_detected(self, tmp_path):
        path = tmp_path / "x.dat"
        path.write_bytes(b"something else 1\nend\n")
        with pytest.raises(FormatError):
            load_dataset(path)

    def test_split_view_and_arrays(self, tmp_path):
        spec = make_spec()
        ds = Dataset(spec, build_splits(spec))
        X, Y = ds.split("train").arrays()
        assert X.shape == (24, 6, 12) and X.dtype == np.float32
        assert Y.shape == (24, 15) and set(np.unique(Y)) <= {0, 1}
        assert all(Y.sum(axis=1) == 5)


class TestLabeledInstance:
    def test_id_mismatch_rejected(self):
        items = build_splits(make_spec())
        a, b = items[0], items[-1]
        assert a.label.lattice_id != b.label.lattice_id
        with pytest.raises(ValueError):
            LabeledInstance(a.instance, b.label, "train")

    def test_bad_split_tag(self):
        it = build_splits(make_spec())[0]
        with pytest.raises(ValueError):
            LabeledInstance(it.instance, it.label, "validation")

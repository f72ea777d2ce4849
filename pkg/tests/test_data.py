import numpy as np
import pytest

from uqkit.data import (
    BatchPlan,
    Dataset,
    batches,
    load_csv,
    save_csv,
    split,
    synth_classification,
)
from uqkit.errors import DataError, InvalidSplitError


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    def test_basic_classification(self, tmp_path):
        path = write(tmp_path, "x0,x1,target\n1.0,2.0,0\n3.5,-1.0,2\n0,0,1\n")
        ds = load_csv(path, "classification", "target")
        assert ds.n == 3 and ds.d == 2
        assert ds.n_classes == 3  # max label + 1
        np.testing.assert_array_equal(ds.targets, [0, 2, 1])
        assert ds.feature_names == ("x0", "x1")

    def test_unparsable_cell_names_row_and_column(self, tmp_path):
        path = write(tmp_path, "x0,x1,target\n1.0,abc,0\n")
        with pytest.raises(DataError, match=r"row 2.*column x1"):
            load_csv(path, "classification", "target")

    def test_missing_target_column(self, tmp_path):
        path = write(tmp_path, "x0,x1,y\n1,2,0\n")
        with pytest.raises(DataError, match="target"):
            load_csv(path, "classification", "target")

    def test_empty_file(self, tmp_path):
        with pytest.raises(DataError, match="empty"):
            load_csv(write(tmp_path, ""), "regression", "target")

    def test_scientific_notation(self, tmp_path):
        path = write(tmp_path, "x0,target\n1.5e-3,2.25E+1\n-2e2,1e0\n")
        ds = load_csv(path, "regression", "target")
        np.testing.assert_array_equal(ds.inputs[:, 0], [1.5e-3, -2e2])
        np.testing.assert_array_equal(ds.targets, [22.5, 1.0])

    def test_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(5)
        ds = Dataset(
            inputs=rng.normal(scale=1e4, size=(20, 3)) * rng.normal(size=(20, 3)),
            targets=rng.normal(size=20),
            task="regression",
            feature_names=("a", "b", "c"),
        )
        path = tmp_path / "round.csv"
        save_csv(ds, path)
        back = load_csv(path, "regression", "target")
        np.testing.assert_array_equal(back.inputs, ds.inputs)
        np.testing.assert_array_equal(back.targets, ds.targets)


class TestSplit:
    def ds(self, n):
        return Dataset(
            inputs=np.arange(float(2 * n)).reshape(n, 2),
            targets=np.zeros(n),
            task="regression",
            feature_names=("a", "b"),
        )

    def test_floor_sizes_with_remainder_to_train(self):
        tr, ca, te = split(self.ds(10), [0.8, 0.1, 0.1], seed=0)
        assert (tr.n, ca.n, te.n) == (8, 1, 1)
        tr, ca, te = split(self.ds(11), [0.5, 0.25, 0.25], seed=0)
        # floors are (5, 2, 2); remainder 2 goes to train
        assert (tr.n, ca.n, te.n) == (7, 2, 2)

    def test_same_seed_reproduces(self):
        a = split(self.ds(23), [0.6, 0.2, 0.2], seed=9)
        b = split(self.ds(23), [0.6, 0.2, 0.2], seed=9)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.inputs, y.inputs)

    def test_partition_property(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n = int(rng.integers(6, 200))
            seed = int(rng.integers(0, 2**32))
            parts = split(self.ds(n), [0.5, 0.3, 0.2], seed=seed)
            seen = np.concatenate([p.inputs[:, 0] for p in parts])
            assert sorted(seen.tolist()) == [float(2 * i) for i in range(n)]

    def test_empty_partition_rejected(self):
        with pytest.raises(InvalidSplitError):
            split(self.ds(5), [0.8, 0.1, 0.1], seed=0)

    def test_bad_fractions_rejected(self):
        with pytest.raises(ValueError):
            split(self.ds(10), [0.8, 0.1, 0.2], seed=0)
        with pytest.raises(ValueError):
            split(self.ds(10), [1.0, -0.1, 0.1], seed=0)


class TestBatches:
    def ds(self, n):
        return Dataset(
            inputs=np.arange(float(n)).reshape(n, 1),
            targets=np.arange(float(n)),
            task="regression",
            feature_names=("a",),
        )

    def test_batch_sizes(self):
        sizes = [x.shape[0] for x, _ in batches(self.ds(5), BatchPlan(2, 0), epoch=0)]
        assert sizes == [2, 2, 1]

    def test_drop_last(self):
        plan = BatchPlan(2, 0, drop_last=True)
        sizes = [x.shape[0] for x, _ in batches(self.ds(5), plan, epoch=0)]
        assert sizes == [2, 2]

    def test_epoch_permutations_differ_but_replay(self):
        plan = BatchPlan(4, shuffle_seed=3)
        ds = self.ds(12)

        def epoch_order(epoch):
            return np.concatenate([y for _, y in batches(ds, plan, epoch)])

        e0, e1 = epoch_order(0), epoch_order(1)
        assert not np.array_equal(e0, e1)
        np.testing.assert_array_equal(e0, epoch_order(0))
        np.testing.assert_array_equal(e1, epoch_order(1))

    def test_every_row_seen_once_per_epoch(self):
        ds = self.ds(17)
        seen = np.concatenate([y for _, y in batches(ds, BatchPlan(5, 1), epoch=2)])
        assert sorted(seen.tolist()) == list(range(17))


class TestSynth:
    def test_two_moons_noise_free_geometry(self):
        ds = synth_classification("two_moons", 40, noise=0.0, seed=0)
        x = ds.inputs
        top = x[ds.targets == 0]
        bottom = x[ds.targets == 1]
        # arcs of radius 1 around (0, 0) and (1, 0.5)
        np.testing.assert_allclose(np.hypot(top[:, 0], top[:, 1]), 1.0, atol=1e-12)
        np.testing.assert_allclose(
            np.hypot(bottom[:, 0] - 1.0, bottom[:, 1] - 0.5), 1.0, atol=1e-12
        )

    def test_blob_labels_balanced(self):
        ds = synth_classification("gaussian_blobs", 100, 0.5, seed=1, n_classes=3)
        counts = np.bincount(ds.targets, minlength=3)
        assert counts.max() - counts.min() <= 1

    def test_deterministic_per_seed(self):
        a = synth_classification("two_moons", 50, 0.3, seed=5)
        b = synth_classification("two_moons", 50, 0.3, seed=5)
        np.testing.assert_array_equal(a.inputs, b.inputs)
        np.testing.assert_array_equal(a.targets, b.targets)

    def test_unknown_generator(self):
        with pytest.raises(ValueError, match="unknown"):
            synth_classification("spirals", 10, 0.1, seed=0)

import numpy as np
import pytest

from triplenet import data as D


class TestRecordFiles:
    def test_record_length_constant(self):
        assert D.RECORD_BYTES == 3073  # 1 label byte + 3*32*32 pixels

    def test_single_record_round_trip_bit_exact(self, tmp_path):
        image = (np.arange(D.IMAGE_BYTES) % 256).astype(np.uint8) \
            .reshape(1, 3, 32, 32)
        label = np.array([7], np.uint8)
        path = tmp_path / "one.bin"
        D.write_record_file(path, image, label)
        raw = path.read_bytes()
        assert len(raw) == D.RECORD_BYTES
        assert raw[0] == 7
        assert raw[1:] == bytes((np.arange(D.IMAGE_BYTES) % 256).astype(np.uint8))
        images, labels = D.read_record_file(path)
        assert labels.tolist() == [7]
        assert np.array_equal(images, image)

    def test_positions_are_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, (4, 3, 32, 32)).astype(np.uint8)
        labels = np.array([1, 2, 3, 4], np.uint8)
        path = tmp_path / "four.bin"
        D.write_record_file(path, images, labels)
        raw = path.read_bytes()
        for i in range(4):
            rec = raw[i * D.RECORD_BYTES:(i + 1) * D.RECORD_BYTES]
            assert rec[0] == labels[i]
            assert rec[1:] == images[i].tobytes()

    def test_truncated_file_rejected_with_byte_counts(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"\x00" * 5000)
        with pytest.raises(D.DataFormatError, match="5000"):
            D.read_record_file(path)

    def test_out_of_range_label_rejected(self, tmp_path):
        image = np.zeros((1, 3, 32, 32), np.uint8)
        path = tmp_path / "bad_label.bin"
        D.write_record_file(path, image, np.array([12], np.uint8))
        images, labels = D.read_record_file(path)
        with pytest.raises(D.DataFormatError, match="labels"):
            D.LabeledImageSet(images, labels, "train", "cifar10")


class TestLoaders:
    def test_cifar_requires_exact_official_sizes(self, tmp_path):
        for fname in D.CIFAR10_TRAIN_FILES + (D.CIFAR10_TEST_FILE,):
            (tmp_path / fname).write_bytes(b"\x00" * D.RECORD_BYTES * 3)
        with pytest.raises(D.DataFormatError, match="expected 30730000 bytes"):
            D.load_cifar10(tmp_path)

    def test_cifar_missing_dir(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope"):
            D.load_cifar10(tmp_path / "nope")

    def test_svhn_fixture_load(self, svhn_dir):
        train, test = D.load_svhn(svhn_dir)
        assert (len(train), len(test)) == (96, 32)
        assert train.images.shape == (96, 3, 32, 32)
        assert train.labels.min() >= 0 and train.labels.max() < 10
        assert (train.split, train.name) == ("train", "svhn")

    def test_svhn_five_record_fixture(self, tmp_path):
        rng = np.random.default_rng(1)
        images = rng.integers(0, 256, (5, 3, 32, 32)).astype(np.uint8)
        labels = np.arange(5).astype(np.uint8)
        D.write_record_file(tmp_path / D.SVHN_TRAIN_FILE, images, labels)
        D.write_record_file(tmp_path / D.SVHN_TEST_FILE, images, labels)
        train, test = D.load_svhn(tmp_path)
        assert train.images.shape == (5, 3, 32, 32)

    def test_subset(self, svhn_dir):
        train, _ = D.load_svhn(svhn_dir)
        sub = D.subset(train, 10)
        assert len(sub) == 10
        assert np.array_equal(sub.images, train.images[:10])
        with pytest.raises(ValueError):
            D.subset(train, 0)
        with pytest.raises(ValueError):
            D.subset(train, len(train) + 1)


class TestBatches:
    def _set(self, n=100, seed=0):
        rng = np.random.default_rng(seed)
        return D.LabeledImageSet(
            rng.integers(0, 256, (n, 3, 32, 32)).astype(np.uint8),
            rng.integers(0, 10, n), "train", "cifar10")

    def test_batch_sizes(self):
        sizes = [x.data.shape[0] for x, _ in D.batches(self._set(100), 64)]
        assert sizes == [64, 36]

    def test_same_seed_same_order(self):
        ds = self._set()
        a = [lb.tolist() for _, lb in D.batches(ds, 32, shuffle=True, seed=5)]
        b = [lb.tolist() for _, lb in D.batches(ds, 32, shuffle=True, seed=5)]
        c = [lb.tolist() for _, lb in D.batches(ds, 32, shuffle=True, seed=6)]
        assert a == b
        assert a != c

    def test_label_multiset_preserved_for_any_seed(self):
        ds = self._set(77)
        for seed in (0, 1, 17):
            seen = np.concatenate([lb for _, lb in
                                   D.batches(ds, 16, shuffle=True, seed=seed)])
            assert sorted(seen.tolist()) == sorted(ds.labels.tolist())
            assert len(seen) == 77  # nothing duplicated or dropped

    def test_normalization_arithmetic(self):
        images = np.full((1, 3, 32, 32), 255, np.uint8)
        ds = D.LabeledImageSet(images, np.zeros(1, np.int64), "train", "cifar10")
        mean = np.full(3, 0.5, np.float32)
        std = np.full(3, 0.5, np.float32)
        (x, _), = D.batches(ds, 1, mean=mean, std=std)
        assert np.allclose(x.data, 1.0)

    def test_unnormalized_is_unit_interval(self):
        (x, _), = D.batches(self._set(8), 8)
        assert x.data.min() >= 0.0 and x.data.max() <= 1.0
        assert x.data.dtype == np.float32

    def test_empty_and_bad_batch_size_rejected(self):
        empty = D.LabeledImageSet(np.zeros((0, 3, 32, 32), np.uint8),
                                  np.zeros(0, np.int64), "train", "cifar10")
        with pytest.raises(ValueError):
            next(D.batches(empty, 4))
        with pytest.raises(ValueError):
            next(D.batches(self._set(4), 0))


class TestStats:
    def test_channel_stats_and_sidecar_round_trip(self, tmp_path, svhn_dir):
        train, _ = D.load_svhn(svhn_dir)
        mean, std = D.channel_stats(train)
        assert mean.shape == (3,) and std.shape == (3,)
        assert np.all((0 <= mean) & (mean <= 1)) and np.all(std > 0)
        path = tmp_path / "stats.txt"
        D.save_stats(path, mean, std)
        mean2, std2 = D.load_stats(path)
        assert np.allclose(mean, mean2, atol=1e-7)
        assert np.allclose(std, std2, atol=1e-7)
        assert "mean_r" in path.read_text()

import numpy as np
import pytest

from hdagan.data import (
    DomainDataset,
    LabelAccessError,
    SplitSpec,
    generate_synthetic_pair,
    ingest_image_folder,
    load_dataset,
    save_dataset,
    split_and_budget,
)
from hdagan.models import DomainShape

SRC = DomainShape(16, 16, 1)
TGT = DomainShape(8, 8, 3)


@pytest.fixture(scope="module")
def pair():
    return generate_synthetic_pair(4, 50, SRC, TGT, seed=0)


class TestSyntheticGeneration:
    def test_counts_and_shapes(self, pair):
        source, target = pair
        assert len(source) == 200 and len(target) == 200
        assert source.images.shape == (200, 1, 16, 16)
        assert target.images.shape == (200, 3, 8, 8)

    def test_values_in_unit_interval(self, pair):
        for ds in pair:
            assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0

    def test_deterministic_per_seed(self, pair):
        source, target = pair
        source2, target2 = generate_synthetic_pair(4, 50, SRC, TGT, seed=0)
        assert np.array_equal(source.images, source2.images)
        assert np.array_equal(target.images, target2.images)
        source3, _ = generate_synthetic_pair(4, 50, SRC, TGT, seed=1)
        assert not np.array_equal(source.images, source3.images)

    def test_nearest_centroid_oracle(self, pair):
        # class learnability calibration: flattened-pixel centroids,
        # 40 train / 10 test per class, both domains above 80 percent
        for ds in pair:
            X = ds.images.reshape(len(ds), -1)
            y = ds.eval_labels()
            cents, tx, ty = [], [], []
            for c in range(ds.num_classes):
                idx = np.flatnonzero(y == c)
                cents.append(X[idx[:40]].mean(0))
                tx.append(X[idx[40:50]])
                ty.append(y[idx[40:50]])
            cents = np.stack(cents)
            tx = np.concatenate(tx)
            ty = np.concatenate(ty)
            pred = ((tx[:, None, :] - cents[None]) ** 2).sum(-1).argmin(1)
            assert (pred == ty).mean() > 0.8

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            generate_synthetic_pair(1, 10, SRC, TGT, 0)
        with pytest.raises(ValueError):
            generate_synthetic_pair(17, 10, SRC, TGT, 0)
        with pytest.raises(ValueError):
            generate_synthetic_pair(4, 0, SRC, TGT, 0)


class TestSplitAndBudget:
    def test_counting(self, pair):
        source, _ = pair
        train, val = split_and_budget(source, SplitSpec(40, 10, seed=0), n_yt=5)
        assert len(train) == 160 and len(val) == 40
        assert len(train.labeled_indices()) == 20  # 5 per class
        labels = [train.label_of(i) for i in train.labeled_indices()]
        assert sorted(set(labels)) == [0, 1, 2, 3]
        assert all(labels.count(c) == 5 for c in range(4))

    def test_budget_zero_fully_unlabeled(self, pair):
        _, target = pair
        train, _ = split_and_budget(target, SplitSpec(40, 10, 0), n_yt=0)
        assert len(train.labeled_indices()) == 0
        assert all(train.label_of(i) is None for i in range(len(train)))

    def test_budget_full_keeps_all(self, pair):
        source, _ = pair
        train, _ = split_and_budget(source, SplitSpec(40, 10, 0), n_yt=40)
        assert len(train.labeled_indices()) == len(train)

    def test_disjoint_and_stratified(self, pair):
        source, _ = pair
        spec = SplitSpec(40, 10, seed=3)
        train, val = split_and_budget(source, spec, 40)
        tr_labels = train.eval_labels() if train.access == "eval" else train._labels
        va_labels = val.eval_labels()
        assert np.bincount(tr_labels) .tolist() == [40] * 4
        assert np.bincount(va_labels).tolist() == [10] * 4
        # disjoint by image content
        tr_set = {train.images[i].tobytes() for i in range(len(train))}
        va_set = {val.images[i].tobytes() for i in range(len(val))}
        assert not (tr_set & va_set)

    def test_unsatisfiable(self, pair):
        source, _ = pair
        with pytest.raises(ValueError, match="split needs"):
            split_and_budget(source, SplitSpec(45, 10, 0), 0)

    def test_bad_budget(self, pair):
        source, _ = pair
        with pytest.raises(ValueError, match="n_yt"):
            split_and_budget(source, SplitSpec(40, 10, 0), 41)

    def test_hidden_labels_never_leak(self, pair):
        _, target = pair
        train, _ = split_and_budget(target, SplitSpec(40, 10, 0), n_yt=2)
        with pytest.raises(LabelAccessError):
            train.eval_labels()
        _, labels = train.make_batch(np.arange(len(train)))
        assert (labels >= 0).sum() == 8  # 2 per class visible, rest -1

    def test_deterministic_split(self, pair):
        source, _ = pair
        a, _ = split_and_budget(source, SplitSpec(40, 10, 7), 5)
        b, _ = split_and_budget(source, SplitSpec(40, 10, 7), 5)
        assert np.array_equal(a.images, b.images)


class TestDumpFormat:
    def test_roundtrip_bitwise(self, pair, tmp_path):
        source, _ = pair
        p = tmp_path / "source.hdad"
        save_dataset(p, source)
        again = load_dataset(p)
        assert np.array_equal(again.images, source.images)
        assert np.array_equal(again.eval_labels(), source.eval_labels())
        save_dataset(tmp_path / "b.hdad", again)
        assert p.read_bytes() == (tmp_path / "b.hdad").read_bytes()

    def test_magic_and_layout(self, pair, tmp_path):
        source, _ = pair
        p = tmp_path / "s.hdad"
        save_dataset(p, source)
        raw = p.read_bytes()
        assert raw[:4] == b"HDAD"
        import struct

        version, n, h, w, c, labeled = struct.unpack("<HIIIIB", raw[4:23])
        assert (version, n, h, w, c, labeled) == (1, 200, 16, 16, 1, 1)
        assert len(raw) == 23 + 200 * (4 * 256 + 2)

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "junk.hdad"
        p.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ValueError, match="magic"):
            load_dataset(p)


class TestIngestion:
    def _write_folder(self, root, name, count, size=(12, 10), value=128):
        from PIL import Image

        d = root / name
        d.mkdir(parents=True)
        rng = np.random.default_rng(count)
        for i in range(count):
            arr = rng.integers(0, 255, size=size + (3,), dtype=np.uint8)
            arr[:, :, 0] = value
            Image.fromarray(arr).save(d / f"img{i}.png")

    def test_merge_two_folders_one_class(self, tmp_path):
        self._write_folder(tmp_path, "annual", 3)
        self._write_folder(tmp_path, "permanent", 2)
        ds = ingest_image_folder(tmp_path, DomainShape(8, 8, 3), [("crop", ["annual", "permanent"])])
        assert len(ds) == 5
        assert set(ds.eval_labels()) == {0}
        assert ds.class_names == ["crop"]

    def test_resize_exact(self, tmp_path):
        self._write_folder(tmp_path, "a", 1, size=(64, 64))
        ds = ingest_image_folder(tmp_path, DomainShape(16, 16, 3), [("a", ["a"])])
        assert ds.images.shape == (1, 3, 16, 16)

    def test_channel_adaptation(self, tmp_path):
        from PIL import Image

        d = tmp_path / "gray"
        d.mkdir()
        Image.fromarray(np.full((8, 8), 100, dtype=np.uint8), mode="L").save(d / "g.png")
        ds = ingest_image_folder(tmp_path, DomainShape(8, 8, 3), [("gray", ["gray"])])
        assert ds.images.shape == (1, 3, 8, 8)
        assert np.allclose(ds.images[0, 0], ds.images[0, 2])
        ds1 = ingest_image_folder(tmp_path, DomainShape(8, 8, 1), [("gray", ["gray"])])
        assert ds1.images.shape == (1, 1, 8, 8)

    def test_nine_folders_merge_to_eight_classes(self, tmp_path):
        folders = [
            "annual_crop", "permanent_crop", "forest", "highway", "industrial",
            "pasture", "residential", "river", "sea_lake",
        ]
        for name in folders:
            self._write_folder(tmp_path, name, 1)
        class_map = [("crop", ["annual_crop", "permanent_crop"])] + [
            (n, [n]) for n in folders[2:]
        ]
        ds = ingest_image_folder(tmp_path, DomainShape(8, 8, 3), class_map)
        assert len(ds.class_names) == 8
        assert len(ds) == 9

    def test_missing_folder(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ingest_image_folder(tmp_path, DomainShape(8, 8, 1), [("x", ["nothere"])])

    def test_undecodable_skipped_with_count(self, tmp_path):
        self._write_folder(tmp_path, "a", 2)
        (tmp_path / "a" / "broken.png").write_bytes(b"not an image")
        ds = ingest_image_folder(tmp_path, DomainShape(8, 8, 3), [("a", ["a"])])
        assert len(ds) == 2
        assert ds.ingest_skipped == 1

    def test_empty_class(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(ValueError, match="no decodable"):
            ingest_image_folder(tmp_path, DomainShape(8, 8, 1), [("e", ["empty"])])

    def test_reingestion_deterministic(self, tmp_path):
        self._write_folder(tmp_path, "a", 3)
        a = ingest_image_folder(tmp_path, DomainShape(8, 8, 3), [("a", ["a"])])
        b = ingest_image_folder(tmp_path, DomainShape(8, 8, 3), [("a", ["a"])])
        assert np.array_equal(a.images, b.images)


class TestDatasetInvariants:
    def test_values_out_of_range_rejected(self):
        bad = np.full((1, 1, 2, 2), 1.5, dtype=np.float32)
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            DomainDataset(bad, [0], DomainShape(2, 2, 1), ["a", "b"])

    def test_label_out_of_range_rejected(self):
        imgs = np.zeros((1, 1, 2, 2), dtype=np.float32)
        with pytest.raises(ValueError, match="range"):
            DomainDataset(imgs, [5], DomainShape(2, 2, 1), ["a", "b"])

    def test_shape_mismatch_rejected(self):
        imgs = np.zeros((1, 2, 2, 2), dtype=np.float32)
        with pytest.raises(ValueError, match="domain"):
            DomainDataset(imgs, [0], DomainShape(2, 2, 1), ["a"])

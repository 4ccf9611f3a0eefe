import numpy as np
import pytest

import hdagan.tensor as T
from hdagan.data import DomainDataset, SplitSpec, generate_synthetic_pair, split_and_budget
from hdagan.models import DomainShape, build_bundle, build_final_classifier
from hdagan.strategies import (
    PROV_LABELED,
    PROV_PSEUDO,
    PROV_TRANSFERRED,
    assemble_baseline,
    assemble_hda_full,
    assemble_hda_source,
    assemble_hda_target,
    evaluate,
    load_assembled,
    save_assembled,
    train_final,
)
from hdagan.tensor import Tensor

# small shapes keep the 200-triple property test fast
SRC = DomainShape(8, 8, 1)
TGT = DomainShape(8, 8, 2)


@pytest.fixture(scope="module")
def tiny_bundle():
    return build_bundle(SRC, TGT, num_classes=3, base_channels=4, seed=0)


def make_datasets(rng, n_source, n_target, n_labeled):
    """Random datasets with exactly n_labeled visible target labels."""
    src_imgs = rng.random((n_source,) + SRC.chw).astype(np.float32)
    src_labels = rng.integers(0, 3, n_source)
    tgt_imgs = rng.random((n_target,) + TGT.chw).astype(np.float32)
    tgt_labels = rng.integers(0, 3, n_target)
    visible = np.zeros(n_target, dtype=bool)
    visible[rng.choice(n_target, n_labeled, replace=False)] = True
    names = ["a", "b", "c"]
    source = DomainDataset(src_imgs, src_labels, SRC, names, access="eval")
    target = DomainDataset(tgt_imgs, tgt_labels, TGT, names, visible=visible, access="train")
    return source, target


class TestSetAlgebra:
    def test_cardinalities_and_provenance_over_random_triples(self, tiny_bundle):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n_s = int(rng.integers(1, 25))
            n_t = int(rng.integers(1, 25))
            n_lab = int(rng.integers(0, n_t + 1))
            source, target = make_datasets(rng, n_s, n_t, n_lab)
            a = assemble_hda_source(tiny_bundle, source, target)
            b = assemble_hda_target(tiny_bundle, target)
            c = assemble_hda_full(tiny_bundle, source, target)
            assert len(a) == n_s + n_lab
            assert len(b) == n_t
            assert len(c) == n_s + n_t
            assert a.histogram() == {
                k: v for k, v in {PROV_TRANSFERRED: n_s, PROV_LABELED: n_lab}.items() if v
            }
            assert b.histogram() == {
                k: v
                for k, v in {PROV_PSEUDO: n_t - n_lab, PROV_LABELED: n_lab}.items()
                if v
            }
            assert c.histogram() == {
                k: v
                for k, v in {
                    PROV_TRANSFERRED: n_s,
                    PROV_PSEUDO: n_t - n_lab,
                    PROV_LABELED: n_lab,
                }.items()
                if v
            }

    def test_full_is_union_minus_duplicate_labeled(self, tiny_bundle):
        rng = np.random.default_rng(1)
        source, target = make_datasets(rng, 7, 9, 4)
        a = assemble_hda_source(tiny_bundle, source, target)
        b = assemble_hda_target(tiny_bundle, target)
        c = assemble_hda_full(tiny_bundle, source, target)

        def multiset(aset):
            return sorted(
                (aset.images[i].tobytes(), int(aset.labels[i]), aset.provenance[i])
                for i in range(len(aset))
            )

        joined = multiset(a) + multiset(b)
        labeled_once = [item for item in multiset(c)]
        # union equals concatenation with one copy of each labeled item removed
        for item in labeled_once:
            joined.remove(item)
        assert all(p == PROV_LABELED for _, _, p in joined)
        assert len(joined) == 4

    def test_all_images_target_shaped_unit_interval(self, tiny_bundle):
        rng = np.random.default_rng(2)
        source, target = make_datasets(rng, 10, 8, 3)
        for aset in (
            assemble_hda_source(tiny_bundle, source, target),
            assemble_hda_target(tiny_bundle, target),
            assemble_hda_full(tiny_bundle, source, target),
        ):
            assert aset.images.shape[1:] == TGT.chw
            assert aset.images.min() >= 0.0 and aset.images.max() <= 1.0

    def test_boundary_no_labels(self, tiny_bundle):
        rng = np.random.default_rng(3)
        source, target = make_datasets(rng, 5, 6, 0)
        a = assemble_hda_source(tiny_bundle, source, target)
        assert len(a) == 5 and a.histogram() == {PROV_TRANSFERRED: 5}
        b = assemble_hda_target(tiny_bundle, target)
        assert b.histogram() == {PROV_PSEUDO: 6}

    def test_labeled_target_never_pseudo_labeled(self, tiny_bundle):
        rng = np.random.default_rng(4)
        _, target = make_datasets(rng, 2, 10, 10)
        b = assemble_hda_target(tiny_bundle, target)
        assert b.histogram() == {PROV_LABELED: 10}
        assert np.array_equal(np.sort(b.labels), np.sort(target._labels))

    def test_assembly_deterministic(self, tiny_bundle):
        rng = np.random.default_rng(5)
        source, target = make_datasets(rng, 6, 6, 2)
        a1 = assemble_hda_target(tiny_bundle, target)
        a2 = assemble_hda_target(tiny_bundle, target)
        assert np.array_equal(a1.images, a2.images)
        assert np.array_equal(a1.labels, a2.labels)

    def test_baseline_assembly(self, tiny_bundle):
        rng = np.random.default_rng(6)
        _, target = make_datasets(rng, 2, 8, 3)
        base = assemble_baseline(target, TGT)
        assert len(base) == 3 and base.histogram() == {PROV_LABELED: 3}
        _, empty_target = make_datasets(rng, 2, 8, 0)
        assert len(assemble_baseline(empty_target, TGT)) == 0


class TestTrainFinal:
    def _separable_set(self):
        # linearly separable toy data: dark class 0, bright class 1
        rng = np.random.default_rng(0)
        dark = rng.uniform(0.0, 0.2, size=(20,) + TGT.chw).astype(np.float32)
        bright = rng.uniform(0.8, 1.0, size=(20,) + TGT.chw).astype(np.float32)
        from hdagan.strategies import AssembledSet

        return AssembledSet(
            np.concatenate([dark, bright]),
            np.array([0] * 20 + [1] * 20, dtype=np.int64),
            [PROV_LABELED] * 40,
            TGT,
        )

    def test_reaches_full_train_accuracy_on_separable_data(self):
        aset = self._separable_set()
        final = build_final_classifier(TGT, 2, base_channels=4, seed=0)
        train_final(final, aset, epochs=20, seed=0)
        from hdagan.training import predict_labels

        assert (predict_labels(final, aset.images) == aset.labels).mean() == 1.0

    def test_bundle_untouched(self, tiny_bundle):
        rng = np.random.default_rng(7)
        source, target = make_datasets(rng, 6, 6, 3)
        aset = assemble_hda_full(tiny_bundle, source, target)
        snaps = {
            name: {p: net.params[p].data.copy() for p in net.params.names()}
            for name, net in tiny_bundle.networks().items()
            if name != "final"
        }
        final = build_final_classifier(TGT, 3, base_channels=4, seed=1)
        train_final(final, aset, epochs=2, seed=0)
        for name, snap in snaps.items():
            net = tiny_bundle.networks()[name]
            for p, before in snap.items():
                assert np.array_equal(net.params[p].data, before)

    def test_zero_epochs_roughly_chance(self):
        aset = self._separable_set()
        final = build_final_classifier(TGT, 2, base_channels=4, seed=3)
        before = {p: final.params[p].data.copy() for p in final.params.names()}
        train_final(final, aset, epochs=0, seed=0)
        for p, arr in before.items():
            assert np.array_equal(final.params[p].data, arr)

    def test_empty_set_rejected(self):
        from hdagan.strategies import AssembledSet

        empty = AssembledSet(np.empty((0,) + TGT.chw, dtype=np.float32), np.empty(0, dtype=np.int64), [], TGT)
        final = build_final_classifier(TGT, 2, base_channels=4, seed=0)
        with pytest.raises(ValueError, match="empty"):
            train_final(final, empty, epochs=1, seed=0)


class TestEvaluate:
    def _val(self, labels):
        rng = np.random.default_rng(0)
        imgs = rng.random((len(labels),) + TGT.chw).astype(np.float32)
        return DomainDataset(imgs, labels, TGT, ["a", "b", "c"], access="eval")

    def test_all_correct_is_100(self):
        val = self._val([0, 0, 0, 0])

        class Stub:
            def forward(self, x, training=False):
                data = np.zeros((x.shape[0], 3), dtype=np.float32)
                data[:, 0] = 1.0
                return Tensor(data)

        assert evaluate(Stub(), val) == 100.0

    def test_half_correct_is_50(self):
        val = self._val([0, 0, 1, 1])

        class Stub:
            def forward(self, x, training=False):
                data = np.zeros((x.shape[0], 3), dtype=np.float32)
                data[:, 0] = 1.0
                return Tensor(data)

        assert evaluate(Stub(), val) == 50.0

    def test_two_decimal_report(self):
        val = self._val([0, 1, 1])

        class Stub:
            def forward(self, x, training=False):
                data = np.zeros((x.shape[0], 3), dtype=np.float32)
                data[:, 0] = 1.0
                return Tensor(data)

        assert evaluate(Stub(), val) == 33.33

    def test_unlabeled_val_rejected(self):
        rng = np.random.default_rng(0)
        imgs = rng.random((3,) + TGT.chw).astype(np.float32)
        val = DomainDataset(imgs, None, TGT, ["a"], access="eval")
        from hdagan.data import LabelAccessError

        with pytest.raises(LabelAccessError):
            evaluate(None, val)


class TestAssembledDump:
    def test_roundtrip_with_provenance(self, tiny_bundle, tmp_path):
        rng = np.random.default_rng(8)
        source, target = make_datasets(rng, 5, 7, 2)
        aset = assemble_hda_full(tiny_bundle, source, target)
        p = tmp_path / "assembled.hdad"
        save_assembled(p, aset)
        again = load_assembled(p)
        assert np.array_equal(again.images, aset.images)
        assert np.array_equal(again.labels, aset.labels)
        assert again.provenance == aset.provenance

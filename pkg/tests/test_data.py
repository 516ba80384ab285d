import json

import numpy as np
import pytest

from ttadc.data import (
    AugmentationSpec,
    Dataset,
    GeneratorSpec,
    augment,
    class_counts,
    class_means,
    generate,
    load_csv,
    resample,
    save_csv,
    to_csv,
)


class TestClassCounts:
    def test_uniform_exact(self):
        np.testing.assert_array_equal(class_counts([0.2] * 5, 100), [20] * 5)

    def test_largest_remainder(self):
        # quotas 3.33 each; the single leftover goes to the lowest class
        np.testing.assert_array_equal(class_counts([1 / 3] * 3, 10), [4, 3, 3])

    def test_sums_to_n(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = rng.dirichlet(np.ones(6))
            n = int(rng.integers(6, 500))
            assert class_counts(p, n).sum() == n


class TestGenerate:
    def test_counts_and_shape(self):
        ds = generate(GeneratorSpec(n=100))
        assert ds.features.shape == (100, 8)
        np.testing.assert_array_equal(ds.class_counts(), [20] * 5)

    def test_labels_are_one_based(self):
        ds = generate(GeneratorSpec(n=50))
        assert ds.labels.min() == 1 and ds.labels.max() == 5

    def test_tiny_noise_separates_classes_perfectly(self):
        spec = GeneratorSpec(noise=1e-6, n=200)
        ds = generate(spec)
        means = class_means(5, 8, 1.0, 2.0)
        nearest = np.argmin(((ds.features[:, None, :] - means[None]) ** 2).sum(-1), axis=1) + 1
        np.testing.assert_array_equal(nearest, ds.labels)

    def test_bitwise_deterministic(self):
        a, b = generate(GeneratorSpec(seed=3)), generate(GeneratorSpec(seed=3))
        assert a.features.tobytes() == b.features.tobytes()
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_seed_changes_draw(self):
        assert not np.array_equal(generate(GeneratorSpec(seed=1)).features, generate(GeneratorSpec(seed=2)).features)

    def test_class_conditional_moments_ignore_prior(self):
        means = class_means(5, 8, 1.0, 2.0)
        for dist, seed in (((0.6, 0.1, 0.1, 0.1, 0.1), 4), ((0.2,) * 5, 5)):
            ds = generate(GeneratorSpec(distribution=dist, n=20000, seed=seed))
            for c in (1, 3):
                rows = ds.features[ds.labels == c]
                # five standard errors of the sample mean
                tol = 5 * 1.25 / np.sqrt(len(rows))
                np.testing.assert_allclose(rows.mean(axis=0), means[c - 1], rtol=0, atol=tol)
                np.testing.assert_allclose(rows.std(axis=0), 1.25, rtol=0, atol=tol)

    def test_scattered_layout(self):
        means = class_means(3, 4, 1.0, 2.0, layout="scattered")
        np.testing.assert_array_equal(means[:, 0], [1, 2, 3])
        np.testing.assert_array_equal(means[:, 1:], [[2, 0, 0], [0, 2, 0], [0, 0, 2]])

    @pytest.mark.parametrize(
        "kwargs",
        [{"K": 1}, {"noise": 0.0}, {"distribution": (0.5, 0.5)}, {"layout": "spiral"}, {"n": 3}],
    )
    def test_invalid_spec(self, kwargs):
        with pytest.raises(ValueError):
            GeneratorSpec(**kwargs)


class TestResample:
    def source(self):
        return generate(GeneratorSpec(n=500, seed=0))

    def test_target_counts(self):
        out = resample(self.source(), np.array([1, 1, 2, 1, 1]) / 6, 60, seed=1)
        np.testing.assert_array_equal(out.class_counts(), [10, 10, 20, 10, 10])

    def test_rows_come_from_source(self):
        src = self.source()
        out = resample(src, [0.2] * 5, 50, seed=2)
        rows = {r.tobytes() for r in src.features}
        assert all(r.tobytes() in rows for r in out.features)

    def test_without_replacement_is_permutation(self):
        src = self.source()
        out = resample(src, [0.2] * 5, 500, seed=3)
        order = np.lexsort(out.features.T)
        ref = np.lexsort(src.features.T)
        np.testing.assert_array_equal(out.features[order], src.features[ref])

    def test_absent_class_rejected(self):
        src = self.source()
        src = src.subset(src.labels != 5)
        with pytest.raises(ValueError, match="absent"):
            resample(src, [0.2] * 5, 50, seed=0)

    def test_forced_no_replacement_overflow(self):
        with pytest.raises(ValueError):
            resample(self.source(), [0.96, 0.01, 0.01, 0.01, 0.01], 200, seed=0, replace=False)


class TestAugment:
    def test_identity_when_disabled(self):
        x = np.random.default_rng(0).normal(size=(4, 3))
        out = augment(x, AugmentationSpec(noise=0.0), np.random.default_rng(1))
        np.testing.assert_array_equal(out, x)

    def test_noise_moments(self):
        x = np.zeros((20000, 2))
        out = augment(x, AugmentationSpec(noise=0.5), np.random.default_rng(2))
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=0.02)
        np.testing.assert_allclose(out.std(axis=0), 0.5, atol=0.02)

    def test_dropout_rate(self):
        x = np.ones((10000, 4))
        out = augment(x, AugmentationSpec(noise=0.0, dropout=0.3), np.random.default_rng(3))
        assert abs((out == 0).mean() - 0.3) < 0.02

    def test_jitter_bounds(self):
        x = np.ones((1000, 3))
        out = augment(x, AugmentationSpec(noise=0.0, jitter=0.1), np.random.default_rng(4))
        assert out.min() >= 0.9 and out.max() <= 1.1

    def test_preserves_shape_of_vector(self):
        assert augment(np.ones(5), AugmentationSpec(), np.random.default_rng(0)).shape == (5,)

    def test_invalid_dropout(self):
        with pytest.raises(ValueError):
            AugmentationSpec(dropout=1.0)


class TestCsv:
    def test_roundtrip_is_exact(self, tmp_path):
        ds = generate(GeneratorSpec(n=40, seed=9))
        save_csv(ds, tmp_path / "d.csv")
        back = load_csv(tmp_path / "d.csv")
        assert back.features.tobytes() == ds.features.tobytes()
        np.testing.assert_array_equal(back.labels, ds.labels)
        assert back.K == 5

    def test_sidecar_records_provenance(self, tmp_path):
        ds = generate(GeneratorSpec(n=20, seed=1))
        save_csv(ds, tmp_path / "d.csv")
        side = json.loads((tmp_path / "d.json").read_text())
        assert side["K"] == 5 and side["generator"]["seed"] == 1

    def test_text_is_deterministic(self):
        assert to_csv(generate(GeneratorSpec(n=20))) == to_csv(generate(GeneratorSpec(n=20)))

    def test_header(self):
        assert to_csv(generate(GeneratorSpec(d=2, n=10))).splitlines()[0] == "f1,f2,label"


def test_dataset_rejects_out_of_range_labels():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 3)), [1, 6], K=5)

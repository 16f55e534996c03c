import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from sklearn.base import clone

from gossip_omkl.rf_kernel import (
    FeatureMap,
    GaussianKernelSpec,
    RandomFourierFeatures,
    features,
    kernel_exact,
    sample_feature_map,
)


def test_invalid_bandwidth():
    with pytest.raises(ValueError):
        GaussianKernelSpec(0.0)


def test_deterministic_sampling():
    a = sample_feature_map(2.0, 10, 3, np.random.default_rng(5))
    b = sample_feature_map(2.0, 10, 3, np.random.default_rng(5))
    assert a == b
    np.testing.assert_array_equal(a.frequencies, b.frequencies)


def test_frequency_moments():
    sigma = 3.0
    fmap = sample_feature_map(sigma, 100_000, 2, np.random.default_rng(0))
    V = fmap.frequencies
    se = V.std(axis=0, ddof=1) / np.sqrt(len(V))
    assert np.all(np.abs(V.mean(axis=0)) <= 4 * se)
    np.testing.assert_allclose(V.var(axis=0), 1 / sigma**2, rtol=0.05)


def test_frequencies_read_only():
    fmap = sample_feature_map(1.0, 4, 2, 0)
    with pytest.raises(ValueError):
        fmap.frequencies[0, 0] = 1.0


@settings(max_examples=100, deadline=None)
@given(hnp.arrays(np.float64, st.integers(1, 6), elements=st.floats(-1e3, 1e3)), st.integers(1, 40))
def test_unit_norm(x, D):
    fmap = sample_feature_map(1.5, D, len(x), np.random.default_rng(D))
    z = features(fmap, x)
    assert z.shape == (2 * D,)
    assert z @ z == pytest.approx(1.0, abs=1e-12)


def test_origin_embedding():
    D = 8
    z = features(sample_feature_map(1.0, D, 3, 1), np.zeros(3))
    np.testing.assert_allclose(z, np.r_[np.zeros(D), np.ones(D)] / np.sqrt(D), atol=1e-15)


def test_batch_matches_rows():
    fmap = sample_feature_map(1.0, 5, 3, 2)
    X = np.random.default_rng(0).normal(size=(4, 3))
    np.testing.assert_allclose(features(fmap, X), np.stack([features(fmap, x) for x in X]), atol=1e-15)


def test_wrong_width_rejected():
    fmap = sample_feature_map(1.0, 5, 3, 2)
    with pytest.raises(ValueError):
        features(fmap, np.zeros(2))


def test_kernel_exact_examples():
    assert kernel_exact(1.0, [1.0, 2.0], [1.0, 2.0]) == 1.0
    assert kernel_exact(1.0, [0.0, 0.0], [1.0, 1.0]) == pytest.approx(np.exp(-1), abs=1e-15)
    assert kernel_exact(1e6, [0.0], [5.0]) == pytest.approx(1.0, abs=1e-10)


def test_monte_carlo_kernel():
    rng = np.random.default_rng(11)
    x, xp = rng.normal(size=3), rng.normal(size=3)
    sigma = 1.3
    vals = np.array([
        features(m, x) @ features(m, xp)
        for m in (sample_feature_map(sigma, 20, 3, rng) for _ in range(200))
    ])
    se = vals.std(ddof=1) / np.sqrt(len(vals))
    assert abs(vals.mean() - kernel_exact(sigma, x, xp)) <= 3 * se


def test_save_load(tmp_path):
    fmap = sample_feature_map(2.5, 7, 4, 3)
    path = tmp_path / "map.bin"
    fmap.save(path)
    loaded = FeatureMap.load(path)
    assert loaded == fmap
    assert loaded.sigma == 2.5


def test_load_truncated(tmp_path):
    fmap = sample_feature_map(2.5, 7, 4, 3)
    path = tmp_path / "map.bin"
    fmap.save(path)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(ValueError):
        FeatureMap.load(path)


def test_transformer():
    X = np.random.default_rng(0).normal(size=(10, 3))
    rff = RandomFourierFeatures(sigma=2.0, n_components=6, random_state=4)
    Z = rff.fit_transform(X)
    assert Z.shape == (10, 12)
    np.testing.assert_allclose(np.sum(Z**2, axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(clone(rff).fit(X).transform(X), Z)
    assert rff.get_params() == {"sigma": 2.0, "n_components": 6, "random_state": 4}
    with pytest.raises(ValueError):
        rff.transform(X[:, :2])

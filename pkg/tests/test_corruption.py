import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from funnol.corruption import CorruptionConfig, corrupt, corrupt_batch
from funnol.dataset import FunctionalSample


def _sample(J=50, D=2, miss=0.0, seed=0):
    rng = np.random.default_rng(seed)
    return FunctionalSample(rng.normal(size=(J, D)), rng.random((J, D)) >= miss, 1)


def test_identity_corruption():
    s = _sample()
    out = corrupt(s, CorruptionConfig(0.0, 0.0, 1), draw_index=0)
    np.testing.assert_array_equal(out.values, s.values)
    np.testing.assert_array_equal(out.mask, s.mask)


def test_near_total_discard():
    s = _sample(J=1000, D=1)
    out = corrupt(s, CorruptionConfig(0.999, 0.0, 1), 0)
    assert out.mask.sum() < 10


def test_config_validation():
    with pytest.raises(ValueError):
        CorruptionConfig(1.0, 0.1)
    with pytest.raises(ValueError):
        CorruptionConfig(0.1, -1.0)
    with pytest.raises(ValueError):
        CorruptionConfig(0.1, float("inf"))


def test_masked_fraction_binomial_interval():
    s = _sample(J=10000, D=1)
    out = corrupt(s, CorruptionConfig(0.3, 0.0, 11), 0)
    kept = out.mask.sum() / 10000
    # 99.9% binomial interval for p=0.3, n=1e4 is 0.3 +- 3.29*sqrt(0.21/1e4) ~ +-0.015
    assert 0.685 <= kept <= 0.715


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 0.95), st.floats(0, 2), st.integers(0, 2**32), st.integers(0, 50))
def test_never_unmasks_and_keeps_labels(p, sd, seed, draw):
    s = _sample(J=40, D=3, miss=0.3, seed=seed % 97)
    out = corrupt(s, CorruptionConfig(p, sd, seed), draw)
    assert not np.any(out.mask & ~s.mask)
    assert out.label == s.label
    assert np.all(out.values[~out.mask] == 0.0)


def test_zero_noise_keeps_surviving_values():
    s = _sample(J=200, D=2, miss=0.1)
    out = corrupt(s, CorruptionConfig(0.4, 0.0, 5), 3)
    np.testing.assert_array_equal(out.values[out.mask], s.values[out.mask])


def test_noise_mean():
    sd = 0.5
    s = FunctionalSample.full(np.zeros((100_000, 1)))
    out = corrupt(s, CorruptionConfig(0.0, sd, 2), 0)
    n = out.mask.sum()
    assert abs(out.values[out.mask].mean()) <= 4 * sd / np.sqrt(n)
    assert out.values.std() == pytest.approx(sd, rel=0.02)


def test_deterministic_and_keyed():
    s = _sample()
    cfg = CorruptionConfig(0.3, 0.2, 9)
    a, b = corrupt(s, cfg, 4, 2), corrupt(s, cfg, 4, 2)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.mask, b.mask)
    c = corrupt(s, cfg, 5, 2)
    assert not np.array_equal(a.mask, c.mask)
    d = corrupt(s, cfg, 4, 3)
    assert not np.array_equal(a.values, d.values)


def test_batch_matches_per_sample():
    cfg = CorruptionConfig(0.2, 0.3, 1)
    samples = [_sample(seed=i) for i in range(4)]
    v = np.stack([s.values for s in samples])
    m = np.stack([s.mask for s in samples])
    idx = np.array([7, 2, 9, 0])
    bv, bm = corrupt_batch(v, m, idx, cfg, 6)
    for b, (s, i) in enumerate(zip(samples, idx)):
        one = corrupt(s, cfg, 6, int(i))
        np.testing.assert_array_equal(bv[b], one.values)
        np.testing.assert_array_equal(bm[b], one.mask)

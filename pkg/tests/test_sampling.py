import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowkrim import SamplingMask, apply_mask, consistency_project, sample_per_snapshot
from flowkrim.sampling import load_mask, save_mask


def test_apply_mask_full_is_identity():
    y = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(apply_mask(y, SamplingMask.full(y.shape)), y)


def test_apply_mask_single_entry():
    m = SamplingMask.from_pairs((2, 2), [(0, 0)])
    np.testing.assert_array_equal(apply_mask(np.ones((2, 2)), m), [[1, 0], [0, 0]])


def test_apply_mask_idempotent():
    rng = np.random.default_rng(0)
    y = rng.standard_normal((5, 7))
    m = sample_per_snapshot(5, 7, 0.4, 1)
    once = apply_mask(y, m)
    np.testing.assert_array_equal(apply_mask(once, m), once)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        apply_mask(np.ones((2, 3)), SamplingMask.full((3, 2)))
    with pytest.raises(ValueError):
        consistency_project(np.ones((2, 2)), np.ones((2, 3)), SamplingMask.full((2, 2)))


@pytest.mark.parametrize("n1, ratio, expected", [(40, 0.1, 4), (38, 0.5, 19), (38, 0.1, 4), (40, 0.3, 12), (38, 1.0, 38)])
def test_per_snapshot_counts(n1, ratio, expected):
    m = sample_per_snapshot(n1, 30, ratio, 0)
    np.testing.assert_array_equal(m.indicator.sum(axis=0), expected)


@pytest.mark.parametrize("ratio", [0.0, -0.1, 1.5])
def test_ratio_out_of_range(ratio):
    with pytest.raises(ValueError):
        sample_per_snapshot(10, 3, ratio, 0)


def test_sampling_deterministic():
    assert sample_per_snapshot(20, 10, 0.3, 42) == sample_per_snapshot(20, 10, 0.3, 42)
    assert sample_per_snapshot(20, 10, 0.3, 42) != sample_per_snapshot(20, 10, 0.3, 43)


def test_consistency_project_examples():
    x = np.zeros((2, 2))
    y = np.ones((2, 2))
    np.testing.assert_array_equal(consistency_project(x, y, SamplingMask.full((2, 2))), y)
    empty = SamplingMask(np.zeros((2, 2), bool))
    np.testing.assert_array_equal(consistency_project(x, y, empty), x)
    one = SamplingMask.from_pairs((2, 2), [(0, 0)])
    np.testing.assert_array_equal(consistency_project(x, y, one), [[1, 0], [0, 0]])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), n1=st.integers(1, 30), t=st.integers(1, 20), ratio=st.floats(0.01, 1.0))
def test_mask_properties(seed, n1, t, ratio):
    m = sample_per_snapshot(n1, t, ratio, seed)
    assert np.all(m.indicator.sum(axis=0) == math.ceil(round(n1 * ratio, 9)))
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, n1, t))
    np.testing.assert_array_equal(apply_mask(consistency_project(x, y, m), m), apply_mask(y, m))


def test_observed_pairs_and_csv_roundtrip(tmp_path):
    m = sample_per_snapshot(6, 4, 0.5, 3)
    assert len(m.observed) == 12 == len(m)
    save_mask(m, tmp_path / "mask.csv")
    assert load_mask(tmp_path / "mask.csv", m.shape) == m
    assert (tmp_path / "mask.csv").read_bytes().startswith(b"edge,time\r\n")

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model
from uniquant.errors import DataError
from uniquant.pruner import PruneMask, apply_mask, magnitude_prune
from uniquant.weightstore import ModelWeights, flatten


def flat_model(values):
    return ModelWeights.from_arrays([("w", np.asarray(values, np.float32))])


def test_two_smallest_dropped():
    mask = magnitude_prune(flat_model([0.1, -0.5, 0.3, -0.2]), 0.5)
    assert mask.bits.tolist() == [False, True, True, False]


def test_zero_sparsity_keeps_all():
    mask = magnitude_prune(flat_model([0.0, 1.0, -2.0]), 0)
    assert mask.bits.all() and mask.kept_count == 3


def test_sparsity_range():
    m = flat_model([1.0, 2.0])
    for s in (-0.1, 1.0, 1.5):
        with pytest.raises(ValueError):
            magnitude_prune(m, s)


def test_ties_prune_lower_index_first():
    mask = magnitude_prune(flat_model([0.5, -0.5, 0.5, 1.0]), 0.5)
    assert mask.bits.tolist() == [False, False, True, True]


def test_prune_count_uses_decimal_sparsity():
    # 0.29 * 100 is 28.999999999999996 in binary floating point
    mask = magnitude_prune(flat_model(np.arange(1, 101)), 0.29)
    assert mask.kept_count == 71


def test_global_threshold_across_tensors():
    m = ModelWeights.from_arrays([("a", np.float32([5, 6, 7])), ("b", np.float32([0.1, 0.2, 8]))])
    mask = magnitude_prune(m, 0.5)
    assert mask.bits.tolist() == [False, True, True, False, False, True]


def test_sorting_oracle_1000_weights():
    m = flat_model(np.random.default_rng(0).standard_normal(1000))
    mask = magnitude_prune(m, 0.9)
    w = np.abs(flatten(m))
    assert mask.kept_count == 100
    assert w[mask.bits].min() >= w[~mask.bits].max()
    oracle = sorted(range(1000), key=lambda i: (w[i], i))[:900]
    assert sorted(np.flatnonzero(~mask.bits).tolist()) == sorted(oracle)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32), st.floats(0, 0.99))
def test_prune_idempotent_and_deterministic(seed, s):
    m = random_model(np.random.default_rng(seed))
    mask = magnitude_prune(m, s)
    assert mask == magnitude_prune(m, s)
    pruned = apply_mask(m, mask)
    assert magnitude_prune(pruned, s) == mask
    assert apply_mask(pruned, mask) == pruned


def test_apply_mask_examples():
    m = flat_model([1, 2])
    assert flatten(apply_mask(m, PruneMask(np.array([True, False])))).tolist() == [1, 0]
    assert apply_mask(m, PruneMask(np.ones(2, bool))) == m
    with pytest.raises(DataError):
        apply_mask(m, PruneMask(np.ones(3, bool)))


def test_apply_mask_writes_positive_zero():
    out = flatten(apply_mask(flat_model([-1.0, 2.0]), PruneMask(np.array([False, True]))))
    assert np.signbit(out[0]) == False  # noqa: E712


@settings(max_examples=50, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=200))
def test_mask_bitmap_roundtrip(bits):
    mask = PruneMask(np.array(bits))
    data = mask.to_bytes()
    assert len(data) == (len(bits) + 7) // 8
    assert PruneMask.from_bytes(data, len(bits)) == mask
    assert mask.kept_count == sum(bits)


def test_mask_bitmap_layout():
    # flattening order, most significant bit first, zero padded
    assert PruneMask(np.array([True, False, True])).to_bytes() == bytes([0b10100000])

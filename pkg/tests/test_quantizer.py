import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model
from uniquant.errors import DataError
from uniquant.pruner import PruneMask
from uniquant.quantizer import (
    Codebook,
    OffsetMode,
    QuantConfig,
    build_codebook,
    check_consistency,
    decode_points,
    dequantize,
    deployed_flat,
    gen_dither,
    lattice_quantize,
    quantize_model,
    quantize_vectors,
    round_half_away,
    vectorize,
)
from uniquant.weightstore import ModelWeights, flatten

B, C = OffsetMode.BOUNDARY, OffsetMode.CENTER


def f32_slack(values, delta):
    # f32 centers and f32 deployed weights add at most a few ulps on top of delta/2
    return 4 * float(np.spacing(np.float32(np.max(np.abs(values)) + delta)))


def test_config_validation():
    with pytest.raises(ValueError):
        QuantConfig(n=0)
    with pytest.raises(ValueError):
        QuantConfig(delta=0)
    with pytest.raises(ValueError):
        QuantConfig(delta=-1)
    assert QuantConfig(offset_mode=B).offset == pytest.approx(0.025, rel=1e-6)
    assert QuantConfig(offset_mode=C).offset == 0.0


def test_vectorize_examples():
    v, pad = vectorize([1, 2, 3, 4, 5], 2)
    assert v.tolist() == [[1, 2], [3, 4], [5, 0]] and pad == 1
    v, pad = vectorize([7], 1)
    assert v.tolist() == [[7]] and pad == 0
    v, pad = vectorize([1, 2, 3], 4)
    assert v.tolist() == [[1, 2, 3, 0]] and pad == 1
    with pytest.raises(ValueError):
        vectorize([1], 0)


def test_dither_plain_is_zero():
    assert gen_dither(QuantConfig(randomize=False), 3).tolist() == [0, 0, 0]


def test_dither_deterministic_and_seeded():
    a = gen_dither(QuantConfig(seed=7), 1000)
    assert np.array_equal(a, gen_dither(QuantConfig(seed=7), 1000))
    assert not np.array_equal(a, gen_dither(QuantConfig(seed=8), 1000))
    # a prefix of a longer sequence is the shorter sequence
    assert np.array_equal(a[:10], gen_dither(QuantConfig(seed=7), 10))


def test_dither_moments():
    # U(-1/2, 1/2): mean 0, variance 1/12
    u = gen_dither(QuantConfig(delta=1.0, seed=3), 10**6)
    assert u.min() >= -0.5 and u.max() < 0.5
    assert abs(u.mean()) < 0.002
    assert abs(u.var() / (1 / 12) - 1) < 0.02


def test_round_half_away():
    t = np.array([0.5, -0.5, 1.5, -1.5, 2.4999999999999996, 0.49999999999999994, -2.5, 0.0])
    assert round_half_away(t).tolist() == [1, -1, 2, -2, 2, 0, -3, 0]


def test_lattice_quantize_examples():
    assert lattice_quantize([0.4, -1.2], QuantConfig(1, 1.0, C, False)) == (0, -1)
    k = lattice_quantize([0.6], QuantConfig(1, 0.5, B, False))
    assert k == (1,)
    assert decode_points(np.array(k), QuantConfig(1, 0.5, B, False)).tolist() == [0.75]
    assert lattice_quantize([0.5], QuantConfig(1, 1.0, C, False)) == (1,)


def test_lattice_quantize_rejects_nonfinite():
    with pytest.raises(DataError):
        lattice_quantize([np.nan], QuantConfig())
    with pytest.raises(DataError):
        lattice_quantize([1.0], QuantConfig(), U=np.inf)


def test_build_codebook_examples():
    cfg = QuantConfig(1, 1.0, C, False)
    book, sym = build_codebook(np.array([[0], [1], [0]]), cfg)
    assert book.size == 2
    assert book.centers.tolist() == [[0.0], [1.0]]
    assert sym.tolist() == [0, 1, 0]
    assert book.index_of == {(0,): 0, (1,): 1}
    book, sym = build_codebook(np.array([[3, 3]] * 5), QuantConfig(2, 1.0))
    assert book.size == 1
    with pytest.raises(ValueError):
        build_codebook(np.zeros((0, 1), dtype=np.int64), cfg)


def test_build_codebook_first_appearance_order():
    book, sym = build_codebook(np.array([[5], [-2], [5], [0], [-2]]), QuantConfig(1, 1.0))
    assert [p[0] for p in book.index_of] == [5, -2, 0]
    assert sym.tolist() == [0, 1, 0, 2, 1]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([B, C]), st.floats(0.01, 2.0))
def test_center_within_half_bin_of_dithered_vector(seed, mode, delta):
    rng = np.random.default_rng(seed)
    cfg = QuantConfig(2, delta, mode, True, seed)
    v = rng.uniform(-1, 1, size=(100, 2))
    u = gen_dither(cfg, 100)
    book, sym = build_codebook(quantize_vectors(v, cfg, u), cfg)
    err = book.centers[sym].astype(np.float64) - (v + u[:, None])
    assert np.all(np.abs(err) <= cfg.delta / 2 + f32_slack(v, cfg.delta))
    assert book.size <= 100
    assert set(sym.tolist()) == set(range(book.size))


def test_quantize_model_examples():
    m = ModelWeights.from_arrays([("w", np.array([0.1, 0.2, 0.3, 0.4], np.float32))])
    qm = quantize_model(m, QuantConfig(n=2))
    assert qm.symbols.size == 2 and qm.pad_count == 0
    m5 = ModelWeights.from_arrays([("w", np.arange(5, dtype=np.float32))])
    mask = PruneMask(np.array([True, False, True, True, False]))
    qm = quantize_model(m5, QuantConfig(n=2, delta=1.0, randomize=False), mask)
    assert qm.vector_count == 2 and qm.pad_count == 1
    # survivors 0,2,3 in order, then a pad zero
    assert qm.codebook.centers[qm.symbols].reshape(-1).tolist() == [0, 2, 3, 0]
    with pytest.raises(DataError):
        quantize_model(m5, QuantConfig(), PruneMask(np.ones(4, bool)))


def test_dequantize_eq5_arithmetic():
    # q = [1.0, 2.0], U = 0.3 gives [0.7, 1.7]
    cfg = QuantConfig(2, 1.0, C, True, 0)
    U = gen_dither(cfg, 1)[0]
    m = ModelWeights.from_arrays([("w", np.array([1.0, 2.0], np.float32) - np.float32(U))])
    qm = quantize_model(m, cfg)
    assert qm.codebook.centers.tolist() == [[1.0, 2.0]]
    np.testing.assert_allclose(deployed_flat(qm), [1.0 - U, 2.0 - U], rtol=0, atol=1e-15)


def test_plain_dequantize_gives_centers():
    m = random_model(np.random.default_rng(0))
    qm = quantize_model(m, QuantConfig(3, 0.1, B, False))
    centers = qm.codebook.centers[qm.symbols].reshape(-1)[: qm.quantized_count]
    assert np.array_equal(flatten(dequantize(qm)), centers)


def test_roundtrip_error_bound_1000_weights():
    m = ModelWeights.from_arrays([("w", np.random.default_rng(1).standard_normal(1000).astype(np.float32))])
    for mode in (B, C):
        qm = quantize_model(m, QuantConfig(1, 0.1, mode, True, 5))
        err = flatten(dequantize(qm)).astype(np.float64) - flatten(m)
        assert np.max(np.abs(err)) <= 0.05 + f32_slack(flatten(m), 0.1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 6), st.floats(1e-3, 3.0), st.sampled_from([B, C]), st.booleans(),
       st.floats(0, 0.9))
def test_error_bound_property(seed, n, delta, mode, rand, keep_frac):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    mask = PruneMask(rng.random(m.total_count) >= keep_frac) if keep_frac > 0 else None
    if mask is not None and mask.kept_count == 0:
        mask = None
    qm = quantize_model(m, QuantConfig(n, delta, mode, rand, seed), mask)
    check_consistency(qm)
    w = flatten(m).astype(np.float64)
    out = flatten(dequantize(qm)).astype(np.float64)
    keep = np.ones(w.size, bool) if mask is None else mask.bits
    assert np.all(np.abs(out[keep] - w[keep]) <= qm.config.delta / 2 + f32_slack(w, qm.config.delta))
    assert np.all(out[~keep] == 0)
    assert qm.codebook.size <= qm.vector_count


def test_pad_slots_within_bound_before_truncation():
    cfg = QuantConfig(4, 0.3, B, True, 2)
    m = ModelWeights.from_arrays([("w", np.float32([0.11, -0.7, 0.2, 0.05, 0.9]))])
    qm = quantize_model(m, cfg)
    u = gen_dither(cfg, qm.vector_count)
    slots = qm.codebook.centers[qm.symbols].astype(np.float64) - u[:, None]
    padded, _ = vectorize(flatten(m), 4)
    assert np.all(np.abs(slots - padded) <= cfg.delta / 2 + 1e-7)


def test_point_mass_at_zero_asymmetry():
    m = ModelWeights.from_arrays([("w", np.zeros(50, np.float32))])
    qa = quantize_model(m, QuantConfig(1, 0.5, B, False))
    qb = quantize_model(m, QuantConfig(1, 0.5, C, False))
    assert np.all(np.abs(flatten(dequantize(qa))) == 0.25)
    assert np.all(flatten(dequantize(qb)) == 0)


def test_degenerate_single_bin():
    m = random_model(np.random.default_rng(2))
    qm = quantize_model(m, QuantConfig(1, 1000.0, C, False))
    assert qm.codebook.size == 1
    assert np.all(flatten(dequantize(qm)) == 0)


def test_quantize_deterministic():
    m = random_model(np.random.default_rng(3))
    cfg = QuantConfig(2, 0.2, B, True, 99)
    assert quantize_model(m, cfg) == quantize_model(m, cfg)
    assert flatten(dequantize(quantize_model(m, cfg))).tobytes() == flatten(dequantize(quantize_model(m, cfg))).tobytes()


def test_consistency_check():
    m = random_model(np.random.default_rng(4))
    qm = quantize_model(m, QuantConfig(1, 0.5))
    bad = qm.with_codebook(Codebook(qm.codebook.centers[:1]))
    if qm.codebook.size > 1:
        with pytest.raises(DataError):
            dequantize(bad)

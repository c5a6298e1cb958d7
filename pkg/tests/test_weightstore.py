import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from uniquant.errors import BadMagicError, EmptyModelError, ShapeMismatchError, TruncatedError
from uniquant.weightstore import (
    ModelWeights,
    TensorRecord,
    dumps,
    flatten,
    load_model,
    loads,
    save_model,
    scatter,
)


def one(name, values, shape=None):
    values = np.asarray(values, dtype=np.float32)
    return TensorRecord(name, shape or values.shape, values)


def test_single_tensor_file_roundtrip(tmp_path):
    m = ModelWeights([one("fc1", [1, 2, 3, 4], (2, 2))])
    path = tmp_path / "m.lpwm"
    save_model(m, path)
    back = load_model(path)
    assert back.total_count == 4
    assert back == m
    np.testing.assert_array_equal(back["fc1"].array(), [[1, 2], [3, 4]])


def test_save_load_is_byte_identical(tmp_path):
    m = ModelWeights([one("a", np.arange(6) / 7, (3, 2)), one("b", [5.5])])
    p1, p2 = tmp_path / "1", tmp_path / "2"
    save_model(m, p1)
    save_model(load_model(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_empty_model_rejected():
    with pytest.raises(EmptyModelError):
        ModelWeights([])
    # a file declaring zero tensors
    blob = b"LPWM" + (1).to_bytes(2, "little") + (0).to_bytes(4, "little")
    with pytest.raises(EmptyModelError):
        loads(blob)


def test_truncated_values():
    blob = dumps(ModelWeights([one("x", [1, 2, 3, 4])]))
    with pytest.raises(TruncatedError):
        loads(blob[:-4])


def test_bad_magic_and_missing_file(tmp_path):
    blob = dumps(ModelWeights([one("x", [1])]))
    with pytest.raises(BadMagicError):
        loads(b"XXXX" + blob[4:])
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "nope")


def test_error_kinds_are_distinct():
    kinds = {EmptyModelError, BadMagicError, TruncatedError, ShapeMismatchError}
    assert len(kinds) == 4
    for a in kinds:
        for b in kinds - {a}:
            assert not issubclass(a, b)


def test_trailing_bytes_rejected():
    blob = dumps(ModelWeights([one("x", [1, 2])]))
    with pytest.raises(ShapeMismatchError):
        loads(blob + b"\0\0\0\0")


def test_record_invariants():
    with pytest.raises(ShapeMismatchError):
        one("x", [1, 2, 3], (2, 2))
    with pytest.raises(ValueError):
        ModelWeights([one("x", [1]), one("x", [2])])


def test_flatten_examples():
    assert flatten(ModelWeights([one("A", [1, 2]), one("B", [3])])).tolist() == [1, 2, 3]
    assert flatten(ModelWeights([one("A", [5])])).tolist() == [5]
    # stored order wins over name order
    assert flatten(ModelWeights([one("B", [3]), one("A", [1, 2])])).tolist() == [3, 1, 2]


def test_flatten_is_row_major():
    m = ModelWeights([one("w", np.arange(6).reshape(2, 3))])
    assert flatten(m).tolist() == [0, 1, 2, 3, 4, 5]


def test_scatter_examples():
    tmpl = ModelWeights([one("a", [0, 0]), one("b", [0])])
    out = scatter(tmpl, [9, 8, 7])
    assert out["a"].values.tolist() == [9, 8]
    assert out["b"].values.tolist() == [7]
    with pytest.raises(ShapeMismatchError):
        scatter(tmpl, [1, 2])


shapes = st.lists(hnp.array_shapes(min_dims=1, max_dims=3, max_side=5), min_size=1, max_size=4)


@st.composite
def models(draw):
    recs = []
    for k, shape in enumerate(draw(shapes)):
        vals = draw(hnp.arrays(np.float32, shape, elements=st.floats(width=32, allow_nan=False)))
        recs.append(TensorRecord(f"t{k}", shape, vals))
    return ModelWeights(recs)


@settings(max_examples=60, deadline=None)
@given(models())
def test_scatter_inverts_flatten(m):
    back = scatter(m, flatten(m))
    assert back == m
    assert dumps(back) == dumps(m)


@settings(max_examples=60, deadline=None)
@given(models())
def test_dumps_loads_identity(m):
    blob = dumps(m)
    assert loads(blob) == m
    assert dumps(loads(blob)) == blob


@settings(max_examples=40, deadline=None)
@given(models(), st.data())
def test_any_truncation_errors(m, data):
    blob = dumps(m)
    cut = data.draw(st.integers(0, len(blob) - 1))
    with pytest.raises((TruncatedError, BadMagicError, ShapeMismatchError, EmptyModelError)):
        loads(io.BytesIO(blob[:cut]).getvalue())

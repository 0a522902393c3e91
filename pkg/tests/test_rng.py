import numpy as np
import pytest
from hypothesis import given, strategies as st

from nsadm.rng import TAG_DEGRADE, TAG_SCENE, as_stream, stream


def test_same_key_same_draws():
    a = stream(TAG_SCENE, 7, 3).standard_normal(100)
    b = stream(TAG_SCENE, 7, 3).standard_normal(100)
    assert np.array_equal(a, b)


def test_different_keys_decorrelate():
    a = stream(TAG_SCENE, 7, 3).standard_normal(4096)
    b = stream(TAG_SCENE, 7, 4).standard_normal(4096)
    c = stream(TAG_DEGRADE, 7, 3).standard_normal(4096)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.08
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.08


@given(st.lists(st.integers(min_value=0, max_value=2**63 - 1),
                min_size=1, max_size=4))
def test_any_nonnegative_key_accepted(key):
    gen = stream(*key)
    assert np.isfinite(gen.standard_normal())


def test_negative_key_rejected():
    with pytest.raises(ValueError):
        stream(3, -1)


def test_as_stream_accepts_int_tuple_generator():
    base = stream(5, 6)
    assert np.array_equal(as_stream((5, 6)).standard_normal(8),
                          stream(5, 6).standard_normal(8))
    assert as_stream(base) is base
    assert np.array_equal(as_stream(9).standard_normal(8),
                          stream(9).standard_normal(8))


def test_spawn_substreams_are_stable():
    parent_a = stream(11, 2)
    parent_b = stream(11, 2)
    subs_a = parent_a.spawn(2)
    subs_b = parent_b.spawn(2)
    for sa, sb in zip(subs_a, subs_b):
        assert np.array_equal(sa.standard_normal(16), sb.standard_normal(16))

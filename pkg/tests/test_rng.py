import numpy as np
import pytest
from scipy import stats

from utils.rng import MODULE_TAGS, StreamId, UniformBuffer, make_stream, normal_array, polar_normals, stream_for


def test_streams_are_reproducible_and_distinct():
    a = make_stream(7, 2, 3).random(8)
    b = make_stream(7, 2, 3).random(8)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, make_stream(7, 2, 4).random(8))
    assert not np.array_equal(a, make_stream(7, 1, 3).random(8))
    assert not np.array_equal(a, make_stream(8, 2, 3).random(8))


def test_key_layout():
    raw = np.random.Generator(np.random.Philox(key=np.array([42, (2 << 48) | 5], dtype=np.uint64)))
    np.testing.assert_array_equal(make_stream(42, 2, 5).random(4), raw.random(4))


def test_stream_id_and_module_lookup():
    assert StreamId(1, MODULE_TAGS["langevin"], 9).generator().random() == stream_for(1, "langevin", 9).random()
    with pytest.raises(KeyError):
        stream_for(1, "nope")


@pytest.mark.parametrize("tag, index", [(1 << 16, 0), (1, 1 << 48), (1, -1)])
def test_out_of_range_keys(tag, index):
    with pytest.raises(ValueError):
        make_stream(0, tag, index)


def test_polar_normals_distribution():
    z = polar_normals(make_stream(3, 2, 0), 200_000)
    assert z.shape == (200_000,)
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1.0) < 0.015
    assert stats.kstest(z, "norm").pvalue > 1e-4


def test_normal_array_shape_and_determinism():
    first = normal_array(make_stream(0, 2, 1), (3, 5))
    second = normal_array(make_stream(0, 2, 1), (3, 5))
    assert first.shape == (3, 5)
    np.testing.assert_array_equal(first, second)


def test_uniform_buffer_refills_in_fixed_blocks():
    buffer = UniformBuffer(make_stream(0, 1, 0), size=16)
    block = buffer.take()
    assert block.shape == (16,)
    assert np.all((block >= 0.0) & (block < 1.0))
    assert not np.array_equal(block, buffer.take())

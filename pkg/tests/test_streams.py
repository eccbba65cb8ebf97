import numpy as np
import pytest

from micromacro.streams import shard_streams, stream


def test_same_labels_same_draws():
    assert np.array_equal(stream(5, "a", 1).random(10), stream(5, "a", 1).random(10))


def test_labels_separate_streams():
    assert not np.array_equal(stream(5, "a", 1).random(10), stream(5, "a", 2).random(10))
    assert not np.array_equal(stream(5, "a").random(10), stream(6, "a").random(10))


def test_shard_independent_of_count():
    first = [g.random(4) for g in shard_streams(stream(1), 3)]
    more = [g.random(4) for g in shard_streams(stream(1), 7)]
    for a, b in zip(first, more):
        assert np.array_equal(a, b)


def test_seed_range():
    with pytest.raises(ValueError):
        stream(-1)
    with pytest.raises(ValueError):
        stream(2**64)
    with pytest.raises(ValueError):
        stream(1, -3)

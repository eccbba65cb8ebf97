"""Counter-based random streams.

Every stochastic step receives an explicit :class:`numpy.random.Generator`.
Runs derive them from one global seed with :func:`stream`: the seed and a
tuple of integer/str labels (scenario, section, shard index, ...) form a
``SeedSequence`` whose output keys a Philox counter-based generator. Two
streams with different labels are statistically independent, and a shard's
stream does not depend on how many other shards exist or in which order they
run.
"""
import zlib

import numpy as np


def _label_key(label):
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("stream labels must be non-negative")
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


def stream(seed, *labels):
    """Return the generator for ``(seed, *labels)``.

    >>> a = stream(7, "fig2", 0).standard_normal(3)
    >>> b = stream(7, "fig2", 0).standard_normal(3)
    >>> bool((a == b).all())
    True
    """
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    ss = np.random.SeedSequence(seed, spawn_key=tuple(_label_key(l) for l in labels))
    return np.random.Generator(np.random.Philox(ss))


def shard_streams(rng, n_shards):
    """Yield one generator per shard, keyed by the shard index.

    A base key is drawn once from ``rng``; shard ``k`` gets
    ``stream(base, "shard", k)``, so its draws do not depend on the number of
    shards or on the order in which they are consumed.
    """
    base = int(rng.integers(0, 2**63))
    for k in range(n_shards):
        yield stream(base, "shard", k)

"""Counter-based derivation of random streams

Every random draw in a simulation comes from a generator keyed by
``(master seed, run, stream tag, step, node, ...)``. The key is passed to
:py:class:`numpy.random.SeedSequence` as its spawn key, so a stream depends
only on its key and never on how many other streams were created before it.
This keeps results independent of node iteration order and of the number of
worker processes.
"""
import numpy as np

SENSING = 1
MS = 2
DPPHDF = 3
LOCAL = 4

FILTER_TAGS = {
    'ms': MS,
    'dpphdf': DPPHDF,
    'local': LOCAL,
}


def substream(seed: int, run: int, *key: int) -> np.random.SeedSequence:
    """Return the seed sequence for the stream `key` of run `run`
    """
    spawn_key = (int(run),) + tuple(int(k) for k in key)
    if any(k < 0 for k in spawn_key):
        raise ValueError(f"Stream keys must be non-negative, got {spawn_key}")
    return np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key)


def generator(seed: int, run: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(substream(seed, run, *key))

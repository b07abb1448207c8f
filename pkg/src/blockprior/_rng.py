import numpy as np


def substream(seed, index):
    """Counter-based generator keyed by ``(seed, index)``.

    Independent of call order, so parallel workers can each build their own.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))

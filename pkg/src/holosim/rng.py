"""Deterministic random-stream derivation.

Every Monte-Carlo trial draws from its own generator derived from
``(seed, *lineage)`` so that results do not depend on execution order or
on how trials are distributed over worker threads.
"""

import numpy as np


def stream(seed, *lineage):
    """Return an independent ``numpy.random.Generator`` for one trial.

    Parameters
    ----------
    seed : int
        Global experiment seed.
    lineage : ints
        Position of this stream in the experiment (e.g. trial index,
        user index).  Streams with different lineages are statistically
        independent; the same ``(seed, *lineage)`` always yields the
        same draws.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in lineage))
    return np.random.Generator(np.random.PCG64(ss))

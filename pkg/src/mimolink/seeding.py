"""Counter-based derivation of independent random streams.

Every stream is identified by the root seed plus a tuple of integer counters,
e.g. ``(point, trial, purpose)``.  Streams come from
:class:`numpy.random.SeedSequence` with the counters as ``spawn_key``, so the
stream for a given key is the same whichever worker computes it and in
whatever order.
"""

import numpy as np

# purpose tags, the last counter of a key
CHANNEL = 0
LINK = 1
CAPACITY = 2


def derive(root_seed, *counters):
    """Return a ``numpy.random.Generator`` for ``(root_seed, *counters)``."""
    if root_seed < 0:
        raise ValueError("root seed must be non-negative")
    seq = np.random.SeedSequence(entropy=int(root_seed), spawn_key=tuple(int(c) for c in counters))
    return np.random.Generator(np.random.PCG64(seq))

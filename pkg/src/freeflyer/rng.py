"""Deterministic random-stream plumbing.

Every source of randomness in the toolkit draws from a stream obtained
through :func:`substream`, keyed by a master seed plus an integer path
(for example ``(env_index, consumer_id)``).  Streams are backed by the
counter-based Philox generator, so results do not depend on worker
scheduling: each consumer owns its stream exclusively and its in-stream
draw order is fixed by the single-threaded environment loop.
"""

from __future__ import annotations

import numpy as np

# Stable consumer ids used when deriving per-environment substreams.
CONSUMER_INIT = 0
CONSUMER_FAULTS = 1
CONSUMER_DISTURBANCE = 2
CONSUMER_POLICY = 3
CONSUMER_EPISODE = 4


def substream(master_seed: int, *path: int) -> np.random.Generator:
    """Return the Philox generator for (master_seed, *path).

    The same (seed, path) always yields an identical stream; distinct
    paths yield statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))

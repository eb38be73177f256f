"""Counter-style seeded random streams.

Every stochastic component draws from a stream keyed by (master seed,
integer path). Streams are independent of each other and of execution
order, so a trial is reproducible bit-for-bit regardless of how the
per-participant work is scheduled.
"""

from __future__ import annotations

import numpy as np

# Fixed purpose codes for substreams; keeping them in one place avoids
# accidental collisions between components.
POPULATION = 1
STEPS = 2
POLICY = 3
MESSAGE = 4
FEEDBACK = 5
ATTRITION = 6
LEARNER = 7


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return a generator for the substream identified by ``path``.

    The same (seed, path) always yields the same stream; distinct paths
    yield statistically independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))

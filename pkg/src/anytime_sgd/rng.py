"""Named independent random streams.

Every stochastic draw in the library comes from a stream keyed by
(seed, purpose, *indices).  Streams are independent of each other, so the
number of workers or epochs in a run never perturbs the draws seen by any
single (worker, epoch) pair.
"""

import numpy as np

# purpose tags; keep values stable, they are part of run reproducibility
DATA = 0
SAMPLE = 1
COMPUTE = 2
COMM = 3
TRIAL = 4
ESTIMATE = 5


def stream(seed: int, purpose: int, *indices: int) -> np.random.Generator:
    """Return the generator for a named stream.

    Repeated calls with identical arguments return generators producing
    identical draw sequences.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = (purpose,) + tuple(int(i) for i in indices)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))

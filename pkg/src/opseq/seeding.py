"""Deterministic seed derivation.

Every randomized stage (scrambling, HMM restarts, per-sample feature
training, classifier internals) draws its seed through ``derive_seed`` so
that serial and parallel schedules produce bit-identical results.
"""

import numpy as np


def derive_seed(master: int, *key: int) -> int:
    """Derive a stable child seed from a master seed and an index path.

    Built on ``numpy.random.SeedSequence``, which is documented to be
    reproducible across platforms and numpy versions.
    """
    spawn_key = tuple(int(k) for k in key)
    return int(np.random.SeedSequence(int(master), spawn_key=spawn_key).generate_state(1)[0])

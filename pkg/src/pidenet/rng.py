"""Counter-based random streams.

Every stream is a Philox generator keyed by ``(master_seed, *keys)``, so the
draws for trial ``i`` do not depend on how many other trials exist or on the
order in which worker threads pick them up.
"""

from __future__ import annotations

import numpy as np

# stream tags, one per independent use of randomness
TERMINAL = 1
RUNNING = 2
ORACLE = 3
SELECTION = 4
PROBES = 5
STUDY = 6
COEFF = 7
ERROR_METRIC = 8


def _seed_sequence(master: int, keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))


def stream(master: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(_seed_sequence(master, keys)))


def derive_seed(master: int, *keys: int) -> int:
    """63-bit integer seed for the child stream ``(master, *keys)``."""
    state = _seed_sequence(master, keys).generate_state(1, dtype=np.uint64)[0]
    return int(state >> np.uint64(1))

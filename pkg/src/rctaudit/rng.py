"""Counter-based random streams.

Every stochastic routine in the package derives one generator per unit of
work (per Monte-Carlo draw, per replicate, per restart) from a root seed and
an integer path. Results therefore depend only on (seed, work index), never
on evaluation order or worker count.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return an independent generator for the work unit addressed by `path`."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.default_rng(ss)


def derive_seed(seed: int, *path: int) -> int:
    """Deterministically derive a child seed for an independent pipeline stage."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1)[0])


def random_equal_split(n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw one assignment uniformly from the equal-split set.

    Exactly floor(n/2) subjects are treated; each of the C(n, floor(n/2))
    subsets is equally likely.
    """
    bits = np.zeros(n, dtype=np.int8)
    bits[rng.permutation(n)[: n // 2]] = 1
    return bits

"""Seed derivation and counter-based random streams.

Every random draw in the pipeline comes from a Philox generator keyed by a
seed plus a short tuple of integers naming the consumer. A consumer draws all
the numbers for one phase in a single vectorised call, so the result depends
only on the key, never on how work is scheduled.
"""

import hashlib

import numpy as np

# Stream labels
PATCHMATCH = 1
SPECKLE = 2
DRIFT = 3
VESSELS = 4
SPLIT = 5
SCENE = 6

_SEED_MASK = (1 << 64) - 1


def derive_seed(master_seed: int, scene_id: str) -> int:
    """
    Derive a per-scene 64-bit seed from the master seed and the scene id.

    Args:
        master_seed: Dataset-wide seed
        scene_id: Unique scene identifier

    Returns:
        An unsigned 64-bit integer
    """
    digest = hashlib.sha256(f"{master_seed}:{scene_id}".encode()).hexdigest()[:16]
    return int(digest, 16)


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Return an independent generator for ``seed`` and the given stream keys."""
    entropy = [int(seed) & _SEED_MASK, *(int(k) for k in keys)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def entropy_seed() -> int:
    """Fresh 64-bit seed from OS entropy (``--seed random``)."""
    return int(np.random.SeedSequence().entropy) & _SEED_MASK

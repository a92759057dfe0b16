"""Named random streams derived from one master seed.

Every stochastic component draws from its own named stream, so adding or
removing a component never perturbs the draws seen by another one.
"""

import hashlib

import numpy as np


def derive_seed(master_seed: int, stream: str) -> int:
    """Stable 63-bit seed for a named stream under a master seed."""
    digest = hashlib.sha256(f"{master_seed}:{stream}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def stream_rng(master_seed: int, stream: str) -> np.random.Generator:
    """Generator for the named stream; same (seed, name) gives the same draws."""
    return np.random.default_rng(derive_seed(master_seed, stream))

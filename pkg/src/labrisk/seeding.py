"""Deterministic child seeds so results do not depend on execution order."""

import numpy as np


def derive_seed(*parts):
    """32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])

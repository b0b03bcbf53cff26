"""Named random substreams derived from a single integer seed.

Every consumer asks for ``rng_for(seed, name)``; the generator is numpy's
PCG64 seeded with ``SeedSequence([seed, crc32(name)])``, so components can be
re-run in isolation and results do not depend on call order.
"""

import zlib

import numpy as np


def _key(name):
    return zlib.crc32(name.encode("utf-8"))


def rng_for(seed, name):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), _key(name)])))


def child_seed(seed, name):
    """Integer seed for a named child stream."""
    return int(np.random.SeedSequence([int(seed), _key(name)]).generate_state(1)[0])

"""Named RNG substreams derived from one master seed.

Every source of randomness in a run is a named substream, so individual
components (population init, variation, baseline search, test-set
generation) can be re-run in isolation and still reproduce.
"""

import zlib

import numpy as np

# Substream names used by the training loop and CLI.
STREAM_INIT_AP = "init-ap"
STREAM_INIT_IP = "init-ip"
STREAM_EVOLVE_ALG = "evolve-alg"
STREAM_EVOLVE_INS = "evolve-ins"
STREAM_BASELINE = "baseline"
STREAM_TEST_GEN = "test-gen"


def substream(master_seed: int, name: str) -> np.random.Generator:
    """Return a Generator for the given substream name.

    The same (master_seed, name) pair always yields an identical stream,
    and distinct names yield statistically independent streams.
    """
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([master_seed, tag]))

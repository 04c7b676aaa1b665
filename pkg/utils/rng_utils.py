"""
Counter-based random streams for reproducible coupled simulations

Every draw of the library comes from a stream keyed by
(master seed, replication, step, role). The key is folded through the
splitmix64 finalizer and used as the key of a Philox generator, so a stream
depends only on its key: not on call order, worker count or which other
streams were opened before it.
"""

import hashlib
import logging

import numpy as np

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1

# Role tags used across the package
ROLE_DRAW = "draw"
ROLE_DRAW_B = "draw-b"
ROLE_INIT_A = "init-a"
ROLE_INIT_B = "init-b"
ROLE_PROBLEM = "problem"
ROLE_SAMPLER = "sampler"


def splitmix64(z):
    """
    Apply the splitmix64 increment-and-finalize step

    Args:
        z (int): 64-bit input (higher bits are masked off)

    Returns:
        int: Mixed 64-bit value
    """
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def role_code(role):
    """Stable 64-bit code for a role tag (independent of PYTHONHASHSEED)"""
    digest = hashlib.blake2b(role.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream_key(master_seed, replication, step, role):
    """
    Derive the 64-bit key of the stream (master_seed, replication, step, role)

    Args:
        master_seed (int): Experiment master seed
        replication (int): Replication index r
        step (int): Step or epoch index k
        role (str): Role tag, e.g. "draw" or "init-a"

    Returns:
        int: 64-bit stream key
    """
    key = splitmix64(int(master_seed) & MASK64)
    for part in (int(replication), int(step), role_code(role)):
        key = splitmix64(key ^ (part & MASK64))
    return key


def derive_rng(master_seed, replication, step, role):
    """
    Open the random stream for (master_seed, replication, step, role)

    Identical keys give identical draws; distinct keys give independent
    Philox streams.

    Returns:
        numpy.random.Generator: Generator backed by a keyed Philox bit generator
    """
    key = stream_key(master_seed, replication, step, role)
    return np.random.Generator(np.random.Philox(key=key))

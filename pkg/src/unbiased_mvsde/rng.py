"""Counter-based random streams.

Every stream is addressed by ``(master_seed, replicate_id, role, counter)``
and realised as a Philox generator seeded through ``numpy.random.SeedSequence``
with the last three fields as spawn key.  No generator state is shared, so
replicates and blocks can be evaluated in any order or on any thread.

Gaussian draws use numpy's ``Generator.standard_normal`` (ziggurat method)
on the Philox bit stream; outputs for a given key are fixed for a given
numpy release.
"""

import os
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

SEED_ENV = "MV_SEED"


class Role(IntEnum):
    PARTICLE_FINE = 0
    PARTICLE_COARSE_SHARED = 1
    CHAIN = 2
    LEVEL_DRAW = 3
    TIME_DRAW = 4
    INIT_DRAW = 5


@dataclass(frozen=True)
class StreamKey:
    master_seed: int
    replicate_id: int = 0
    role: Role = Role.PARTICLE_FINE
    counter: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ValueError(f"master_seed must be an unsigned 64-bit integer, got {self.master_seed}")
        if self.replicate_id < 0 or self.counter < 0:
            raise ValueError("replicate_id and counter must be non-negative")

    def with_role(self, role, counter=0):
        return replace(self, role=Role(role), counter=counter)

    def at(self, counter):
        return replace(self, counter=counter)

    def generator(self):
        ss = np.random.SeedSequence(
            int(self.master_seed),
            spawn_key=(int(self.replicate_id), int(self.role), int(self.counter)),
        )
        return np.random.Generator(np.random.Philox(ss))


def gaussian_increments(key, count, dim, delta):
    """``count`` i.i.d. N(0, delta * I_dim) vectors, shape ``(count, dim)``."""
    if not delta > 0:
        raise ValueError(f"increment variance must be positive, got {delta}")
    if count < 1:
        raise ValueError("count must be at least 1")
    return key.generator().standard_normal((count, dim)) * np.sqrt(delta)


def coarsen(fine):
    """Pairwise sums along the first axis: ``out[k] = fine[2k] + fine[2k+1]``."""
    fine = np.asarray(fine, dtype=float)
    if fine.shape[0] % 2:
        raise ValueError(f"cannot coarsen an odd number ({fine.shape[0]}) of increments")
    return fine[0::2] + fine[1::2]


def validate_pmf(pmf):
    pmf = np.asarray(pmf, dtype=float)
    if pmf.ndim != 1 or pmf.size == 0:
        raise ValueError("pmf must be a non-empty 1-d sequence")
    if np.any(~np.isfinite(pmf)) or np.any(pmf < 0):
        raise ValueError("pmf entries must be finite and non-negative")
    if abs(pmf.sum() - 1.0) > 1e-12:
        raise ValueError(f"pmf sums to {pmf.sum():.17g}, not 1")
    return pmf


def categorical(key, pmf):
    """Index ``i`` drawn with probability ``pmf[i]`` from the stream ``key``."""
    pmf = validate_pmf(pmf)
    u = key.generator().random()
    idx = int(np.searchsorted(np.cumsum(pmf), u, side="right"))
    idx = min(idx, pmf.size - 1)
    # guard against rounding at the top of the cumulative sum
    while pmf[idx] == 0.0:
        idx -= 1
    return idx


def resolve_seed(flag=None, config_seed=None, default=0):
    """Seed precedence: command-line flag, then ``MV_SEED``, then config, then default."""
    if flag is not None:
        return int(flag)
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        return int(env)
    if config_seed is not None:
        return int(config_seed)
    return default

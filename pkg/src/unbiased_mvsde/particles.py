"""Interacting particle approximation of the mean-field law, one unit of time at a time.

A block at level ``l`` performs ``2**l`` Euler-Maruyama sub-steps of size
``2**-l`` for all particles, recording the pre-step cloud of every sub-step.
The coupled variant advances a level-``l`` system and a level-``l-1``
system whose particle ``i`` is driven by the pairwise sums of fine
particle ``i``'s increments.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from ._backend import use_numba
from .models import ConfigError, interaction_values
from .rng import Role, coarsen, gaussian_increments


class ParticleBlowUp(FloatingPointError):
    """A non-finite coordinate appeared during an Euler sub-step."""

    def __init__(self, t, k, i, where="particle"):
        self.t, self.k, self.i = t, k, i
        super().__init__(f"{where} blow-up at (t={t}, k={k}, i={i})")


@dataclass(frozen=True)
class LevelParams:
    l: int

    def __post_init__(self):
        if self.l < 0:
            raise ConfigError(f"level must be non-negative, got {self.l}")

    @property
    def delta(self):
        return 2.0 ** -self.l

    @property
    def steps_per_unit(self):
        return 2 ** self.l


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    particles: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.particles, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.shape[0] == 0:
            raise ValueError("empty empirical measure")
        object.__setattr__(self, "particles", arr)

    @property
    def n(self):
        return self.particles.shape[0]

    @property
    def dim(self):
        return self.particles.shape[1]

    @classmethod
    def dirac(cls, point, n):
        point = np.asarray(point, dtype=float).ravel()
        return cls(np.tile(point, (n, 1)))


@dataclass(frozen=True, eq=False)
class LawBlock:
    """Pre-step clouds at times ``t-1 + k*delta`` for ``k = 0..2**l - 1``.

    ``hbar`` caches the affine interaction statistics ``mean_j h_m(X^j)`` per
    sub-step, shape ``(2**l, 2)``; ``None`` for non-affine models.
    """

    level: LevelParams
    snapshots: np.ndarray
    hbar: Optional[np.ndarray] = None

    def snapshot(self, k):
        return EmpiricalMeasure(self.snapshots[k])

    def __len__(self):
        return self.snapshots.shape[0]


def _as_cloud(state):
    if isinstance(state, EmpiricalMeasure):
        return state.particles
    arr = np.asarray(state, dtype=float)
    return arr[:, None] if arr.ndim == 1 else arr


def _affine_stats(model, X):
    out = np.zeros(2)
    for m, affine in enumerate((model.affine1, model.affine2)):
        if affine is not None:
            out[m] = np.mean(affine[1](X))
    return out


def _advance_numpy(model, x, incs, noise_scale, t):
    S, N, d = incs.shape
    dt = 1.0 / S
    snaps = np.empty_like(incs)
    affine = model.affine1 is not None and model.affine2 is not None
    hbar = np.empty((S, 2)) if affine else None
    for k in range(S):
        snaps[k] = x
        if affine:
            hbar[k] = _affine_stats(model, x)
            s1 = model.affine1[0](x) * hbar[k, 0]
            s2 = model.affine2[0](x) * hbar[k, 1]
        else:
            s1 = interaction_values(model, 1, x, x)
            s2 = interaction_values(model, 2, x, x)
        noise = np.einsum("nij,nj->ni", model.diffusion(x, s2), incs[k])
        x = x + model.drift(x, s1) * dt + noise_scale * noise
        bad = ~np.isfinite(x)
        if bad.any():
            raise ParticleBlowUp(t, k, int(np.argwhere(bad)[0, 0]))
    return snaps, hbar, x


def advance_block(model, level, state, increments, t=0):
    """One unit-time block driven by explicit increments of shape ``(2**l, N, d)``.

    Returns ``(LawBlock, end_state)``.
    """
    level = level if isinstance(level, LevelParams) else LevelParams(level)
    x = np.array(_as_cloud(state), dtype=float)
    incs = np.ascontiguousarray(increments, dtype=float)
    if incs.shape != (level.steps_per_unit,) + x.shape:
        raise ValueError(f"increments shape {incs.shape} does not match "
                         f"{(level.steps_per_unit,) + x.shape}")
    if x.shape[1] != model.dim:
        raise ValueError(f"state dimension {x.shape[1]} does not match model dimension {model.dim}")
    noise_scale = model.noise_scale(level.delta)
    if use_numba(model):
        snaps = np.empty_like(incs)
        hbar = np.empty((incs.shape[0], 2))
        k, i = _kernels.advance_block(model.code, model.params, x, incs, noise_scale, snaps, hbar)
        if k >= 0:
            raise ParticleBlowUp(t, int(k), int(i))
    else:
        # overflow is reported as ParticleBlowUp, not as a warning
        with np.errstate(over="ignore", invalid="ignore"):
            snaps, hbar, x = _advance_numpy(model, x, incs, noise_scale, t)
    return LawBlock(level, snaps, hbar), EmpiricalMeasure(x)


def particle_increments(key, level, n, dim):
    """Brownian increments for one block, shape ``(2**l, n, dim)``; row-major in (k, i)."""
    level = level if isinstance(level, LevelParams) else LevelParams(level)
    S = level.steps_per_unit
    flat = gaussian_increments(key, S * n, dim, level.delta)
    return flat.reshape(S, n, dim)


def propagate_block(model, level, state, key, t=None):
    """Advance the particle system by one unit time using the stream ``key``."""
    level = level if isinstance(level, LevelParams) else LevelParams(level)
    cloud = _as_cloud(state)
    key = key if key.role == Role.PARTICLE_FINE else key.with_role(Role.PARTICLE_FINE, key.counter)
    incs = particle_increments(key, level, cloud.shape[0], model.dim)
    return advance_block(model, level, cloud, incs, key.counter if t is None else t)


def coupled_increments(fine_increments, n_coarse):
    """Coarse increments: pairwise time sums of the first ``n_coarse`` fine particles."""
    return coarsen(fine_increments[:, :n_coarse, :])


def advance_block_coupled(model, l, fine_state, coarse_state, fine_increments, t=0):
    fine = _as_cloud(fine_state)
    coarse = _as_cloud(coarse_state)
    if coarse.shape[0] >= fine.shape[0]:
        raise ConfigError(f"coarse system needs fewer particles than fine "
                          f"({coarse.shape[0]} >= {fine.shape[0]})")
    if l < 1:
        raise ConfigError("coupled propagation needs l >= 1")
    fine_block, fine_end = advance_block(model, LevelParams(l), fine, fine_increments, t)
    coarse_incs = coupled_increments(fine_increments, coarse.shape[0])
    coarse_block, coarse_end = advance_block(model, LevelParams(l - 1), coarse, coarse_incs, t)
    return fine_block, coarse_block, fine_end, coarse_end


def propagate_block_coupled(model, l, fine_state, coarse_state, key, t=None):
    """Advance a level-``l`` and a level-``l-1`` system with synchronously coupled noise.

    The fine system draws exactly what :func:`propagate_block` would draw
    for the same key; coarse particle ``i`` reuses fine particle ``i``'s
    increments.  Returns ``(fine_block, coarse_block, fine_end, coarse_end)``.
    """
    fine = _as_cloud(fine_state)
    key = key if key.role == Role.PARTICLE_FINE else key.with_role(Role.PARTICLE_FINE, key.counter)
    incs = particle_increments(key, l, fine.shape[0], model.dim)
    return advance_block_coupled(model, l, fine, coarse_state, incs, key.counter if t is None else t)

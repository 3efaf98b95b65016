"""Doubly randomised single-term estimator of stationary expectations.

One replicate draws a level ``L`` and a horizon ``P``.  For ``L = l_star`` it
runs a level-``l_star`` particle system for ``I_P = 2**P`` unit blocks and
feeds every block into an independent Euler chain started at ``x0``; for
``L > l_star`` it does the same with a synchronously coupled pair of levels
``(L, L-1)``.  The replicate is the signed measure

    (1 / (P_L(L) P_P(P))) * [A_{I_P} - A_{I_{P-1}}]

where ``A_I`` is the time average of the first ``I`` chain states (fine
atoms positive, coarse atoms negative), and ``A_{I_{-1}} = 0``.
Averaging ``M`` replicates gives an estimator whose expectation is the
level-``l_max`` telescoped limit.
"""

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._backend import use_numba
from .measure import SignedEmpiricalMeasure
from .models import ConfigError, interaction_values
from .particles import (
    EmpiricalMeasure,
    LawBlock,
    LevelParams,
    ParticleBlowUp,
    propagate_block,
    propagate_block_coupled,
)
from .rng import Role, StreamKey, categorical, coarsen, gaussian_increments

log = logging.getLogger(__name__)

PMF_FORMS = ("experimental", "theory")


@dataclass(frozen=True)
class EstimatorConfig:
    """Truncation levels, particle schedule and randomisation laws.

    ``pmf_form="experimental"`` uses natural logs,
    ``P_L(l) ~ 2^-l (l+1) ln(l+2)`` and ``P_P(p) ~ 2^-p (p+1) ln(p+2)^2``;
    ``"theory"`` uses ``2^-x (x+1) log2(x+2)^2`` for both.
    """

    l_star: int = 3
    l_max: int = 10
    p_max: int = 7
    n_base: int = 10
    pmf_form: str = "experimental"

    def __post_init__(self):
        for name in ("l_star", "l_max", "p_max", "n_base"):
            val = getattr(self, name)
            if not isinstance(val, (int, np.integer)) or isinstance(val, bool):
                raise ConfigError(f"{name} must be an integer, got {val!r}")
        if self.l_star < 0:
            raise ConfigError("l_star must be >= 0")
        if self.l_max < self.l_star:
            raise ConfigError(f"l_max ({self.l_max}) must be >= l_star ({self.l_star})")
        if self.p_max < 0:
            raise ConfigError("p_max must be >= 0")
        if self.n_base < 1:
            raise ConfigError("n_base must be >= 1")
        if self.pmf_form not in PMF_FORMS:
            raise ConfigError(f"pmf_form must be one of {PMF_FORMS}, got {self.pmf_form!r}")

    @property
    def levels(self):
        return np.arange(self.l_star, self.l_max + 1)

    @property
    def horizons(self):
        return np.arange(0, self.p_max + 1)

    def n_particles(self, l):
        return self.n_base * (l - self.l_star + 1)

    @staticmethod
    def blocks(p):
        return 2 ** p

    def level_probabilities(self):
        l = self.levels.astype(float)
        if self.pmf_form == "experimental":
            w = 2.0 ** -l * (l + 1) * np.log(l + 2)
        else:
            w = 2.0 ** -l * (l + 1) * np.log2(l + 2) ** 2
        return w / w.sum()

    def horizon_probabilities(self):
        p = self.horizons.astype(float)
        if self.pmf_form == "experimental":
            w = 2.0 ** -p * (p + 1) * np.log(p + 2) ** 2
        else:
            w = 2.0 ** -p * (p + 1) * np.log2(p + 2) ** 2
        return w / w.sum()

    def prob_level(self, l):
        return float(self.level_probabilities()[l - self.l_star])

    def prob_horizon(self, p):
        return float(self.horizon_probabilities()[p])


def pmf_L(config):
    return list(zip(config.levels.tolist(), config.level_probabilities().tolist()))


def pmf_P(config):
    return list(zip(config.horizons.tolist(), config.horizon_probabilities().tolist()))


def replicate_cost(config, l, p):
    """Abstract cost of one replicate: ``I_p 2^l (N_l^2 + 1{l > l*} N_{l-1}^2)``."""
    n = config.n_particles(l)
    work = n * n
    if l > config.l_star:
        work += config.n_particles(l - 1) ** 2
    return float(config.blocks(p) * 2 ** l * work)


def expected_cost(config):
    pl = config.level_probabilities()
    pp = config.horizon_probabilities()
    total = 0.0
    for i, l in enumerate(config.levels):
        for j, p in enumerate(config.horizons):
            total += pl[i] * pp[j] * replicate_cost(config, int(l), int(p))
    return total


class SimulationError(RuntimeError):
    def __init__(self, replicate_id, level, horizon, cause):
        self.replicate_id, self.level, self.horizon, self.cause = replicate_id, level, horizon, cause
        super().__init__(f"replicate {replicate_id} (L={level}, P={horizon}): {cause}")


@dataclass(eq=False)
class ReplicateResult:
    measure: SignedEmpiricalMeasure
    level: int
    horizon: int
    cost_units: float
    replicate_id: int = 0
    scale: float = 1.0


# --- plugged-law chains -------------------------------------------------------


def chain_increments(key, level, dim):
    level = level if isinstance(level, LevelParams) else LevelParams(level)
    return gaussian_increments(key, level.steps_per_unit, dim, level.delta)


def _chain_numpy(model, block, u, incs, noise_scale, t):
    S = incs.shape[0]
    dt = 1.0 / S
    X = u[None, :]
    for k in range(S):
        if block.hbar is not None and model.affine1 is not None and model.affine2 is not None:
            s1 = model.affine1[0](X) * block.hbar[k, 0]
            s2 = model.affine2[0](X) * block.hbar[k, 1]
        else:
            snap = block.snapshots[k]
            s1 = interaction_values(model, 1, X, snap)
            s2 = interaction_values(model, 2, X, snap)
        noise = np.einsum("nij,nj->ni", model.diffusion(X, s2), incs[k][None, :])
        X = X + model.drift(X, s1) * dt + noise_scale * noise
        if not np.all(np.isfinite(X)):
            raise ParticleBlowUp(t, k, 0, where="chain")
    return X[0]


def advance_chain(model, block, u, increments, t=0):
    """Euler chain through one block with the block's clouds plugged into the interactions."""
    u = np.array(u, dtype=float).reshape(model.dim)
    incs = np.ascontiguousarray(increments, dtype=float)
    if incs.shape != (len(block), model.dim):
        raise ValueError(f"chain increments shape {incs.shape} does not match {(len(block), model.dim)}")
    noise_scale = model.noise_scale(block.level.delta)
    if use_numba(model) and block.hbar is not None:
        k = _kernels.chain_block(model.code, model.params, u, block.hbar, incs, noise_scale)
        if k >= 0:
            raise ParticleBlowUp(t, int(k), 0, where="chain")
        return u
    with np.errstate(over="ignore", invalid="ignore"):
        return _chain_numpy(model, block, u, incs, noise_scale, t)


def kernel_step(model, block, u, key, t=None):
    """One unit-time transition of the chain driven by the independent CHAIN stream."""
    key = key if key.role == Role.CHAIN else key.with_role(Role.CHAIN, key.counter)
    incs = chain_increments(key, block.level, model.dim)
    return advance_chain(model, block, u, incs, key.counter if t is None else t)


def advance_chain_coupled(model, fine_block, coarse_block, u, ubar, fine_increments, t=0):
    if coarse_block.level.l != fine_block.level.l - 1:
        raise ConfigError("coupled chain needs blocks at consecutive levels")
    u_next = advance_chain(model, fine_block, u, fine_increments, t)
    ubar_next = advance_chain(model, coarse_block, ubar, coarsen(fine_increments), t)
    return u_next, ubar_next


def kernel_step_coupled(model, fine_block, coarse_block, pair, key, t=None):
    """Synchronous coupling of the level-``l`` and level-``l-1`` chain transitions."""
    key = key if key.role == Role.CHAIN else key.with_role(Role.CHAIN, key.counter)
    incs = chain_increments(key, fine_block.level, model.dim)
    u, ubar = pair
    return advance_chain_coupled(model, fine_block, coarse_block, u, ubar, incs,
                                 key.counter if t is None else t)


# --- path simulation ----------------------------------------------------------


def replicate_initial_point(model, key):
    return model.initial_point(key.with_role(Role.INIT_DRAW).generator())


def simulate_path(model, l, n, n_blocks, key, x0=None):
    """Chain states ``u_1..u_I`` at level ``l`` with an ``n``-particle system, shape ``(I, d)``."""
    x0 = replicate_initial_point(model, key) if x0 is None else np.asarray(x0, dtype=float)
    level = LevelParams(l)
    state = EmpiricalMeasure.dirac(x0, n)
    u = x0.copy()
    path = np.empty((n_blocks, model.dim))
    for t in range(n_blocks):
        block, state = propagate_block(model, level, state, key.with_role(Role.PARTICLE_FINE, t))
        u = kernel_step(model, block, u, key.with_role(Role.CHAIN, t))
        path[t] = u
    return path


def simulate_coupled_paths(model, l, n_fine, n_coarse, n_blocks, key, x0=None):
    """Coupled chain states at levels ``l`` and ``l-1``; the fine path matches :func:`simulate_path`."""
    x0 = replicate_initial_point(model, key) if x0 is None else np.asarray(x0, dtype=float)
    fine = EmpiricalMeasure.dirac(x0, n_fine)
    coarse = EmpiricalMeasure.dirac(x0, n_coarse)
    u = x0.copy()
    ubar = x0.copy()
    fine_path = np.empty((n_blocks, model.dim))
    coarse_path = np.empty((n_blocks, model.dim))
    for t in range(n_blocks):
        fb, cb, fine, coarse = propagate_block_coupled(
            model, l, fine, coarse, key.with_role(Role.PARTICLE_FINE, t))
        u, ubar = kernel_step_coupled(model, fb, cb, (u, ubar), key.with_role(Role.CHAIN, t))
        fine_path[t] = u
        coarse_path[t] = ubar
    return fine_path, coarse_path


# --- signed measures ----------------------------------------------------------


def prefix_difference_weights(p):
    """Atom weights of ``A_{2^p} - A_{2^(p-1)}`` over ``u_1..u_{2^p}`` (just ``A_1`` for p=0).

    All weights are +-2^-p exactly, so the total is exactly 0 for ``p >= 1``.
    """
    n = 2 ** p
    w = np.full(n, 1.0 / n)
    if p > 0:
        w[: n // 2] = 1.0 / n - 2.0 / n
    return w


def assemble_xi(fine_path, coarse_path, p, prob_p):
    """Signed measure of one ``xi`` term from realised chain paths (prefixes of length ``2^p`` used)."""
    n = 2 ** p
    fine_path = np.asarray(fine_path, dtype=float)
    if fine_path.ndim == 1:
        fine_path = fine_path[:, None]
    if fine_path.shape[0] < n:
        raise ValueError(f"path of length {fine_path.shape[0]} shorter than horizon {n}")
    w = prefix_difference_weights(p) * (1.0 / prob_p)
    if coarse_path is None:
        return SignedEmpiricalMeasure(fine_path[:n], w)
    coarse_path = np.asarray(coarse_path, dtype=float)
    if coarse_path.ndim == 1:
        coarse_path = coarse_path[:, None]
    return SignedEmpiricalMeasure(np.concatenate([fine_path[:n], coarse_path[:n]]), np.r_[w, -w])


def draw_horizon(config, key):
    pp = config.horizon_probabilities()
    return int(config.horizons[categorical(key.with_role(Role.TIME_DRAW), pp)])


def draw_level(config, key):
    pl = config.level_probabilities()
    return int(config.levels[categorical(key.with_role(Role.LEVEL_DRAW), pl)])


def xi_base(model, config, key):
    """Base-level term: one level-``l_star`` system, chain differenced over horizons."""
    p = draw_horizon(config, key)
    l = config.l_star
    try:
        path = simulate_path(model, l, config.n_particles(l), config.blocks(p), key)
    except ParticleBlowUp as exc:
        raise SimulationError(key.replicate_id, l, p, exc) from exc
    measure = assemble_xi(path, None, p, config.prob_horizon(p))
    return ReplicateResult(measure, l, p, replicate_cost(config, l, p), key.replicate_id,
                           1.0 / config.prob_horizon(p))


def xi_increment(model, config, l, key):
    """Level-increment term for ``l_star < l <= l_max`` from coupled systems and chains."""
    if not config.l_star < l <= config.l_max:
        raise ConfigError(f"increment level {l} outside ({config.l_star}, {config.l_max}]")
    p = draw_horizon(config, key)
    try:
        fine, coarse = simulate_coupled_paths(
            model, l, config.n_particles(l), config.n_particles(l - 1), config.blocks(p), key)
    except ParticleBlowUp as exc:
        raise SimulationError(key.replicate_id, l, p, exc) from exc
    measure = assemble_xi(fine, coarse, p, config.prob_horizon(p))
    return ReplicateResult(measure, l, p, replicate_cost(config, l, p), key.replicate_id,
                           1.0 / config.prob_horizon(p))


def unbiased_single(model, config, key):
    """One replicate of the single-term estimator as a signed measure."""
    l = draw_level(config, key)
    if l == config.l_star:
        res = xi_base(model, config, key)
    else:
        res = xi_increment(model, config, l, key)
    inv = 1.0 / config.prob_level(l)
    res.measure = res.measure.scaled(inv)
    res.scale = res.scale * inv
    return res


# --- replicate averaging ------------------------------------------------------


@dataclass(eq=False)
class EstimateResult:
    mean: float
    values: np.ndarray
    total_cost: float
    std_error: float
    replicates: list = field(default_factory=list, repr=False)

    @property
    def M(self):
        return len(self.values)

    def measure(self):
        """Signed measure of the replicate average."""
        return SignedEmpiricalMeasure.average(r.measure for r in self.replicates)


def run_replicates(model, config, M, master_seed, threads=1, start=0):
    """Replicates ``start..start+M-1``; each is a pure function of ``(master_seed, id)``."""
    if M < 1:
        raise ValueError("M must be at least 1")
    ids = range(start, start + M)

    def one(rid):
        return unbiased_single(model, config, StreamKey(master_seed, rid))

    if threads is None or threads <= 1:
        return [one(rid) for rid in ids]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, ids))


def summarize(replicates, phi):
    values = np.array([r.measure.evaluate(phi) for r in replicates])
    M = len(values)
    mean = math.fsum(values) / M
    se = float(np.std(values, ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    cost = math.fsum(r.cost_units for r in replicates)
    return EstimateResult(mean, values, cost, se, list(replicates))


def estimate(model, config, phi, M, master_seed, threads=1, start=0):
    """Average of ``M`` independent replicates evaluated at ``phi``."""
    reps = run_replicates(model, config, M, master_seed, threads=threads, start=start)
    return summarize(reps, phi)

"""Post-processing of estimator output: densities, MSE studies, Wasserstein diagnostics."""

import math
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._backend import get_backend
from .estimator import run_replicates, summarize
from .particles import EmpiricalMeasure, LevelParams, propagate_block
from .rng import Role, StreamKey


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float

    def mass(self):
        """Trapezoidal integral of the density over its grid."""
        return float(np.trapezoid(self.values, self.grid))

    def mean(self):
        return float(np.trapezoid(self.grid * self.values, self.grid) / self.mass())


def _kde_numpy(grid, pts, w, h, chunk=2048):
    out = np.zeros(grid.shape[0])
    norm = 1.0 / (h * math.sqrt(2.0 * math.pi))
    for start in range(0, pts.shape[0], chunk):
        z = (grid[:, None] - pts[None, start:start + chunk]) / h
        out += np.exp(-0.5 * z * z) @ w[start:start + chunk]
    return out * norm


def kde(measure, component, h, grid):
    """Gaussian-kernel density of one marginal of a signed measure.

    ``value(x) = sum_j w_j K_h(x - x_j[component])``; signed weights give a
    signed estimate and nothing is clipped.
    """
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    if not 0 <= component < measure.dim:
        raise ValueError(f"component {component} outside 0..{measure.dim - 1}")
    grid = np.ascontiguousarray(grid, dtype=float)
    pts = np.ascontiguousarray(measure.points[:, component])
    w = np.ascontiguousarray(measure.weights)
    if get_backend() == "numba":
        vals = _kernels.gaussian_kde_1d(grid, pts, w, float(h))
    else:
        vals = _kde_numpy(grid, pts, w, float(h))
    return DensityEstimate(grid, vals, float(h))


def kde_grid(measure, component, h, n=801, pad=8.0):
    """Uniform grid covering every atom of ``component`` plus ``pad`` bandwidths each side."""
    x = measure.points[:, component]
    return np.linspace(x.min() - pad * h, x.max() + pad * h, n)


def moment(measure, component, k):
    if k < 1:
        raise ValueError("moment order must be >= 1")
    return measure.evaluate(lambda x: x[:, component] ** k)


# --- mean squared error -------------------------------------------------------


def mse_from_estimates(estimates, truth):
    est = np.asarray(estimates, dtype=float)
    return float(np.mean((est - truth) ** 2))


@dataclass(frozen=True, eq=False)
class MSEPoint:
    M: int
    mse: float
    estimates: np.ndarray
    mean_cost_units: float
    seconds: float


def mse_study(model, config, phi, truth, M, runs, master_seed, threads=1):
    """MSE of the M-replicate average over ``runs`` independent runs, for each M.

    Run ``k`` owns replicate ids ``[k*Mmax, (k+1)*Mmax)``; an M-estimate uses
    the first M of them, so runs never share replicates.
    """
    if runs < 2:
        raise ValueError("an MSE study needs at least 2 runs")
    Ms = sorted({int(m) for m in np.atleast_1d(M)})
    if Ms[0] < 1:
        raise ValueError("M must be at least 1")
    mmax = Ms[-1]
    values = np.empty((runs, mmax))
    costs = np.empty((runs, mmax))
    seconds = np.zeros(runs)
    for k in range(runs):
        t0 = time.perf_counter()
        reps = run_replicates(model, config, mmax, master_seed, threads=threads, start=k * mmax)
        seconds[k] = time.perf_counter() - t0
        values[k] = [r.measure.evaluate(phi) for r in reps]
        costs[k] = [r.cost_units for r in reps]
    out = []
    for m in Ms:
        est = np.array([math.fsum(values[k, :m]) / m for k in range(runs)])
        out.append(MSEPoint(m, mse_from_estimates(est, truth), est,
                            float(costs[:, :m].sum() / runs), float(seconds.sum() * m / mmax / runs)))
    return out


def loglog_slope(x, y):
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


# --- Wasserstein ----------------------------------------------------------------


def wasserstein_1d(a, b, p=2):
    """Exact W_p between two 1-d empirical laws via the sorted (quantile) coupling.

    Unequal sample sizes are brought to their least common multiple by
    repeating every atom.
    """
    if p not in (1, 2):
        raise ValueError("order must be 1 or 2")
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    if a.size != b.size:
        n = math.lcm(a.size, b.size)
        a = np.repeat(a, n // a.size)
        b = np.repeat(b, n // b.size)
    gap = np.abs(a - b)
    if p == 1:
        return float(gap.mean())
    return float(math.sqrt(np.mean(gap * gap)))


def contraction_diagnostic(model, level, n, horizon, x0_a, x0_b, master_seed, replicate_id=0):
    """W2 between two particle systems started at different points with shared noise.

    Returns ``(t, w2)`` arrays for ``t = 0..horizon`` unit times.
    """
    if model.dim != 1:
        raise ValueError("contraction diagnostic supports one-dimensional models only")
    level = level if isinstance(level, LevelParams) else LevelParams(level)
    a = EmpiricalMeasure.dirac([x0_a], n)
    b = EmpiricalMeasure.dirac([x0_b], n)
    w2 = [wasserstein_1d(a.particles, b.particles)]
    for t in range(horizon):
        key = StreamKey(master_seed, replicate_id, Role.PARTICLE_FINE, t)
        _, a = propagate_block(model, level, a, key)
        _, b = propagate_block(model, level, b, key)
        w2.append(wasserstein_1d(a.particles, b.particles))
    return np.arange(horizon + 1), np.array(w2)


def fit_log_decay(t, w2):
    """Least-squares slope of ``log W2^2`` against ``t`` over points with ``W2 > 0``."""
    t = np.asarray(t, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    keep = w2 > 0
    if keep.sum() < 2:
        raise ValueError("need at least two positive distances to fit a decay rate")
    return float(np.polyfit(t[keep], np.log(w2[keep] ** 2), 1)[0])


# --- Curie-Weiss reference values ---------------------------------------------


def adaptive_simpson(f, a, b, tol=1e-10, min_depth=5, max_depth=50):
    """Adaptive Simpson quadrature with Richardson correction (iterative).

    Every branch is refined at least ``min_depth`` times so integrands that
    happen to vanish at the first few nodes are not accepted prematurely.
    """
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    total = 0.0
    while stack:
        a0, b0, fa0, fm0, fb0, s, eps, depth = stack.pop()
        m = 0.5 * (a0 + b0)
        lm, rm = 0.5 * (a0 + m), 0.5 * (m + b0)
        flm, frm = f(lm), f(rm)
        left = (m - a0) / 6.0 * (fa0 + 4.0 * flm + fm0)
        right = (b0 - m) / 6.0 * (fm0 + 4.0 * frm + fb0)
        delta = left + right - s
        if depth >= max_depth or (depth >= min_depth and abs(delta) <= 15.0 * eps):
            total += left + right + delta / 15.0
        else:
            stack.append((a0, m, fa0, flm, fm0, left, 0.5 * eps, depth + 1))
            stack.append((m, b0, fm0, frm, fb0, right, 0.5 * eps, depth + 1))
    return total


def curie_weiss_unnormalized(x, beta=1.0):
    return np.exp(-0.5 * beta * x ** 4 + beta * x ** 2)


def curie_weiss_reference(beta=1.0, lo=-10.0, hi=10.0, tol=1e-10):
    """Normalising constant ``C`` and ``E[X^2]`` of the density ``C exp(-beta x^4/2 + beta x^2)``."""
    def f(x):
        return math.exp(-0.5 * beta * x ** 4 + beta * x ** 2)

    z = adaptive_simpson(f, lo, hi, tol)
    m2 = adaptive_simpson(lambda x: x * x * f(x), lo, hi, tol)
    return 1.0 / z, m2 / z


def replicate_average_measure(model, config, M, master_seed, threads=1):
    """Run ``M`` replicates and return ``(EstimateResult, averaged SignedEmpiricalMeasure)``."""
    reps = run_replicates(model, config, M, master_seed, threads=threads)
    res = summarize(reps, lambda x: np.ones(x.shape[0]))
    return res, res.measure()

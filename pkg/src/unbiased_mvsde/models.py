"""McKean-Vlasov models: coefficients, interaction kernels and the builtins.

A model is the autonomous SDE

    dX_t = a(X_t, xi1_bar(X_t, mu_t)) dt + b(X_t, xi2_bar(X_t, mu_t)) dW_t

where ``xi_m_bar(x, mu)`` is the mean of ``kernel_m(x, .)`` under ``mu``.
All callables are vectorised over leading axes: ``drift(X, s)`` takes
``X`` of shape ``(..., d)`` and ``s`` of shape ``(...)``.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels as _kern


class ConfigError(ValueError):
    """Invalid model or estimator configuration."""


def _zero_kernel(x, z):
    return np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(z)[:-1]))


def _zero_factor(x):
    return np.zeros(np.shape(x)[:-1])


@dataclass(frozen=True, eq=False)
class Model:
    """Coefficients of a McKean-Vlasov SDE.

    ``affine1``/``affine2`` optionally declare ``kernel_m(x, z) = g(x) * h(z)``
    as a ``(g, h)`` pair; the engine then computes interaction means in O(N).
    ``step_scaled_noise_rows`` lists (0-based) rows whose noise contribution
    is multiplied by the step size.  ``code``/``params`` select the compiled
    coefficient kernels; custom models leave ``code=-1`` and always run on
    the numpy path.
    """

    name: str
    dim: int
    drift: Callable
    diffusion: Callable
    x0: np.ndarray
    kernel1: Callable = _zero_kernel
    kernel2: Callable = _zero_kernel
    affine1: Optional[tuple] = None
    affine2: Optional[tuple] = None
    step_scaled_noise_rows: frozenset = frozenset()
    x0_sampler: Optional[Callable] = None
    code: int = -1
    params: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("model dimension must be positive")
        x0 = np.asarray(self.x0, dtype=float).reshape(self.dim)
        object.__setattr__(self, "x0", x0)
        rows = frozenset(int(r) for r in self.step_scaled_noise_rows)
        if any(r < 0 or r >= self.dim for r in rows):
            raise ConfigError(f"step_scaled_noise_rows {sorted(rows)} outside 0..{self.dim - 1}")
        object.__setattr__(self, "step_scaled_noise_rows", rows)
        object.__setattr__(self, "params", np.ascontiguousarray(self.params, dtype=float))

    def noise_scale(self, delta):
        scale = np.ones(self.dim)
        for r in self.step_scaled_noise_rows:
            scale[r] = delta
        return scale

    def initial_point(self, rng=None):
        """Starting point of one replicate; random only for models with a sampler."""
        if self.x0_sampler is None:
            return self.x0.copy()
        if rng is None:
            raise ValueError(f"model {self.name!r} needs a generator to draw its initial point")
        return np.asarray(self.x0_sampler(rng), dtype=float).reshape(self.dim)


def interaction_mean(kernel, x, measure):
    """Mean of ``kernel(x, X^j)`` over the particles of ``measure``."""
    particles = np.asarray(getattr(measure, "particles", measure), dtype=float)
    if particles.ndim == 1:
        particles = particles[:, None]
    if particles.shape[0] == 0:
        raise ValueError("empty empirical measure")
    x = np.asarray(x, dtype=float)
    vals = np.asarray(kernel(x[None, :], particles), dtype=float).ravel()
    # shifted mean: exact when all values coincide
    return float(vals[0] + math.fsum(vals - vals[0]) / vals.size)


def interaction_values(model, which, X, Z):
    """Interaction means ``xi_bar(X_i, mu_Z)`` for every row of ``X`` against cloud ``Z``."""
    affine = model.affine1 if which == 1 else model.affine2
    if affine is not None:
        g, h = affine
        return g(X) * np.mean(h(Z))
    kernel = model.kernel1 if which == 1 else model.kernel2
    return np.mean(kernel(X[:, None, :], Z[None, :, :]), axis=1)


def _positive(**kw):
    for key, val in kw.items():
        if not (np.isfinite(val) and val > 0):
            raise ConfigError(f"{key} must be positive and finite, got {val}")


def _first(z):
    return z[..., 0]


def _one(x):
    return np.ones(np.shape(x)[:-1])


def curie_weiss(beta=1.0, K=0.25, sigma=1.0, x0=1.0):
    """dX = beta(-X^3 + X + K E[X]) dt + sigma dW."""
    _positive(beta=beta, K=K, sigma=sigma)

    def drift(x, s):
        x1 = x[..., 0]
        return (beta * (-(x1 * x1 * x1) + x1 + K * s))[..., None]

    def diffusion(x, s):
        return np.full(np.shape(x)[:-1] + (1, 1), float(sigma))

    return Model(
        name="curie_weiss", dim=1, drift=drift, diffusion=diffusion, x0=[x0],
        kernel1=lambda x, z: np.broadcast_to(z[..., 0], np.broadcast_shapes(x.shape, z.shape)[:-1]),
        affine1=(_one, _first), affine2=(_zero_factor, _zero_factor),
        code=K_CODES["curie_weiss"], params=[beta, K, sigma],
    )


def mean_field_ou(theta=1.0, kappa=0.5, sigma=1.0, x0=0.0):
    """dX = -theta(X - kappa E[X]) dt + sigma dW; stationary law N(0, sigma^2 / (2 theta))."""
    _positive(theta=theta, sigma=sigma)
    if not np.isfinite(kappa):
        raise ConfigError("kappa must be finite")

    def drift(x, s):
        return (-theta * (x[..., 0] - kappa * s))[..., None]

    def diffusion(x, s):
        return np.full(np.shape(x)[:-1] + (1, 1), float(sigma))

    return Model(
        name="mean_field_ou", dim=1, drift=drift, diffusion=diffusion, x0=[x0],
        kernel1=lambda x, z: np.broadcast_to(z[..., 0], np.broadcast_shapes(x.shape, z.shape)[:-1]),
        affine1=(_one, _first), affine2=(_zero_factor, _zero_factor),
        code=K_CODES["mean_field_ou"], params=[theta, kappa, sigma],
    )


def mle_gaussian(y, theta0=0.0, x_init=0.0):
    """Particle gradient flow for the MLE of the Gaussian toy model.

    The state is ``u = (theta, x_1..x_dy)``.  The theta row carries noise of
    size ``delta * dB`` per sub-step (row 0 is step-scaled), the x block
    ``sqrt(2) dW``; the invariant theta concentrates at ``mean(y)``.
    """
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise ConfigError("mle_gaussian needs a non-empty observation vector y")
    if not np.all(np.isfinite(y)):
        raise ConfigError("observation vector y must be finite")
    dy = y.size
    dim = dy + 1

    def drift(u, s):
        theta = u[..., :1]
        x = u[..., 1:]
        out = np.empty(np.shape(u))
        out[..., 0] = s - dy * u[..., 0]
        out[..., 1:] = -(x - y) - (x - theta)
        return out

    diag = np.r_[1.0, np.full(dy, np.sqrt(2.0))]
    bmat = np.diag(diag)

    def diffusion(u, s):
        return np.broadcast_to(bmat, np.shape(u)[:-1] + (dim, dim))

    def x_block_sum(z):
        return np.sum(z[..., 1:], axis=-1)

    return Model(
        name="mle_gaussian", dim=dim, drift=drift, diffusion=diffusion,
        x0=np.r_[theta0, np.full(dy, x_init)],
        kernel1=lambda u, z: np.broadcast_to(x_block_sum(z), np.broadcast_shapes(u.shape, z.shape)[:-1]),
        affine1=(_one, x_block_sum), affine2=(_zero_factor, _zero_factor),
        step_scaled_noise_rows={0},
        code=K_CODES["mle_gaussian"], params=np.r_[dy, y],
    )


@dataclass(frozen=True)
class NeuronParams:
    V0: float = 0.0
    sigma_V0: float = 0.4
    a: float = 0.7
    b: float = 0.8
    c: float = 0.08
    I: float = 0.5
    b_ext: float = 0.5
    w0: float = 0.5
    sigma_w0: float = 0.4
    V_rev: float = 1.0
    a_r: float = 1.0
    a_d: float = 1.0
    T_max: float = 1.0
    lam: float = 0.2
    y0: float = 0.3
    sigma_y0: float = 0.05
    J: float = 1.0
    b_J: float = 0.2
    V_T: float = 2.0
    Gamma: float = 0.1
    Lambda: float = 0.5

    def __post_init__(self):
        for name in _kern.NEURON_FIELDS:
            if not np.isfinite(getattr(self, name)):
                raise ConfigError(f"neuron parameter {name} must be finite")
        _positive(sigma_V0=self.sigma_V0, sigma_w0=self.sigma_w0, sigma_y0=self.sigma_y0)

    def as_array(self):
        return np.array([getattr(self, name) for name in _kern.NEURON_FIELDS], dtype=float)


def neuron_b32(q, x):
    """Noise loading of the synaptic variable on the second Brownian component."""
    x = np.asarray(x, dtype=float)
    v, y = x[..., 0], x[..., 2]
    den = 1.0 - (2.0 * y - 1.0) ** 2
    inside = (y > 0.0) & (y < 1.0) & (den > 0.0)
    ys = np.where(inside, y, 0.5)
    rate = q.a_r * q.T_max * (1.0 - ys) / (1.0 + np.exp(-q.lam * (v - q.V_T))) + q.a_d * ys
    val = np.sqrt(rate) * q.Gamma * np.exp(-q.Lambda / np.where(inside, den, 1.0))
    return np.where(inside, val, 0.0)


def neuron3d(params=None):
    """Three-dimensional FitzHugh-Nagumo type neuron with synaptic variable.

    The initial point of each replicate is Gaussian with mean
    ``(V0, w0, y0)`` and diagonal covariance ``(sigma_V0, sigma_w0, sigma_y0)``
    (the sigmas are variances).
    """
    q = params if params is not None else NeuronParams()

    def gate(v):
        return q.a_r * q.T_max / (1.0 + np.exp(-q.lam * (v - q.V_T)))

    def drift(x, s):
        v, w, y = x[..., 0], x[..., 1], x[..., 2]
        out = np.empty(np.shape(x))
        out[..., 0] = v - v * v * v / 3.0 - w + q.I - s
        out[..., 1] = q.c * (v + q.a - q.b * w)
        out[..., 2] = gate(v) * (1.0 - y) - q.a_d * y
        return out

    def diffusion(x, s):
        out = np.zeros(np.shape(x)[:-1] + (3, 3))
        out[..., 0, 0] = q.b_ext
        out[..., 0, 2] = -s
        out[..., 2, 1] = neuron_b32(q, x)
        return out

    def g1(x):
        return q.J * (x[..., 0] - q.V_rev)

    def g2(x):
        return q.b_J * (x[..., 0] - q.V_rev)

    def third(z):
        return z[..., 2]

    mean = np.array([q.V0, q.w0, q.y0])
    std = np.sqrt([q.sigma_V0, q.sigma_w0, q.sigma_y0])

    def sampler(rng):
        return mean + std * rng.standard_normal(3)

    return Model(
        name="neuron3d", dim=3, drift=drift, diffusion=diffusion, x0=mean,
        kernel1=lambda x, z: g1(x) * third(z), kernel2=lambda x, z: g2(x) * third(z),
        affine1=(g1, third), affine2=(g2, third), x0_sampler=sampler,
        code=K_CODES["neuron3d"], params=q.as_array(),
    )


K_CODES = {
    "curie_weiss": _kern.CURIE_WEISS,
    "mean_field_ou": _kern.MEAN_FIELD_OU,
    "mle_gaussian": _kern.MLE_GAUSSIAN,
    "neuron3d": _kern.NEURON3D,
}

BUILTINS = {
    "curie_weiss": curie_weiss,
    "mean_field_ou": mean_field_ou,
    "mle_gaussian": mle_gaussian,
    "neuron3d": lambda **kw: neuron3d(NeuronParams(**kw)),
}


def build_model(name, params=None):
    """Construct a builtin model by name from a parameter mapping."""
    if name not in BUILTINS:
        raise ConfigError(f"unknown model {name!r}; choose from {sorted(BUILTINS)}")
    try:
        return BUILTINS[name](**(params or {}))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from None

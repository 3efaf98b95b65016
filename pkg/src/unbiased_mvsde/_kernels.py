"""Compiled hot loops: Euler blocks for the particle system and plugged-law chain.

Each builtin model supplies four small jitted functions that are bound
into its own pair of block kernels on first use:

    drift(p, x, i, s1, out)      out <- a(x[i], s1)
    noise(p, x, i, s2, dw, out)  out <- b(x[i], s2) @ dw
    g(p, which, x, i)            left factor of the affine kernel xi_which
    h(p, which, x, j)            right factor of the affine kernel xi_which

``noise`` multiplies only the structurally non-zero entries of the
diffusion matrix.  The numpy mirror of each function lives on the
:class:`~unbiased_mvsde.models.Model` callables; the two paths agree to
rounding.
"""

import math
import threading

import numpy as np

from ._backend import njit

CURIE_WEISS = 0
MEAN_FIELD_OU = 1
MLE_GAUSSIAN = 2
NEURON3D = 3

NEURON_FIELDS = (
    "V0", "sigma_V0", "a", "b", "c", "I", "b_ext",
    "w0", "sigma_w0", "V_rev", "a_r", "a_d", "T_max", "lam",
    "y0", "sigma_y0", "J", "b_J", "V_T", "Gamma", "Lambda",
)
_NI = {name: i for i, name in enumerate(NEURON_FIELDS)}
_A, _B, _C, _I, _BEXT = _NI["a"], _NI["b"], _NI["c"], _NI["I"], _NI["b_ext"]
_VREV, _AR, _AD, _TMAX, _LAM = _NI["V_rev"], _NI["a_r"], _NI["a_d"], _NI["T_max"], _NI["lam"]
_J, _BJ, _VT, _GAMMA, _LAMBDA = _NI["J"], _NI["b_J"], _NI["V_T"], _NI["Gamma"], _NI["Lambda"]

_inline = dict(cache=True, nogil=True, inline="always")


# --- shared affine factors: xi_1(x, z) = h(z), xi_2 = 0 -----------------------

@njit(**_inline)
def _unit_g(p, which, x, i):
    return 1.0 if which == 1 else 0.0


@njit(**_inline)
def _first_h(p, which, x, j):
    return x[j, 0] if which == 1 else 0.0


@njit(**_inline)
def _scalar_noise(p, x, i, s2, dw, out):
    out[0] = p[2] * dw[0]


# --- Curie-Weiss: p = (beta, K, sigma) -----------------------------------------

@njit(**_inline)
def _cw_drift(p, x, i, s1, out):
    v = x[i, 0]
    out[0] = p[0] * (-(v * v * v) + v + p[1] * s1)


# --- mean-field OU: p = (theta, kappa, sigma) ----------------------------------

@njit(**_inline)
def _ou_drift(p, x, i, s1, out):
    out[0] = -p[0] * (x[i, 0] - p[1] * s1)


# --- MLE gradient flow: p = (d_y, y_1..y_dy) -----------------------------------

@njit(**_inline)
def _mle_drift(p, x, i, s1, out):
    dy = x.shape[1] - 1
    theta = x[i, 0]
    out[0] = s1 - dy * theta
    for r in range(1, dy + 1):
        xr = x[i, r]
        out[r] = -(xr - p[r]) - (xr - theta)


@njit(**_inline)
def _mle_noise(p, x, i, s2, dw, out):
    out[0] = dw[0]
    r2 = math.sqrt(2.0)
    for r in range(1, x.shape[1]):
        out[r] = r2 * dw[r]


@njit(**_inline)
def _mle_h(p, which, x, j):
    if which == 2:
        return 0.0
    s = 0.0
    for r in range(1, x.shape[1]):
        s += x[j, r]
    return s


# --- 3-D neuron: p in NEURON_FIELDS order --------------------------------------

@njit(**_inline)
def _gate(p, v):
    return p[_AR] * p[_TMAX] / (1.0 + math.exp(-p[_LAM] * (v - p[_VT])))


@njit(**_inline)
def _neuron_drift(p, x, i, s1, out):
    v, w, y = x[i, 0], x[i, 1], x[i, 2]
    out[0] = v - v * v * v / 3.0 - w + p[_I] - s1
    out[1] = p[_C] * (v + p[_A] - p[_B] * w)
    out[2] = _gate(p, v) * (1.0 - y) - p[_AD] * y


@njit(**_inline)
def neuron_b32(p, v, y):
    if y <= 0.0 or y >= 1.0:
        return 0.0
    den = 1.0 - (2.0 * y - 1.0) ** 2
    if den <= 0.0:
        return 0.0
    rate = _gate(p, v) * (1.0 - y) + p[_AD] * y
    return math.sqrt(rate) * p[_GAMMA] * math.exp(-p[_LAMBDA] / den)


@njit(**_inline)
def _neuron_noise(p, x, i, s2, dw, out):
    out[0] = p[_BEXT] * dw[0] + (-s2) * dw[2]
    out[1] = 0.0
    out[2] = neuron_b32(p, x[i, 0], x[i, 2]) * dw[1]


@njit(**_inline)
def _neuron_g(p, which, x, i):
    if which == 1:
        return p[_J] * (x[i, 0] - p[_VREV])
    return p[_BJ] * (x[i, 0] - p[_VREV])


@njit(**_inline)
def _neuron_h(p, which, x, j):
    return x[j, 2]


COEFFICIENTS = {
    CURIE_WEISS: (_cw_drift, _scalar_noise, _unit_g, _first_h),
    MEAN_FIELD_OU: (_ou_drift, _scalar_noise, _unit_g, _first_h),
    MLE_GAUSSIAN: (_mle_drift, _mle_noise, _unit_g, _mle_h),
    NEURON3D: (_neuron_drift, _neuron_noise, _neuron_g, _neuron_h),
}


# --- block kernels -------------------------------------------------------------


def _build(drift, noise, g, h):
    """Compile the block and chain kernels with the coefficients bound as constants."""

    @njit(nogil=True)
    def advance(p, x0, incs, noise_scale, snaps, hbar, out):
        S, N, d = incs.shape
        dt = 1.0 / S
        x = x0.copy()
        xn = np.empty_like(x)
        a = np.empty(d)
        nz = np.empty(d)
        for k in range(S):
            h1 = 0.0
            h2 = 0.0
            for j in range(N):
                for r in range(d):
                    snaps[k, j, r] = x[j, r]
                h1 += h(p, 1, x, j)
                h2 += h(p, 2, x, j)
            h1 /= N
            h2 /= N
            hbar[k, 0] = h1
            hbar[k, 1] = h2
            for i in range(N):
                drift(p, x, i, g(p, 1, x, i) * h1, a)
                noise(p, x, i, g(p, 2, x, i) * h2, incs[k, i], nz)
                for r in range(d):
                    v = x[i, r] + a[r] * dt + noise_scale[r] * nz[r]
                    if not np.isfinite(v):
                        return k, i
                    xn[i, r] = v
            x, xn = xn, x
        out[:, :] = x
        return -1, -1

    @njit(nogil=True)
    def chain(p, u0, hbar, incs, noise_scale, out):
        S, d = incs.shape
        dt = 1.0 / S
        u = u0.reshape((1, d)).copy()
        un = np.empty_like(u)
        a = np.empty(d)
        nz = np.empty(d)
        for k in range(S):
            drift(p, u, 0, g(p, 1, u, 0) * hbar[k, 0], a)
            noise(p, u, 0, g(p, 2, u, 0) * hbar[k, 1], incs[k], nz)
            for r in range(d):
                v = u[0, r] + a[r] * dt + noise_scale[r] * nz[r]
                if not np.isfinite(v):
                    return k
                un[0, r] = v
            u, un = un, u
        out[:] = u[0]
        return -1

    return advance, chain


_compiled = {}
_compile_lock = threading.Lock()


def _kernels_for(code):
    kernels = _compiled.get(code)
    if kernels is None:
        with _compile_lock:
            if code not in _compiled:
                _compiled[code] = _build(*COEFFICIENTS[code])
            kernels = _compiled[code]
    return kernels


def advance_block(code, p, x, incs, noise_scale, snaps, hbar):
    """Run ``incs.shape[0]`` Euler sub-steps of the N-particle system; ``x`` is overwritten.

    ``snaps[k]`` receives the pre-step cloud and ``hbar[k]`` the two means
    of ``h`` over it.  Returns ``(k, i)`` of the first non-finite update, or
    ``(-1, -1)``.
    """
    return _kernels_for(code)[0](p, x, incs, noise_scale, snaps, hbar, x)


def chain_block(code, p, u, hbar, incs, noise_scale):
    """Plugged-law Euler chain over one block; ``u`` is overwritten.  Returns failing k or -1."""
    return _kernels_for(code)[1](p, u, hbar, incs, noise_scale, u)


@njit(cache=True, nogil=True)
def gaussian_kde_1d(grid, points, weights, h):
    out = np.zeros(grid.shape[0])
    norm = 1.0 / (h * math.sqrt(2.0 * math.pi))
    for gi in range(grid.shape[0]):
        acc = 0.0
        for j in range(points.shape[0]):
            z = (grid[gi] - points[j]) / h
            acc += weights[j] * math.exp(-0.5 * z * z)
        out[gi] = acc * norm
    return out

"""Right-hand sides of the truncated curvature-mode system.

In mode space the flow couples the retained band through ordered
(p+2)-tuples q with sum(q) = n, each weighted by the kernel

    H(q1, q2) = 1/p - (p-1)*lam^2*q1*q2 - lam^2*q1^2,

the transform of (1/p) k^{p+2} + k^{p+1} k_thth + (p-1) k^p k_th^2.  Tuples
with a single nonzero entry collapse to the diagonal part

    d c[n]/dt = ((p+2)/p - lam^2 n^2) c[0]^{p+1} c[n]   (n != 0),
    d c[0]/dt = (1/p) c[0]^{p+2},

and everything else is the tuple sum over entries with at least two nonzero
components.  Three evaluators are provided:

* ``rhs_direct``      -- literal tuple enumeration (the oracle; cost
                         (2*n_max+1)^{p+2}, guarded to n_max <= 12, p <= 3);
* ``rhs_convolution`` -- term-by-term direct convolution, O(n_max^2) at p=1;
* ``rhs_fast``        -- pseudospectral product on a zero-padded grid.

The padded grid has M >= (p+3)*n_max + 1 points (rounded up to a power of
two), so products of band-limited factors cannot alias back into the band:
all three evaluators agree to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import irfft, rfft

from .errors import OversizeError, PositivityError
from .spectral import SpectralState

__all__ = [
    "h_kernel",
    "pad_size",
    "grid_extrema",
    "rhs_direct",
    "rhs_convolution",
    "rhs_fast",
    "rhs_split",
    "RhsSplit",
    "normalized_rhs",
]

DIRECT_N_MAX = 12
DIRECT_P_MAX = 3


def h_kernel(p: int, lam: float, q1, q2):
    """Tuple weight 1/p - (p-1)*lam^2*q1*q2 - lam^2*q1^2 (array friendly)."""
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    out = 1.0 / p - (p - 1) * lam**2 * q1 * q2 - lam**2 * q1**2
    return out if out.ndim else float(out)


def full_spectrum(state: SpectralState) -> np.ndarray:
    """Two-sided coefficient array z[j] = c[j - n_max], j = 0..2*n_max."""
    c = state.coeffs
    return np.concatenate([np.conj(c[:0:-1]), c])


def pad_size(params) -> int:
    """Dealiasing grid size: power of two >= (p+3)*n_max + 1.

    A power of two keeps the FFT of an exactly constant grid exactly
    spectral-pure, so constant data is an invariant subspace to the bit.
    """
    target = (params.p + 3) * params.n_max + 1
    m = 16
    while m < target:
        m *= 2
    return m


def _synth_on(coeffs: np.ndarray, m: int) -> np.ndarray:
    half = np.zeros(m // 2 + 1, dtype=np.complex128)
    half[: len(coeffs)] = coeffs
    return irfft(half, n=m) * m


def _rhs_grid(state: SpectralState) -> tuple[np.ndarray, np.ndarray]:
    """Pseudospectral derivative plus the padded-grid profile samples."""
    p, lam, n_max = state.params.p, state.params.lam, state.params.n_max
    m = pad_size(state.params)
    n = np.arange(n_max + 1, dtype=np.float64)
    k = _synth_on(state.coeffs, m)
    kd = _synth_on(state.coeffs * (1j * lam * n), m)
    kdd = _synth_on(state.coeffs * -((lam * n) ** 2), m)
    kp = k**p
    vals = kp * (k * kdd + (p - 1) * kd**2 + (k * k) / p)
    deriv = np.asarray(rfft(vals)[: n_max + 1] / m)
    deriv[0] = deriv[0].real
    return deriv, k


def grid_extrema(state: SpectralState) -> tuple[float, float]:
    """(min, max) of the profile on the dealiasing grid."""
    k = _synth_on(state.coeffs, pad_size(state.params))
    return float(k.min()), float(k.max())


def rhs_fast(state: SpectralState) -> np.ndarray:
    """Mode derivative via dealiased pseudospectral products.

    Equals ``rhs_direct`` to round-off for every admissible state; cost is a
    handful of FFTs of length O(p*n_max).
    """
    deriv, _ = _rhs_grid(state)
    return deriv


def rhs_direct(state: SpectralState) -> np.ndarray:
    """Mode derivative by brute-force enumeration of weighted tuples.

    Sums H(q1, q2) * c[q1] * ... * c[q_{p+2}] over all ordered tuples with
    every |q_i| <= n_max and sum(q) = n.  This is the reference the fast
    paths are tested against; the cost guard keeps it at desk scale.
    """
    p, lam, n_max = state.params.p, state.params.lam, state.params.n_max
    if n_max > DIRECT_N_MAX or p > DIRECT_P_MAX:
        raise OversizeError(
            f"rhs_direct guarded to n_max <= {DIRECT_N_MAX} and p <= {DIRECT_P_MAX}; "
            f"got n_max={n_max}, p={p} (use rhs_fast)"
        )
    z = full_spectrum(state)
    qs = np.arange(-n_max, n_max + 1)
    grids = np.meshgrid(*([qs] * (p + 1)), indexing="ij")
    weight = h_kernel(p, lam, grids[0], grids[1])
    partial = weight.astype(np.complex128)
    for g in grids:
        partial = partial * z[g + n_max]
    free_sum = np.zeros_like(grids[0])
    for g in grids:
        free_sum = free_sum + g
    deriv = np.zeros(n_max + 1, dtype=np.complex128)
    for n in range(n_max + 1):
        q_last = n - free_sum
        ok = np.abs(q_last) <= n_max
        idx = np.where(ok, q_last + n_max, 0)
        deriv[n] = np.sum(partial * z[idx] * ok)
    deriv[0] = deriv[0].real
    return deriv


def _conv_power(z: np.ndarray, k: int) -> np.ndarray:
    out = z
    for _ in range(k - 1):
        out = np.convolve(out, z)
    return out


def rhs_convolution(state: SpectralState) -> np.ndarray:
    """Mode derivative by direct (non-FFT) convolution of the three terms.

    Same tuple sum as ``rhs_direct`` but factored through nested
    ``np.convolve`` calls, so it stays feasible at large n_max; this is the
    O(n_max^2) "direct path" used for benchmarking against ``rhs_fast``.
    """
    p, lam, n_max = state.params.p, state.params.lam, state.params.n_max
    z = full_spectrum(state)
    q = np.arange(-n_max, n_max + 1, dtype=np.float64)
    z_dd = -((lam * q) ** 2) * z
    z_d = 1j * lam * q * z
    total = _conv_power(z, p + 2) / p
    total = total + np.convolve(z_dd, _conv_power(z, p + 1))
    if p > 1:
        total = total + (p - 1) * np.convolve(np.convolve(z_d, z_d), _conv_power(z, p))
    center = (p + 2) * n_max
    deriv = np.asarray(total[center : center + n_max + 1])
    deriv[0] = deriv[0].real
    return deriv


@dataclass(frozen=True)
class RhsSplit:
    """Diagonal/linear and tuple-coupling parts of the mode derivative.

    ``linear_coeff[n]`` is ((p+2)/p - lam^2 n^2) * c[0]^{p+1} (entry 0 unused),
    ``zero_mode_linear`` is (1/p) c[0]^{p+2}, and ``nonlinear[n]`` is the sum
    over tuples with at least two nonzero entries.
    """

    linear_coeff: np.ndarray
    zero_mode_linear: float
    nonlinear: np.ndarray


def linear_coefficients(state: SpectralState) -> np.ndarray:
    p, lam = state.params.p, state.params.lam
    n = np.arange(state.params.n_max + 1, dtype=np.float64)
    return ((p + 2) / p - lam**2 * n**2) * state.mean ** (p + 1)


def rhs_split(state: SpectralState) -> RhsSplit:
    """Separate the derivative into its diagonal part and the tuple sums."""
    p = state.params.p
    lin = linear_coefficients(state)
    zero_linear = state.mean ** (p + 2) / p
    applied = lin * state.coeffs
    applied[0] = zero_linear
    nonlinear = rhs_fast(state) - applied
    nonlinear[0] = nonlinear[0].real
    return RhsSplit(linear_coeff=lin, zero_mode_linear=zero_linear, nonlinear=nonlinear)


def normalized_rhs(state: SpectralState, check_positivity: bool = True) -> np.ndarray:
    """Mode derivative of the normalized flow, p * rhs(u) - u.

    This is the polynomial form u_tau = p u^{p+1} u_thth
    + p(p-1) u^p u_th^2 + u^{p+2} - u, whose steady state is u == 1 with
    linearized rates -(p*lam^2*n^2 - p - 1) on nonzero modes and +(p+1) on
    the mean.  Requires the profile to stay strictly positive.
    """
    deriv, grid = _rhs_grid(state)
    if check_positivity:
        gmin = float(grid.min())
        if gmin <= 0.0:
            raise PositivityError(
                f"normalized profile reached min {gmin:.3e} at t={state.t:.6g}; must stay positive"
            )
    out = state.params.p * deriv - state.coeffs
    out[0] = out[0].real
    return out

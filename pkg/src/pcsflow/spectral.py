"""Fourier representation of 2*pi/lam-periodic real curvature profiles.

Profiles are stored as a half spectrum: complex coefficients c[n] for
0 <= n <= n_max with c[-n] = conj(c[n]) implied and c[0] real, so that

    k(theta) = c[0] + 2 * sum_{n>=1} Re(c[n] * exp(i*lam*n*theta)).

The half spectrum maps directly onto numpy's rfft layout, which makes the
grid <-> spectrum round trip exact for band-limited fields and prevents the
realness constraint from drifting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft

from .errors import GridTooSmallError

__all__ = [
    "FlowParams",
    "SpectralState",
    "GridField",
    "lambda_threshold",
    "default_grid_size",
    "synthesize",
    "analyze_grid",
    "seminorm",
    "cl_deviation_bound",
    "grid_derivative_sup",
]


def lambda_threshold(p: int) -> float:
    """Smallest admissible frequency scale, sqrt((p+2)/p)."""
    return math.sqrt((p + 2) / p)


def parse_lambda(text: str) -> tuple[float, tuple[int, int]]:
    """Parse a rational frequency scale written as 'n/m' (coprime reduced)."""
    frac = Fraction(text.strip())
    n, m = frac.numerator, frac.denominator
    if n <= 0:
        raise ValueError(f"frequency scale must be positive, got {text!r}")
    return n / m, (n, m)


@dataclass(frozen=True)
class FlowParams:
    """Flow exponent p, frequency scale lam, and spectral truncation n_max.

    ``rational = (n, m)`` optionally tags lam as the reduced fraction n/m,
    which is required whenever a plane curve is attached to the profile
    (m is the winding number of the underlying curve).
    """

    p: int
    lam: float
    n_max: int
    rational: tuple[int, int] | None = None

    def __post_init__(self):
        if not isinstance(self.p, int) or self.p < 1:
            raise ValueError(f"p must be a positive integer, got {self.p!r}")
        if not isinstance(self.n_max, int) or self.n_max < 1:
            raise ValueError(f"n_max must be a positive integer, got {self.n_max!r}")
        lam = self.lam
        if self.rational is not None:
            n, m = self.rational
            if not (isinstance(n, int) and isinstance(m, int) and n > 0 and m > 0):
                raise ValueError(f"rational tag must be positive integers, got {self.rational!r}")
            if math.gcd(n, m) != 1:
                raise ValueError(f"rational tag {n}/{m} is not reduced")
            if lam is None:
                lam = n / m
                object.__setattr__(self, "lam", lam)
            elif abs(lam - n / m) > 1e-12 * max(1.0, abs(lam)):
                raise ValueError(f"lam={lam} does not match rational tag {n}/{m}")
        if lam is None:
            raise ValueError("lam is required when no rational tag is given")
        if not (lam > lambda_threshold(self.p)):
            raise ValueError(
                f"lam={lam} must exceed sqrt((p+2)/p)={lambda_threshold(self.p):.6f} for p={self.p}"
            )

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.lam

    @property
    def winding(self) -> int | None:
        """Winding number m when lam carries a rational tag."""
        return None if self.rational is None else self.rational[1]


@dataclass(frozen=True)
class SpectralState:
    """Half-spectrum snapshot of the profile at simulation time t.

    ``coeffs[n]`` is c[n] for 0 <= n <= n_max; negative modes are implied by
    conjugate symmetry and never stored.  c[0] is forced real on construction
    (rejecting anything with a relative imaginary part above 1e-12).
    """

    params: FlowParams
    t: float
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128)
        if c.shape != (self.params.n_max + 1,):
            raise ValueError(
                f"coeffs must have shape ({self.params.n_max + 1},), got {c.shape}"
            )
        c0 = c[0]
        scale = max(abs(c0), float(np.max(np.abs(c))), 1e-300)
        if abs(c0.imag) > 1e-12 * scale:
            raise ValueError(f"zero mode must be real, got imaginary part {c0.imag!r}")
        c[0] = c0.real
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "t", float(self.t))

    @property
    def mean(self) -> float:
        """The profile average, c[0]."""
        return float(self.coeffs[0].real)

    def with_coeffs(self, coeffs: np.ndarray, t: float | None = None) -> "SpectralState":
        return SpectralState(self.params, self.t if t is None else t, coeffs)

    def scaled(self, factor: float) -> "SpectralState":
        return SpectralState(self.params, self.t, self.coeffs * factor)


@dataclass(frozen=True)
class GridField:
    """Real samples on the uniform theta-grid over one period [0, 2*pi/lam)."""

    params: FlowParams
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def grid_points(self) -> int:
        return len(self.values)

    def thetas(self) -> np.ndarray:
        m = self.grid_points
        return np.arange(m) * (self.params.period / m)


def default_grid_size(params: FlowParams, factor: int = 4) -> int:
    """Default sampling size: factor*n_max rounded up to an FFT-friendly length."""
    return next_fast_len(max(factor * params.n_max, 2 * params.n_max + 1), real=True)


def synthesize(state: SpectralState, grid_points: int | None = None) -> GridField:
    """Evaluate the profile on a uniform grid of the stated size.

    Requires grid_points >= 2*n_max + 1 so no band content is lost.
    """
    n_max = state.params.n_max
    m = default_grid_size(state.params) if grid_points is None else int(grid_points)
    if m < 2 * n_max + 1:
        raise GridTooSmallError(
            f"grid of {m} points cannot resolve modes up to {n_max}; need >= {2 * n_max + 1}"
        )
    half = np.zeros(m // 2 + 1, dtype=np.complex128)
    half[: n_max + 1] = state.coeffs
    values = irfft(half, n=m) * m
    return GridField(state.params, values, t=state.t)


def analyze_grid(field: GridField) -> SpectralState:
    """Coefficients of the trigonometric interpolant, truncated to the band."""
    n_max = field.params.n_max
    m = field.grid_points
    if m < 2 * n_max + 1:
        raise GridTooSmallError(
            f"grid of {m} points underdetermines modes up to {n_max}; need >= {2 * n_max + 1}"
        )
    values = np.asarray(field.values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("grid samples contain non-finite values")
    spec = rfft(values) / m
    return SpectralState(field.params, field.t, spec[: n_max + 1])


def seminorm(state: SpectralState, beta: float) -> float:
    """max over nonzero band modes of n^beta * max(|Re c[n]|, |Im c[n]|)."""
    c = state.coeffs[1:]
    if c.size == 0:
        return 0.0
    n = np.arange(1, state.params.n_max + 1, dtype=np.float64)
    weighted = n**beta * np.maximum(np.abs(c.real), np.abs(c.imag))
    return float(np.max(weighted))


def cl_deviation_bound(state: SpectralState, l: int) -> float:
    """Coefficient bound 2*sum (lam*n)^l |c[n]| on the C^l size of k - mean(k)."""
    if l < 0:
        raise ValueError("derivative order must be nonnegative")
    c = state.coeffs[1:]
    if c.size == 0:
        return 0.0
    n = np.arange(1, state.params.n_max + 1, dtype=np.float64)
    return float(2.0 * np.sum((state.params.lam * n) ** l * np.abs(c)))


def grid_derivative_sup(state: SpectralState, l: int, grid_points: int | None = None) -> float:
    """Grid-sampled sup of the l-th derivative of k - mean(k) (cross-check value)."""
    if l < 0:
        raise ValueError("derivative order must be nonnegative")
    n = np.arange(state.params.n_max + 1, dtype=np.float64)
    dcoeffs = state.coeffs * (1j * state.params.lam * n) ** l
    dcoeffs[0] = 0.0
    deviation = SpectralState(state.params, state.t, dcoeffs)
    m = grid_points if grid_points is not None else default_grid_size(state.params, factor=8)
    return float(np.max(np.abs(synthesize(deviation, m).values)))

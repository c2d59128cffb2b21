"""Plane-curve side: perturbed m-fold circles and Gauss-map reconstruction.

A convex curve winding m times is parametrized by its outward normal angle
nu in [0, 2*pi*m]; curvature k(nu) then determines the curve through

    P(nu) = P(0) + integral_0^nu (-sin s, cos s) / k(s) ds.

Radial perturbations r(t) = 1 + delta*phi(t) of the m-fold unit circle are
converted to curvature-vs-normal-angle data by evaluating the polar
curvature and resampling it monotonically in nu.  For lam = n/m with n > 1
coprime to m the reconstruction closes automatically (1/k has no frequency
at the closure mode), so the closure residual measures quadrature error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import next_fast_len
from scipy.interpolate import PchipInterpolator

from .spectral import FlowParams, GridField, SpectralState, analyze_grid

__all__ = [
    "PerturbationSpec",
    "CurvePolyline",
    "mfold_curvature",
    "radial_perturbation_curvature",
    "reconstruct_curve",
    "hausdorff_to_circle",
    "render_svg",
    "polyline_csv",
]


@dataclass(frozen=True)
class PerturbationSpec:
    """Radial perturbation of the m-fold circle by delta * phi(theta).

    phi(theta) = sum_j amp_j * cos(j * (n/m) * theta + phase_j); the pair
    (n, m) must be coprime so lam = n/m is in lowest terms.
    """

    m: int
    n: int
    delta: float
    harmonics: tuple = ((1, 1.0, 0.0),)

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("m and n must be positive integers")
        if math.gcd(self.m, self.n) != 1:
            raise ValueError(f"m={self.m} and n={self.n} must be coprime")
        if not self.harmonics:
            raise ValueError("at least one harmonic is required")

    @property
    def lam(self) -> float:
        return self.n / self.m

    def phi(self, theta: np.ndarray, derivative: int = 0) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta)
        for j, amp, phase in self.harmonics:
            w = j * self.lam
            arg = w * theta + phase
            if derivative == 0:
                out += amp * np.cos(arg)
            elif derivative == 1:
                out += -amp * w * np.sin(arg)
            elif derivative == 2:
                out += -amp * w**2 * np.cos(arg)
            else:
                raise ValueError("derivative order must be 0, 1 or 2")
        return out

    def radius(self, theta: np.ndarray, derivative: int = 0) -> np.ndarray:
        base = 1.0 if derivative == 0 else 0.0
        return base + self.delta * self.phi(theta, derivative)


@dataclass(frozen=True)
class CurvePolyline:
    """Sampled plane curve with its closure defect and winding number."""

    points: np.ndarray
    closure_residual: float
    winding: int

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 64:
            raise ValueError("polyline needs at least 64 (x, y) points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def diameter(self) -> float:
        pts = self.points
        return float(
            math.hypot(
                pts[:, 0].max() - pts[:, 0].min(),
                pts[:, 1].max() - pts[:, 1].min(),
            )
        )


def mfold_curvature(m: int, params: FlowParams) -> SpectralState:
    """Curvature of the m-fold unit circle: k == 1."""
    if m < 1:
        raise ValueError("winding number m must be >= 1")
    if params.rational is not None and params.rational[1] != m:
        raise ValueError(f"params tag winding {params.rational[1]} != m={m}")
    coeffs = np.zeros(params.n_max + 1, dtype=np.complex128)
    coeffs[0] = 1.0
    return SpectralState(params, 0.0, coeffs)


def radial_perturbation_curvature(
    spec: PerturbationSpec, params: FlowParams, samples: int = 8192
) -> SpectralState:
    """Curvature-vs-normal-angle coefficients of the perturbed circle.

    Evaluates the polar curvature kappa = (r^2 + 2 r'^2 - r r'') /
    (r^2 + r'^2)^{3/2} and the normal angle nu = theta - arctan(r'/r) on a
    dense parameter grid, then resamples kappa monotonically onto a uniform
    nu-grid (convexity makes nu strictly increasing) and reads off the band.
    """
    if abs(params.lam - spec.lam) > 1e-12 * max(1.0, params.lam):
        raise ValueError(f"params.lam={params.lam} does not match spec n/m={spec.lam}")
    period = params.period
    # one period plus generous margins so the nu range safely covers [0, period]
    th = np.linspace(-period - 2.0, period + 2.0, int(samples * (2 * period + 4) / period))
    r = spec.radius(th)
    if np.min(r) <= 0:
        raise ValueError(f"delta={spec.delta} too large: radius reaches {np.min(r):.3e}")
    rp = spec.radius(th, 1)
    rpp = spec.radius(th, 2)
    denom = r * r + rp * rp
    kappa = (r * r + 2 * rp * rp - r * rpp) / denom**1.5
    if np.min(kappa) <= 0:
        bad = th[int(np.argmin(kappa))]
        raise ValueError(
            f"delta={spec.delta} too large: curvature {np.min(kappa):.3e} <= 0 near theta={bad:.4f}"
        )
    nu = th - np.arctan(rp / r)
    interp = PchipInterpolator(nu, kappa)
    m_grid = next_fast_len(max(8 * (2 * params.n_max + 1), 128), real=True)
    nu_grid = np.arange(m_grid) * (period / m_grid)
    field = GridField(params, interp(nu_grid))
    return analyze_grid(field)


def _evaluate_curvature(state: SpectralState, nu: np.ndarray) -> np.ndarray:
    lam = state.params.lam
    n = np.arange(1, state.params.n_max + 1)
    phases = np.exp(1j * lam * np.outer(nu, n))
    return state.mean + 2.0 * np.real(phases @ state.coeffs[1:])


def reconstruct_curve(
    state: SpectralState, m: int | None = None, samples_per_turn: int = 1024
) -> CurvePolyline:
    """Integrate the Gauss-map tangent field to recover the plane curve.

    Produces samples_per_turn * m + 1 points over nu in [0, 2*pi*m]
    (cumulative trapezoid; spectrally accurate over full periods), centered
    so the curve centroid is the origin.  The final point is the closure
    repeat; its gap to the start is the closure residual.
    """
    if m is None:
        if state.params.rational is None:
            raise ValueError("winding number required: pass m or use a rational lam tag")
        m = state.params.rational[1]
    if samples_per_turn < 64:
        raise ValueError("need at least 64 samples per turn")
    total = samples_per_turn * m
    nu = np.linspace(0.0, 2.0 * math.pi * m, total + 1)
    k = _evaluate_curvature(state, nu)
    if np.min(k) <= 0:
        raise ValueError(f"curvature must be positive to reconstruct; min {np.min(k):.3e}")
    ds = 1.0 / k
    tangent = np.stack([-np.sin(nu), np.cos(nu)], axis=1)
    integrand = tangent * ds[:, None]
    h = nu[1] - nu[0]
    increments = 0.5 * h * (integrand[1:] + integrand[:-1])
    pts = np.vstack([[0.0, 0.0], np.cumsum(increments, axis=0)])
    residual = float(np.hypot(*(pts[-1] - pts[0])))
    pts = pts - pts[:-1].mean(axis=0)
    return CurvePolyline(points=pts, closure_residual=residual, winding=m)


def hausdorff_to_circle(poly: CurvePolyline) -> float:
    """Relative max deviation from the best-fit circle (mean-radius fit)."""
    pts = poly.points[:-1] if len(poly.points) > 64 else poly.points
    center = pts.mean(axis=0)
    radii = np.hypot(pts[:, 0] - center[0], pts[:, 1] - center[1])
    r_star = float(radii.mean())
    if r_star <= 0:
        raise ValueError("degenerate polyline")
    return float(np.max(np.abs(radii - r_star)) / r_star)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def render_svg(
    frames: list[tuple[str, CurvePolyline]],
    size: int = 640,
    max_path_points: int = 512,
) -> str:
    """Deterministic SVG document: one closed path per frame, opacity graded
    from oldest to newest, legend with the frame labels."""
    if not frames:
        raise ValueError("no frames to render")
    all_pts = np.vstack([poly.points for _, poly in frames])
    lo = all_pts.min(axis=0)
    hi = all_pts.max(axis=0)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1e-12))
    pad = 0.05 * span
    view = (lo[0] - pad, lo[1] - pad, span + 2 * pad, span + 2 * pad)
    stroke = 0.004 * span

    flip = _fmt(-(2 * view[1] + view[3]))
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="{_fmt(view[0])} {_fmt(view[1])} {_fmt(view[2])} {_fmt(view[3])}">',
        f'<g fill="none" stroke="#1f4e79" stroke-width="{_fmt(stroke)}" '
        f'transform="scale(1,-1) translate(0,{flip})">',
    ]
    n_frames = len(frames)
    for i, (_, poly) in enumerate(frames):
        pts = poly.points[:-1]
        stride = max(1, int(math.ceil(len(pts) / max_path_points)))
        pts = pts[::stride]
        opacity = 1.0 if n_frames == 1 else 0.25 + 0.75 * i / (n_frames - 1)
        d = "M " + " L ".join(f"{_fmt(x)} {_fmt(y)}" for x, y in pts) + " Z"
        lines.append(f'<path stroke-opacity="{opacity:.4f}" d="{d}"/>')
    lines.append("</g>")
    font = 0.04 * span
    for i, (label, _) in enumerate(frames):
        x = view[0] + 0.02 * span
        y = view[1] + (0.05 + 0.05 * i) * span
        lines.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{_fmt(font)}" '
            f'fill="#333333" font-family="monospace">{label}</text>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def polyline_csv(poly: CurvePolyline) -> str:
    """Point table with header nu,x,y; one row per sample incl. the closure repeat."""
    total = len(poly.points) - 1
    nus = np.linspace(0.0, 2.0 * math.pi * poly.winding, total + 1)
    rows = ["nu,x,y"]
    rows.extend(
        f"{nu:.12g},{x:.12g},{y:.12g}" for nu, (x, y) in zip(nus, poly.points)
    )
    return "\n".join(rows) + "\n"

"""Adaptive time integration of the mode system up to (near) blow-up.

An embedded Dormand-Prince 5(4) pair drives the truncated system with two
step-size controls: the usual local-error controller and an explicit cap

    dt <= safety / (lam^2 * n_max^2 * c[0]^{p+1})

on the stiffest diagonal rate, which dominates and is predictable near
blow-up.  Snapshots are recorded on a log-spaced ladder in c[0] (hit exactly
by shortened steps) so the blow-up window is well resolved for rate fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrationError, PositivityError
from .rhs import grid_extrema, normalized_rhs, rhs_fast
from .spectral import SpectralState, seminorm

__all__ = ["StepControl", "Trajectory", "step", "integrate", "integrate_normalized"]

# Dormand-Prince 5(4) tableau; row 7 propagates (order 5), E is the
# difference against the embedded order-4 weights.
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_E = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


@dataclass(frozen=True)
class StepControl:
    """Error tolerances, stability safety factor, and stopping thresholds."""

    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    safety: float = 0.8
    max_step: float = 1.0
    min_step: float = 1e-18
    k0_stop: float = 1e6
    snapshots_per_decade: int = 40
    tau_snapshot_interval: float = 0.1

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "safety", "max_step", "min_step", "k0_stop"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.rel_tol < 1e-13:
            raise ValueError("rel_tol below 1e-13 is round-off dominated")
        if self.safety > 1.0:
            raise ValueError("safety factor must lie in (0, 1]")
        if self.snapshots_per_decade < 1:
            raise ValueError("snapshots_per_decade must be >= 1")


@dataclass
class Trajectory:
    """Time-ordered snapshots plus run events and the estimated blow-up time.

    Event kinds: blow_up_stop, positivity_loss, trap_violation, step_floor.
    """

    params: object
    snapshots: list = field(default_factory=list)
    events: list = field(default_factory=list)
    T_est: float | None = None

    def append(self, state: SpectralState):
        if self.snapshots and not (state.t > self.snapshots[-1].t):
            raise ValueError("snapshot times must be strictly increasing")
        self.snapshots.append(state)

    def add_event(self, t: float, kind: str, detail: str = ""):
        self.events.append((float(t), kind, detail))

    def has_event(self, kind: str) -> bool:
        return any(e[1] == kind for e in self.events)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def k0(self) -> np.ndarray:
        return np.array([s.mean for s in self.snapshots])

    def mode(self, n: int) -> np.ndarray:
        return np.array([s.coeffs[n] for s in self.snapshots])


def _rk_step(f, y: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """One DP5(4) step of the autonomous system y' = f(y)."""
    k = [f(y)]
    for row in _A[1:]:
        yi = y + dt * sum(a * ki for a, ki in zip(row, k))
        k.append(f(yi))
    y_new = y + dt * sum(b * ki for b, ki in zip(_B5, k) if b != 0.0)
    err = dt * sum(e * ki for e, ki in zip(_E, k) if e != 0.0)
    return y_new, err


def _error_norm(err: np.ndarray, y0: np.ndarray, y1: np.ndarray, control: StepControl) -> float:
    scale = control.abs_tol + control.rel_tol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def step(
    state: SpectralState, dt: float, control: StepControl, rhs=rhs_fast
) -> tuple[SpectralState, float]:
    """Advance one step of size dt; returns the new state and the scaled
    embedded-pair error norm used by the controller (accept when <= 1)."""
    if dt <= 0:
        raise ValueError("dt must be positive")

    def f(y):
        d = rhs(state.with_coeffs(y))
        if not np.all(np.isfinite(d)):
            raise IntegrationError(
                f"non-finite derivative at t={state.t:.6g} (|y|max={np.max(np.abs(y)):.3e})"
            )
        return d

    y_new, err = _rk_step(f, state.coeffs.copy(), dt)
    y_new[0] = y_new[0].real
    return state.with_coeffs(y_new, t=state.t + dt), _error_norm(err, state.coeffs, y_new, control)


def _controller_factor(err_norm: float, grow: float = 5.0, shrink: float = 0.2) -> float:
    if err_norm == 0.0:
        return grow
    return min(grow, max(shrink, 0.9 * err_norm ** (-0.2)))


def _hit_level(state, dt_hint, level, control, rhs, value, bracket_value):
    """Shorten the step so value(next state) lands on the given level.

    ``value`` maps a state to the monitored scalar (here c[0]); the caller
    guarantees the full step overshoots the level.  A few secant iterations
    are plenty because the scalar is smooth and monotone within the step.
    """
    lo, v_lo = 0.0, value(state)
    hi, v_hi = dt_hint, bracket_value
    dt = dt_hint * math.log(level / v_lo) / math.log(v_hi / v_lo)
    best, best_gap = None, float("inf")
    for _ in range(8):
        dt = min(max(dt, 1e-6 * dt_hint), dt_hint)
        cand, _ = step(state, dt, control, rhs)
        v = value(cand)
        if abs(v - level) < best_gap:
            best, best_gap = cand, abs(v - level)
        if best_gap <= 1e-12 * level:
            break
        if v > level:
            hi, v_hi = dt, v
        else:
            lo, v_lo = dt, v
        if v_hi == v_lo:
            break
        dt = lo + (hi - lo) * (level - v_lo) / (v_hi - v_lo)
    return best


def integrate(
    init: SpectralState,
    control: StepControl | None = None,
    trap_c: float | None = None,
    max_steps: int = 2_000_000,
) -> Trajectory:
    """Integrate the mode system until c[0] >= k0_stop or a failure event.

    Snapshots are written whenever c[0] crosses the next rung of the
    log ladder (snapshots_per_decade rungs per decade), with the step
    shortened to land on the rung exactly.  When ``trap_c`` is given, the
    trapping margin is monitored at every snapshot and a trap_violation
    event is recorded on the first sign change (the run continues).
    """
    control = control or StepControl()
    params = init.params
    p, lam, n_max = params.p, params.lam, params.n_max

    gmin, _ = grid_extrema(init)
    if gmin <= 0.0:
        raise PositivityError(f"initial profile must be strictly positive; grid min {gmin:.3e}")

    traj = Trajectory(params=params)
    traj.append(init)
    state = init
    margin_was_negative = False

    def record(snap: SpectralState) -> bool:
        traj.append(snap)
        nonlocal margin_was_negative
        if trap_c is not None:
            margin = snap.mean - trap_c * seminorm(snap, 2.0)
            if margin < 0.0 and not margin_was_negative:
                traj.add_event(snap.t, "trap_violation", f"margin={margin:.6e}")
                margin_was_negative = True
            elif margin >= 0.0:
                margin_was_negative = False
        return True

    if trap_c is not None:
        margin0 = init.mean - trap_c * seminorm(init, 2.0)
        if margin0 < 0.0:
            traj.add_event(init.t, "trap_violation", f"margin={margin0:.6e}")
            margin_was_negative = True

    ratio = 10.0 ** (1.0 / control.snapshots_per_decade)
    next_level = init.mean * ratio

    def stiffness_cap(k0: float) -> float:
        return control.safety / (lam**2 * n_max**2 * max(k0, 1e-300) ** (p + 1))

    dt = min(control.max_step, stiffness_cap(state.mean), 0.01 * p * state.mean ** -(p + 1))
    steps_since_snapshot = 0

    for _ in range(max_steps):
        if state.mean >= control.k0_stop:
            traj.add_event(state.t, "blow_up_stop", f"k0={state.mean:.6e}")
            break
        dt = min(dt, stiffness_cap(state.mean), control.max_step)
        if state.t + dt == state.t or dt < control.min_step:
            traj.add_event(state.t, "step_floor", f"dt={dt:.3e}")
            break
        new_state, err_norm = step(state, dt, control)
        if err_norm > 1.0:
            dt *= _controller_factor(err_norm)
            if dt < control.min_step:
                traj.add_event(state.t, "step_floor", f"dt={dt:.3e} err={err_norm:.3e}")
                break
            continue
        # exact landing on snapshot rungs (only while the mean is growing)
        if new_state.mean >= next_level > state.mean:
            landed = _hit_level(
                state, dt, next_level, control, rhs_fast, lambda s: s.mean, new_state.mean
            )
            if landed is not None:
                new_state = landed
            next_level *= ratio
            steps_since_snapshot = 0
            accepted_snapshot = True
        else:
            steps_since_snapshot += 1
            accepted_snapshot = steps_since_snapshot >= 500
            if accepted_snapshot:
                steps_since_snapshot = 0
        state = new_state
        gmin, _ = grid_extrema(state)
        if gmin <= 0.0:
            record(state)
            traj.add_event(state.t, "positivity_loss", f"grid min={gmin:.3e}")
            break
        if accepted_snapshot:
            record(state)
        while state.mean >= next_level:
            next_level *= ratio
        dt *= _controller_factor(err_norm)
    else:
        traj.add_event(state.t, "step_floor", "max_steps exhausted")

    if traj.snapshots[-1] is not state and state.t > traj.snapshots[-1].t:
        record(state)
    return traj


def integrate_normalized(
    init: SpectralState,
    tau_horizon: float,
    control: StepControl | None = None,
    renormalize_mean: bool = False,
    tau_snapshots: list[float] | None = None,
    max_steps: int = 2_000_000,
) -> Trajectory:
    """Integrate the normalized flow to tau = tau_horizon.

    The steady state u == 1 has one linearly unstable direction (the mean,
    rate p+1, the scaling mode).  With ``renormalize_mean`` the mean is
    projected back to 1 after every accepted step, which quotients that
    gauge direction and is required for clean rate measurements once the
    unstable contamination (seeded at O(deviation^2) by the quadratic
    coupling) would otherwise outgrow the decaying modes.

    Snapshots land exactly on multiples of tau_snapshot_interval, or on the
    explicit ``tau_snapshots`` list when given.
    """
    control = control or StepControl()
    params = init.params
    p, lam, n_max = params.p, params.lam, params.n_max

    state = init
    if renormalize_mean:
        c = state.coeffs.copy()
        c[0] = 1.0
        state = state.with_coeffs(c)
    gmin, gmax = grid_extrema(state)
    if gmin <= 0.0:
        raise PositivityError(f"initial profile must be strictly positive; grid min {gmin:.3e}")

    traj = Trajectory(params=params)
    traj.append(state)

    if tau_snapshots is not None:
        marks = sorted(t for t in tau_snapshots if state.t < t <= tau_horizon)
    else:
        interval = control.tau_snapshot_interval
        first = math.floor(state.t / interval) + 1
        marks = [j * interval for j in range(first, int(tau_horizon / interval) + 1)]
        if not marks or marks[-1] < tau_horizon - 1e-12:
            marks.append(tau_horizon)
    mark_idx = 0

    rhs = lambda s: normalized_rhs(s, check_positivity=False)

    def cap(peak: float) -> float:
        return control.safety / (p * lam**2 * n_max**2 * max(peak, 1.0) ** (p + 1))

    dt = min(control.max_step, cap(gmax))
    for _ in range(max_steps):
        if state.t >= tau_horizon - 1e-12:
            break
        dt = min(dt, cap(gmax), control.max_step)
        on_mark = False
        if mark_idx < len(marks) and state.t + dt >= marks[mark_idx] - 1e-12:
            dt = marks[mark_idx] - state.t
            on_mark = True
        if dt < control.min_step or state.t + dt == state.t:
            traj.add_event(state.t, "step_floor", f"dt={dt:.3e}")
            break
        new_state, err_norm = step(state, dt, control, rhs=rhs)
        if err_norm > 1.0:
            dt *= _controller_factor(err_norm)
            continue
        if renormalize_mean:
            c = new_state.coeffs.copy()
            c[0] = 1.0
            new_state = new_state.with_coeffs(c)
        state = new_state
        gmin, gmax = grid_extrema(state)
        if gmin <= 0.0:
            traj.append(state)
            traj.add_event(state.t, "positivity_loss", f"grid min={gmin:.3e}")
            break
        if on_mark:
            traj.append(state)
            mark_idx += 1
            if state.t >= tau_horizon - 1e-12:
                break
        dt *= _controller_factor(err_norm)
    else:
        traj.add_event(state.t, "step_floor", "max_steps exhausted")
    return traj

"""Compacton + trailing tail bookkeeping for dissipatively perturbed runs.

The total mass is conserved (for mass-preserving perturbations), so whatever the
shrinking compacton loses sits in the tail behind its left edge:
A_T(t) = M_c(c(0)) - M_c(c(t)). Differentiating along the moving edge gives the
tail amplitude right behind the compacton, u_T(X) = (1/c) dA_T/dt.

The simulated compacton does not end exactly at X: its left flank reaches a few
tenths past the tracked edge, so the tail is read FLANK_CELLS behind the
rearmost of the tracked and the measured edge.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
import torch
from scipy.integrate import cumulative_trapezoid

from .adiabatic_ode import VelocityTrajectory, closed_form_rhs
from .compacton_core import (
    compacton_mass,
    compacton_mass_derivative,
    mass_prefactor,
    require_exponent,
    support_halfwidth,
    velocity_from_amplitude,
)
from .grid_field import GridField
from .pde_solver import Snapshot, discrete_mass

logger = logging.getLogger(__name__)

# left-edge integrals resample the dense output this much finer than the samples
EDGE_REFINEMENT = 16
AREA_NOISE = 1e-4
# tail read-out offset behind the compacton's left edge
FLANK_CELLS = 5
# tail shed before this time carries the adjustment of the sampled initial profile
STARTUP_TIME = 50.0


@dataclass(frozen=True)
class TailRecord:
    t: float
    c_est: float
    X: float
    A_num: float
    A_adb: float
    uT_pred: float
    uT_meas: float
    A_direct: float = float("nan")
    x_meas: float = float("nan")

    COLUMNS = ("t", "c_est", "X", "A_num", "A_adb", "uT_pred", "uT_meas")

    def as_row(self) -> List[float]:
        return [getattr(self, name) for name in self.COLUMNS]


def estimate_velocity(snapshot: Snapshot, n: float) -> float:
    """Velocity of the compacton whose amplitude matches the interpolated peak."""
    _, peak = snapshot.field.locate_peak()
    if not peak > 0:
        raise ValueError(f"cannot infer a velocity from a field with maximum {peak}")
    return velocity_from_amplitude(n, peak)


def tail_area_adiabatic(n: float, c_initial: float, c_now: float) -> float:
    if not (c_now > 0 and c_initial > 0):
        raise ValueError(f"velocities must be positive, got c_initial={c_initial}, c_now={c_now}")
    if c_now > c_initial * (1.0 + 1e-12):
        raise ValueError(f"tail area needs c_now <= c_initial, got c_now={c_now} > c_initial={c_initial}")
    e = 1.0 / (n - 1.0)
    return max(0.0, mass_prefactor(n) * (c_initial**e - c_now**e))


def tail_area_numeric(snapshot: Snapshot, n: float) -> float:
    """Total discrete mass minus the mass of the compacton matching the peak."""
    return discrete_mass(snapshot.field) - compacton_mass(n, estimate_velocity(snapshot, n))


def measured_left_edge(field: GridField, n: float) -> float:
    peak_x, _ = field.locate_peak()
    return peak_x - support_halfwidth(n)


def _unwrap_after(x: float, reference: float, length: float) -> float:
    """The periodic image of x in (reference, reference + length]."""
    return reference + length - (reference - x) % length


def tail_sample_position(field: GridField, n: float, X: float) -> float:
    """Where the tail amplitude is read: FLANK_CELLS behind min(X, X_peak - halfwidth)."""
    measured = _unwrap_after(measured_left_edge(field, n), X - 0.5 * field.length, field.length)
    return min(X, measured) - FLANK_CELLS * field.dx


def _band_sum(field: GridField, lo: float, hi: float) -> float:
    """sum u_j dx over grid points in the periodic interval [lo, hi)."""
    if hi <= lo:
        return 0.0
    mask = torch.remainder(field.x - lo, field.length) < hi - lo
    return float(field.values[mask].sum()) * field.dx


def tail_area_direct(
    snapshot: Snapshot,
    n: float,
    tail_origin: Optional[float] = None,
    startup_end: Optional[float] = None,
) -> float:
    """Mass behind the compacton's left edge X_peak - halfwidth, summed on the grid.

    The last FLANK_CELLS cells before the edge hold the compacton's flank and count
    at the tail value read just behind them. Without `tail_origin` the sum runs over
    the whole domain outside the compacton. With it the sum starts at the oldest
    tail, and the start-up band [tail_origin, startup_end) counts at the tail value
    read at `startup_end`.
    """
    if (tail_origin is None) != (startup_end is None):
        raise ValueError("tail_origin and startup_end must be given together")
    field = snapshot.field
    peak_x, _ = field.locate_peak()
    halfwidth = support_halfwidth(n)
    if tail_origin is None:
        edge = peak_x - halfwidth
        lo, startup = peak_x + halfwidth - field.length, 0.0
    else:
        if not startup_end > tail_origin:
            raise ValueError(f"startup_end={startup_end} must lie right of tail_origin={tail_origin}")
        edge = _unwrap_after(peak_x - halfwidth, startup_end, field.length)
        lo, startup = startup_end, field.interpolate(startup_end) * (startup_end - tail_origin)
    front = edge - FLANK_CELLS * field.dx
    if front <= lo:
        raise ValueError(f"no tail left between {lo:.6g} and the flank at {front:.6g}")
    flank = field.interpolate(front) * (edge - front)
    return startup + _band_sum(field, lo, front) + flank


def _edge_integral(trajectory: VelocityTrajectory):
    samples = max(EDGE_REFINEMENT * trajectory.t.size, 2)
    grid = np.linspace(trajectory.t[0], trajectory.t_end, samples)
    distance = cumulative_trapezoid(trajectory.velocity_at(grid), grid, initial=0.0)
    return grid, distance


def left_edge_position(trajectory: VelocityTrajectory, X0: float, frame_speed: float = 0.0) -> Callable[[float], float]:
    """X(t) = X0 + int_0^t c(z) dz - frame_speed * t (frame_speed = c0 in the comoving grid)."""
    grid, distance = _edge_integral(trajectory)

    def position(t):
        t_arr = np.asarray(t, dtype=np.float64)
        if not (trajectory.covers(float(t_arr.min())) and trajectory.covers(float(t_arr.max()))):
            raise ValueError(f"left edge requested outside the trajectory [0, {trajectory.t_end}]")
        result = X0 + np.interp(t_arr, grid, distance) - frame_speed * t_arr
        return float(result) if result.ndim == 0 else result

    return position


def tail_shape_adiabatic(n: float, trajectory: VelocityTrajectory) -> Callable[[float], float]:
    """u_T at the left edge: (1/c) dA_T/dt with dA_T/dt = -M_c'(c) c'."""
    require_exponent(n)

    def amplitude(t):
        c = trajectory.velocity_at(float(t))
        dc_dt = closed_form_rhs(n, trajectory.spec, c)
        return -compacton_mass_derivative(n, c) * dc_dt / c

    return amplitude


def build_tail_records(
    snapshots: Sequence[Snapshot],
    n: float,
    trajectory: VelocityTrajectory,
    X0: float,
    frame_speed: float = 0.0,
) -> List[TailRecord]:
    edge = left_edge_position(trajectory, X0, frame_speed)
    shape = tail_shape_adiabatic(n, trajectory)
    records = []
    for snapshot in snapshots:
        c_est = estimate_velocity(snapshot, n)
        c_now = trajectory.velocity_at(snapshot.t)
        X = edge(snapshot.t)
        x_meas = tail_sample_position(snapshot.field, n, X)
        if snapshot.t >= 2.0 * STARTUP_TIME:
            # tail shed at time s sits at edge(s) - frame_speed * (t - s)
            band = (
                X0 - frame_speed * snapshot.t,
                edge(STARTUP_TIME) - frame_speed * (snapshot.t - STARTUP_TIME),
            )
        else:
            band = (None, None)
        record = TailRecord(
            t=snapshot.t,
            c_est=c_est,
            X=X,
            A_num=tail_area_numeric(snapshot, n),
            A_adb=tail_area_adiabatic(n, trajectory.c0, min(c_now, trajectory.c0)),
            uT_pred=shape(snapshot.t),
            uT_meas=snapshot.field.interpolate(x_meas),
            A_direct=tail_area_direct(snapshot, n, *band),
            x_meas=x_meas,
        )
        if record.A_num < -AREA_NOISE:
            logger.warning(f"t={record.t:.4g}: measured tail area {record.A_num:.3e} below the noise floor")
        records.append(record)
    return records


@dataclass(frozen=True)
class TailProfile:
    x: np.ndarray
    u_pred: np.ndarray
    u_meas: np.ndarray


def tail_profile_curve(
    n: float,
    trajectory: VelocityTrajectory,
    X0: float,
    field: GridField,
    t_snapshot: float,
    frame_speed: float = 0.0,
    n_points: int = 400,
) -> TailProfile:
    """Tail shape behind the compacton at `t_snapshot`.

    Tail mass shed at time s sits where the left edge was at s, shifted by the
    frame motion since then: x_s = X0 + int_0^s c - frame_speed * t_snapshot.
    """
    grid, distance = _edge_integral(trajectory)
    if not trajectory.covers(t_snapshot):
        raise ValueError(f"snapshot time {t_snapshot} outside the trajectory [0, {trajectory.t_end}]")
    shape = tail_shape_adiabatic(n, trajectory)
    s = np.linspace(t_snapshot / n_points, t_snapshot, n_points)
    x = X0 + np.interp(s, grid, distance) - frame_speed * t_snapshot
    u_pred = np.array([shape(value) for value in s])
    u_meas = np.array([field.interpolate(value) for value in x])
    return TailProfile(x, u_pred, u_meas)

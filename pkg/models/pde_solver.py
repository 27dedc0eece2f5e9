"""Conservative method-of-lines solver for the perturbed K(n,n) equation

    u_t - c0 u_x + (u^n)_x + (u^n)_xxx = alpha0 u_xx - beta0 u_xxxx - eps0 u

on a periodic grid (written in a frame moving with speed c0), stepped with the
implicit midpoint rule and Newton iteration on a cyclic pentadiagonal Jacobian.
"""
import logging
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import torch
from tqdm import tqdm

from operators.banded_solver import solve_cyclic_banded
from operators.stencil_kernels import knn_rhs_forward, knn_rhs_jacobian, signed_power
from utils.csv_io import write_csv

from .adiabatic_ode import Linear2, Linear4, MassDamping, PerturbationSpec
from .compacton_core import CompactonParams, require_exponent, sample_compacton, support_halfwidth
from .grid_field import GridField, GridSpec

logger = logging.getLogger(__name__)


class NewtonConvergenceError(RuntimeError):
    pass


class NonFiniteIterateError(NewtonConvergenceError):
    pass


class SimulationBlowUpError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    n: float
    c0: float = 1.0
    beta0: float = 0.0
    eps0: float = 0.0
    alpha0: float = 0.0
    dt: float = 0.1
    newton_tol: Optional[float] = None
    newton_max_iter: int = 25
    blowup_factor: float = 100.0

    def __post_init__(self):
        require_exponent(self.n)
        for name in ("c0", "beta0", "eps0", "alpha0"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"solver coefficient {name} must be finite")
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got dt={self.dt}")
        if self.newton_tol is not None and not self.newton_tol > 0:
            raise ValueError(f"newton_tol must be positive, got {self.newton_tol}")
        if self.newton_max_iter < 1:
            raise ValueError(f"newton_max_iter must be at least 1, got {self.newton_max_iter}")
        if not self.blowup_factor > 1:
            raise ValueError(f"blowup_factor must exceed 1, got {self.blowup_factor}")

    def active_perturbations(self) -> List[PerturbationSpec]:
        active = []
        if self.alpha0:
            active.append(Linear2(alpha0=self.alpha0))
        if self.beta0:
            active.append(Linear4(beta0=self.beta0))
        if self.eps0:
            active.append(MassDamping(eps0=self.eps0))
        return active

    def adiabatic_spec(self) -> PerturbationSpec:
        """The velocity-law family matching the PDE terms (unperturbed: zero Linear4)."""
        active = self.active_perturbations()
        if len(active) > 1:
            raise ValueError(
                f"velocity law needs a single perturbation family, got {[p.family.value for p in active]}"
            )
        return active[0] if active else Linear4()

    def tolerance_for(self, u: torch.Tensor) -> float:
        if self.newton_tol is not None:
            return self.newton_tol
        return 1e-12 * max(1.0, float(u.abs().max()))


def default_domain_length(c0: float, t_end: float) -> float:
    return max(120.0, 1.3 * abs(c0) * t_end)


def initial_placement(grid: GridSpec, n: float, margin: Optional[float] = None) -> float:
    """Grid-aligned compacton center near the right end, leaving the rest of the
    domain for the trailing tail."""
    if margin is None:
        margin = max(10.0, 0.02 * grid.length)
    center = grid.length - support_halfwidth(n) - margin
    return round(center / grid.dx) * grid.dx


@dataclass(frozen=True)
class SnapshotDiagnostics:
    mass: float
    momentum: float
    max_u: float
    peak_x: float


@dataclass(frozen=True)
class Snapshot:
    t: float
    field: GridField
    n: float

    @property
    def diagnostics(self) -> SnapshotDiagnostics:
        peak_x, _ = self.field.locate_peak()
        return SnapshotDiagnostics(
            mass=discrete_mass(self.field),
            momentum=discrete_momentum(self.field, self.n),
            max_u=float(self.field.values.max()),
            peak_x=peak_x,
        )


def discrete_mass(field: GridField) -> float:
    return float(field.values.sum()) * field.dx


def discrete_momentum(field: GridField, n: float) -> float:
    return float(signed_power(field.values, n + 1.0).sum()) * field.dx


def compacton_snapshot(n: float, c: float, grid: GridSpec, center: Optional[float] = None) -> Snapshot:
    if center is None:
        center = initial_placement(grid, n)
    return Snapshot(0.0, sample_compacton(CompactonParams(n, c), grid, center), n)


def spatial_rhs(field: GridField, cfg: SolverConfig) -> GridField:
    return field.with_values(
        knn_rhs_forward(field.values, cfg.n, field.dx, cfg.c0, cfg.alpha0, cfg.beta0, cfg.eps0)
    )


def newton_matrix_bands(w: torch.Tensor, cfg: SolverConfig, dx: float, dt: float) -> torch.Tensor:
    """Cyclic bands of I - dt/2 * dF/dU evaluated at the midpoint w."""
    bands = knn_rhs_jacobian(w, cfg.n, dx, cfg.c0, cfg.alpha0, cfg.beta0, cfg.eps0) * (-0.5 * dt)
    bands[2] += 1.0
    return bands


def step_implicit_midpoint(state: Snapshot, cfg: SolverConfig, dt: Optional[float] = None, step: int = 0) -> Snapshot:
    """One implicit midpoint step V = U + dt F((U + V)/2); `dt` may be negative."""
    dt = cfg.dt if dt is None else dt
    dx = state.field.dx
    u = state.field.values
    tol = cfg.tolerance_for(u)
    v = u.clone()
    residual = float("inf")
    for iteration in range(cfg.newton_max_iter + 1):
        w = 0.5 * (u + v)
        r = v - u - dt * knn_rhs_forward(w, cfg.n, dx, cfg.c0, cfg.alpha0, cfg.beta0, cfg.eps0)
        residual = float(r.abs().max())
        if not math.isfinite(residual):
            raise NonFiniteIterateError(f"step {step}: non-finite Newton iterate at iteration {iteration}")
        logger.debug(f"step {step} newton iteration {iteration}: residual {residual:.3e}")
        if residual <= tol:
            return Snapshot(state.t + dt, state.field.with_values(v), state.n)
        if iteration == cfg.newton_max_iter:
            break
        bands = newton_matrix_bands(w, cfg, dx, dt)
        delta = solve_cyclic_banded(bands.numpy(), (-r).numpy())
        v = v + torch.from_numpy(delta)
    raise NewtonConvergenceError(
        f"step {step}: Newton did not converge in {cfg.newton_max_iter} iterations "
        f"(residual {residual:.3e} > tol {tol:.3e})"
    )


@dataclass
class ConservationReport:
    rows: List[SnapshotDiagnostics] = field(default_factory=list)
    times: List[float] = field(default_factory=list)

    def add(self, snapshot: Snapshot):
        self.times.append(snapshot.t)
        self.rows.append(snapshot.diagnostics)

    @property
    def max_mass_drift(self) -> float:
        m0 = self.rows[0].mass
        return max(abs(r.mass - m0) for r in self.rows) / max(abs(m0), np.finfo(np.float64).tiny)

    @property
    def max_momentum_drift(self) -> float:
        p0 = self.rows[0].momentum
        return max(abs(r.momentum - p0) for r in self.rows) / max(abs(p0), np.finfo(np.float64).tiny)

    def as_array(self) -> np.ndarray:
        return np.array(
            [[t, r.mass, r.momentum, r.max_u, r.peak_x] for t, r in zip(self.times, self.rows)],
            dtype=np.float64,
        )


@dataclass
class SimulationResult:
    cfg: SolverConfig
    snapshots: List[Snapshot]
    report: ConservationReport


def run_simulation(
    cfg: SolverConfig,
    initial: Snapshot,
    t_end: float,
    sample_every: float,
    progress: bool = True,
) -> SimulationResult:
    if not t_end > 0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    if not sample_every > 0:
        raise ValueError(f"sample_every must be positive, got {sample_every}")
    n_steps = int(round(t_end / cfg.dt))
    stride = max(1, int(round(sample_every / cfg.dt)))
    initial_max = float(initial.field.values.abs().max())
    limit = cfg.blowup_factor * initial_max
    logger.info(
        f"simulating n={cfg.n} on N={initial.field.n_points} (dx={initial.field.dx}) for {n_steps} steps "
        f"of dt={cfg.dt} (c0={cfg.c0}, alpha0={cfg.alpha0}, beta0={cfg.beta0}, eps0={cfg.eps0})"
    )

    report = ConservationReport()
    snapshots = [initial]
    report.add(initial)
    state = initial
    for step in tqdm(range(1, n_steps + 1), disable=not progress, desc=f"n={cfg.n:g}"):
        state = step_implicit_midpoint(state, cfg, step=step)
        # fixed-step times, no accumulated rounding
        state = Snapshot(initial.t + step * cfg.dt, state.field, state.n)
        current_max = float(state.field.values.abs().max())
        if initial_max > 0 and current_max > limit:
            raise SimulationBlowUpError(
                f"step {step} (t={state.t:.4g}): max|u|={current_max:.4g} exceeds {cfg.blowup_factor}x the initial amplitude"
            )
        if step % stride == 0 or step == n_steps:
            snapshots.append(state)
            report.add(state)

    logger.info(
        f"finished at t={state.t:.4g}: mass drift {report.max_mass_drift:.3e}, "
        f"momentum drift {report.max_momentum_drift:.3e}"
    )
    return SimulationResult(cfg, snapshots, report)


def export_snapshots(result: SimulationResult, out_dir: str) -> List[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for snapshot in result.snapshots:
        path = os.path.join(out_dir, f"snap_t{snapshot.t:.1f}.csv")
        data = torch.stack([snapshot.field.x, snapshot.field.values], dim=1).numpy()
        write_csv(path, ["x", "u"], data)
        paths.append(path)
    path = os.path.join(out_dir, "conservation.csv")
    write_csv(path, ["t", "mass", "momentum", "max_u", "peak_x"], result.report.as_array())
    paths.append(path)
    return paths

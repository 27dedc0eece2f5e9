import math

import numpy as np
import pytest
import torch

from models.adiabatic_ode import Linear2, Linear4, MassDamping
from models.compacton_core import ExponentDomainError, compacton_mass, compacton_momentum_density_integral
from models.grid_field import GridSpec
from models.pde_solver import (
    NewtonConvergenceError,
    Snapshot,
    SolverConfig,
    compacton_snapshot,
    default_domain_length,
    discrete_mass,
    discrete_momentum,
    export_snapshots,
    initial_placement,
    newton_matrix_bands,
    run_simulation,
    spatial_rhs,
    step_implicit_midpoint,
)
from models.tail_analysis import estimate_velocity
from models.utils.compute_utils import fit_exponential_rate
from operators.banded_solver import cyclic_banded_to_dense
from operators.stencil_kernels import d1, knn_rhs_forward, knn_rhs_jacobian, signed_power
from utils.csv_io import read_csv


@pytest.fixture
def grid():
    return GridSpec(100.0, 0.2)


@pytest.fixture
def compacton(grid):
    return compacton_snapshot(2.0, 1.0, grid, center=50.0)


class TestStencils:
    def test_signed_power(self):
        assert signed_power(-0.001, 1.5) == pytest.approx(-3.1623e-5, rel=1e-4)
        assert signed_power(4 / 3, 2.0) == pytest.approx(16 / 9, rel=1e-15)
        assert signed_power(0.0, 1.5) == 0.0
        u = torch.tensor([-8.0, 0.0, 8.0], dtype=torch.float64)
        np.testing.assert_allclose(signed_power(u, 1.0 / 3.0).numpy(), [-2.0, 0.0, 2.0], rtol=1e-15)

    def test_constant_field(self, grid):
        u = torch.full((grid.n_points,), 0.5, dtype=torch.float64)
        out = knn_rhs_forward(u, 1.5, grid.dx, c0=1.0, alpha0=0.3, beta0=0.01)
        torch.testing.assert_close(out, torch.zeros_like(out), atol=1e-13, rtol=0.0)

    def test_telescoping(self, grid):
        u = torch.rand(grid.n_points, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
        out = knn_rhs_forward(u, 2.0, grid.dx, c0=1.0, alpha0=0.3, beta0=0.01)
        assert abs(float(out.sum())) < 1e-9

    def test_traveling_wave_identity(self, grid):
        state = compacton_snapshot(2.0, 1.0, grid, center=50.0)
        cfg = SolverConfig(n=2.0, c0=0.0)
        rhs = spatial_rhs(state.field, cfg).values
        expected = -1.0 * d1(state.field.values, grid.dx)
        inside = (state.field.x - 50.0).abs() < 2.0 * math.pi - 1.0
        assert float((rhs - expected)[inside].abs().max()) < 1e-2

    @pytest.mark.parametrize("n", [1.5, 2.0, 2.5])
    def test_jacobian_against_autograd(self, n):
        grid = GridSpec(4.0, 0.25)
        u = 0.5 + torch.rand(grid.n_points, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
        coefficients = dict(c0=1.0, alpha0=0.2, beta0=0.01, eps0=0.05)
        dense = torch.autograd.functional.jacobian(lambda v: knn_rhs_forward(v, n, grid.dx, **coefficients), u)
        bands = knn_rhs_jacobian(u, n, grid.dx, **coefficients)
        np.testing.assert_allclose(cyclic_banded_to_dense(bands.numpy()), dense.numpy(), rtol=1e-12, atol=1e-9)

    def test_newton_matrix(self, grid, compacton):
        cfg = SolverConfig(n=2.0, beta0=0.001)
        w = compacton.field.values
        bands = newton_matrix_bands(w, cfg, grid.dx, cfg.dt)
        jac = knn_rhs_jacobian(w, 2.0, grid.dx, cfg.c0, cfg.alpha0, cfg.beta0, cfg.eps0)
        torch.testing.assert_close(bands[2], 1.0 - 0.5 * cfg.dt * jac[2])
        torch.testing.assert_close(bands[0], -0.5 * cfg.dt * jac[0])


class TestConfig:
    def test_adiabatic_spec(self):
        assert SolverConfig(n=2.0, beta0=0.001).adiabatic_spec() == Linear4(beta0=0.001)
        assert SolverConfig(n=2.0, eps0=0.001).adiabatic_spec() == MassDamping(0.001)
        assert SolverConfig(n=2.0, alpha0=0.01).adiabatic_spec() == Linear2(0.01)
        assert SolverConfig(n=2.0).adiabatic_spec().is_zero()
        with pytest.raises(ValueError):
            SolverConfig(n=2.0, beta0=0.001, eps0=0.001).adiabatic_spec()

    def test_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(n=2.0, dt=0.0)
        with pytest.raises(ValueError):
            SolverConfig(n=2.0, newton_max_iter=0)
        with pytest.raises(ExponentDomainError):
            SolverConfig(n=3.5)

    def test_default_tolerance(self):
        cfg = SolverConfig(n=2.0)
        assert cfg.tolerance_for(torch.tensor([0.5])) == 1e-12
        assert cfg.tolerance_for(torch.tensor([-4.0])) == pytest.approx(4e-12)
        assert SolverConfig(n=2.0, newton_tol=1e-10).tolerance_for(torch.tensor([4.0])) == 1e-10

    def test_domain_defaults(self):
        assert default_domain_length(1.0, 50.0) == 120.0
        assert default_domain_length(1.0, 500.0) == pytest.approx(650.0)
        grid = GridSpec(700.0, 0.2)
        center = initial_placement(grid, 2.0)
        assert center + 2.0 * math.pi < grid.length
        assert center / grid.dx == pytest.approx(round(center / grid.dx), abs=1e-9)


class TestDiagnostics:
    def test_sampled_compacton(self, compacton):
        assert discrete_mass(compacton.field) == pytest.approx(8.0 * math.pi / 3.0, rel=1e-3)
        assert discrete_momentum(compacton.field, 2.0) == pytest.approx(80.0 * math.pi / 27.0, rel=1e-3)
        assert discrete_momentum(compacton.field, 2.0) == pytest.approx(
            3.0 * compacton_momentum_density_integral(2.0, 1.0), rel=1e-3
        )

    def test_zero_field(self, grid):
        assert discrete_mass(grid.zeros()) == 0.0
        assert discrete_momentum(grid.zeros(), 1.5) == 0.0

    def test_snapshot_diagnostics(self, compacton):
        diagnostics = compacton.diagnostics
        assert diagnostics.max_u == pytest.approx(4 / 3)
        assert diagnostics.peak_x == pytest.approx(50.0, abs=1e-9)
        assert diagnostics.mass == pytest.approx(compacton_mass(2.0, 1.0), rel=1e-3)


class TestImplicitMidpoint:
    def test_zero_field_is_fixed(self, grid):
        state = Snapshot(0.0, grid.zeros(), 2.0)
        out = step_implicit_midpoint(state, SolverConfig(n=2.0, beta0=0.001))
        assert out.t == pytest.approx(0.1)
        assert bool((out.field.values == 0.0).all())

    def test_mass_conserved(self, compacton):
        cfg = SolverConfig(n=2.0, beta0=0.001)
        state = compacton
        m0 = discrete_mass(state.field)
        for step in range(10):
            state = step_implicit_midpoint(state, cfg, step=step)
        assert abs(discrete_mass(state.field) - m0) / m0 < 1e-9

    def test_time_symmetric(self, compacton):
        cfg = SolverConfig(n=2.0, c0=1.0)
        forward = step_implicit_midpoint(compacton, cfg)
        back = step_implicit_midpoint(forward, cfg, dt=-cfg.dt)
        assert back.t == pytest.approx(0.0, abs=1e-15)
        assert float((back.field.values - compacton.field.values).abs().max()) < 1e-10

    def test_linear_damping_law(self, compacton):
        eps0, dt = 0.01, 0.1
        cfg = SolverConfig(n=2.0, eps0=eps0, dt=dt)
        state = compacton
        m0 = discrete_mass(state.field)
        for step in range(10):
            state = step_implicit_midpoint(state, cfg, step=step)
        h = 0.5 * eps0 * dt
        assert discrete_mass(state.field) / m0 == pytest.approx(((1.0 - h) / (1.0 + h)) ** 10, rel=1e-9)
        assert discrete_mass(state.field) / m0 == pytest.approx(math.exp(-eps0 * 1.0), rel=1e-6)

    def test_newton_failure(self, compacton):
        cfg = SolverConfig(n=2.0, newton_tol=1e-300, newton_max_iter=2)
        with pytest.raises(NewtonConvergenceError, match="step 7"):
            step_implicit_midpoint(compacton, cfg, step=7)


class TestRunSimulation:
    def test_short_unperturbed_run(self, compacton):
        cfg = SolverConfig(n=2.0, c0=1.0)
        result = run_simulation(cfg, compacton, t_end=2.0, sample_every=1.0, progress=False)
        assert [s.t for s in result.snapshots] == pytest.approx([0.0, 1.0, 2.0])
        assert result.report.max_mass_drift <= 1e-9
        assert result.report.max_momentum_drift <= 1e-2
        assert result.report.as_array().shape == (3, 5)

    def test_dissipation_lowers_peak(self, compacton):
        cfg = SolverConfig(n=2.0, c0=1.0, beta0=0.1)
        result = run_simulation(cfg, compacton, t_end=10.0, sample_every=1.0, progress=False)
        peaks = [s.diagnostics.max_u for s in result.snapshots]
        assert peaks[-1] < peaks[0]

    def test_invalid_arguments(self, compacton):
        cfg = SolverConfig(n=2.0)
        with pytest.raises(ValueError):
            run_simulation(cfg, compacton, t_end=0.0, sample_every=1.0, progress=False)
        with pytest.raises(ValueError):
            run_simulation(cfg, compacton, t_end=1.0, sample_every=0.0, progress=False)

    def test_export(self, compacton, tmp_path):
        cfg = SolverConfig(n=2.0, c0=1.0)
        result = run_simulation(cfg, compacton, t_end=0.2, sample_every=0.1, progress=False)
        paths = export_snapshots(result, str(tmp_path))
        names = sorted(p.rsplit("/", 1)[-1] for p in paths)
        assert names == ["conservation.csv", "snap_t0.0.csv", "snap_t0.1.csv", "snap_t0.2.csv"]
        header, data = read_csv(str(tmp_path / "snap_t0.0.csv"))
        assert header == ["x", "u"]
        np.testing.assert_array_equal(data[:, 1], compacton.field.values.numpy())
        header, data = read_csv(str(tmp_path / "conservation.csv"))
        assert header == ["t", "mass", "momentum", "max_u", "peak_x"]
        assert data.shape == (3, 5)

    @pytest.mark.slow
    def test_comoving_compacton_is_stationary(self, grid, compacton):
        cfg = SolverConfig(n=2.0, c0=1.0)
        result = run_simulation(cfg, compacton, t_end=100.0, sample_every=10.0, progress=False)
        final = result.snapshots[-1]
        reference = compacton.field.values
        shape_error = float((final.field.values - reference).abs().max() / reference.abs().max())
        assert shape_error <= 0.05
        assert abs(final.diagnostics.peak_x - 50.0) <= grid.dx
        assert result.report.max_mass_drift <= 1e-9

    @pytest.mark.slow
    def test_spatial_convergence(self):
        errors = []
        for dx in (0.4, 0.2):
            grid = GridSpec(100.0, dx)
            initial = compacton_snapshot(2.0, 1.0, grid, center=50.0)
            result = run_simulation(SolverConfig(n=2.0, c0=1.0, dt=0.05), initial, 10.0, 10.0, progress=False)
            final = result.snapshots[-1].field.values
            errors.append(float((final - initial.field.values).abs().max()))
        assert errors[0] / errors[1] >= 3.0

    @pytest.mark.slow
    def test_mass_damping_decay_rates(self):
        eps0, n = 0.001, 2.0
        grid = GridSpec(700.0, 0.2)
        initial = compacton_snapshot(n, 1.0, grid)
        cfg = SolverConfig(n=n, c0=1.0, beta0=0.0, eps0=eps0)
        result = run_simulation(cfg, initial, 500.0, sample_every=50.0, progress=False)
        table = result.report.as_array()
        assert fit_exponential_rate(table[:, 0], table[:, 1]) == pytest.approx(eps0, rel=0.02)
        velocities = [estimate_velocity(s, n) for s in result.snapshots]
        assert fit_exponential_rate(table[:, 0], velocities) == pytest.approx(eps0 * (n - 1.0), rel=0.05)

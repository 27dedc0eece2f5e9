import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import ClassVar, List, Optional, Sequence

import numpy as np
import transformers

from models.adiabatic_ode import amplitude_from_velocity, make_perturbation, solve_velocity_ode
from models.compacton_core import PerturbationFamily, require_exponent, support_halfwidth, validate_exponent
from models.grid_field import GridSpec
from models.pde_solver import (
    SolverConfig,
    compacton_snapshot,
    default_domain_length,
    export_snapshots,
    initial_placement,
    run_simulation,
)
from models.tail_analysis import TailRecord, build_tail_records, estimate_velocity, tail_profile_curve
from models.utils.compute_utils import fit_exponential_rate
from utils.check_suites import run_suites
from utils.config import ConfigArgumentParser, register_section
from utils.csv_io import write_csv, write_metadata

logger = logging.getLogger(__name__)

COMMANDS = ("ode", "simulate", "figure1", "figure2", "check")
FAMILIES = [family.value for family in PerturbationFamily]

DESK_T_END = 500.0
DESK_LENGTH = 700.0
FULL_T_END = 2000.0
FULL_LENGTH = 2400.0
FIGURE1_EXPONENTS = "2,3/2,5/4"
FIGURE1_EXPONENTS_FULL = "2,5/3,3/2,7/5,4/3,9/7,5/4"
FIGURE2_EXPONENTS = "2,5/4"
FIGURE2_EXPONENTS_FULL = "3,2,7/5,5/4"
FIGURE2_BETAS = "0.01,0.001"
FIGURE2_BETAS_FULL = "0.01,0.005,0.001"


@register_section
@dataclass
class OdeArguments:
    config_section: ClassVar[str] = "ode"
    n: float = field(default=2.0, metadata={"help": "Exponent n of the K(n,n) equation."})
    family: str = field(
        default="linear4",
        metadata={"help": f"Perturbation family. (Available: {FAMILIES})", "choices": FAMILIES},
    )
    c0: float = field(default=1.0, metadata={"help": "Initial compacton velocity."})
    t_end: float = field(default=1000.0, metadata={"help": "Final time of the integration."})
    samples: int = field(default=201, metadata={"help": "Number of equally spaced output samples."})
    rtol: float = field(default=1e-10, metadata={"help": "Relative tolerance of the RK45 integrator."})
    atol: float = field(default=1e-12, metadata={"help": "Absolute tolerance of the RK45 integrator."})


@register_section
@dataclass
class PerturbationArguments:
    config_section: ClassVar[str] = "perturbation"
    eps0: float = field(default=0.0, metadata={"help": "Linear damping -eps0*u."})
    alpha0: float = field(default=0.0, metadata={"help": "Second-order coefficient of u_xx."})
    alpha1: float = field(default=0.0, metadata={"help": "Second-order coefficient of u_xt."})
    alpha2: float = field(default=0.0, metadata={"help": "Second-order coefficient of u_tt."})
    beta0: float = field(default=0.0, metadata={"help": "Fourth-order coefficient of u_xxxx."})
    beta1: float = field(default=0.0, metadata={"help": "Fourth-order coefficient of u_xxxt."})
    beta2: float = field(default=0.0, metadata={"help": "Fourth-order coefficient of u_xxtt."})
    beta3: float = field(default=0.0, metadata={"help": "Fourth-order coefficient of u_xttt."})
    beta4: float = field(default=0.0, metadata={"help": "Fourth-order coefficient of u_tttt."})
    gamma0: float = field(default=0.0, metadata={"help": "Sixth-order coefficients, gamma_i multiplies i time derivatives."})
    gamma1: float = field(default=0.0)
    gamma2: float = field(default=0.0)
    gamma3: float = field(default=0.0)
    gamma4: float = field(default=0.0)
    gamma5: float = field(default=0.0)
    gamma6: float = field(default=0.0)
    delta1: float = field(default=0.0, metadata={"help": "Coefficient of (n-1) n u_x^2 u^(n-2)."})
    delta2: float = field(default=0.0, metadata={"help": "Coefficient of n u_xx u^(n-1)."})
    eta1: float = field(default=0.0, metadata={"help": "Coefficient of u_x^4 u^(n-4)."})
    eta2: float = field(default=0.0, metadata={"help": "Coefficient of u_x^2 u_xx u^(n-3)."})
    eta3: float = field(default=0.0, metadata={"help": "Coefficient of u_xx^2 u^(n-2)."})
    eta4: float = field(default=0.0, metadata={"help": "Coefficient of u_x u_xxx u^(n-2)."})
    eta5: float = field(default=0.0, metadata={"help": "Coefficient of u_xxxx u^(n-1)."})


@register_section
@dataclass
class CompactonArguments:
    config_section: ClassVar[str] = "compacton"
    n: float = field(default=2.0, metadata={"help": "Exponent n of the K(n,n) equation."})
    c: float = field(default=1.0, metadata={"help": "Velocity of the initial compacton."})


@register_section
@dataclass
class GridArguments:
    config_section: ClassVar[str] = "grid"
    dx: float = field(default=0.2, metadata={"help": "Grid spacing."})
    length: Optional[float] = field(
        default=None, metadata={"help": "Periodic domain length. Default: 700 (desk) or 2400 (--full)."}
    )
    center: Optional[float] = field(
        default=None, metadata={"help": "Initial compacton center. Default: near the right end of the domain."}
    )


@register_section
@dataclass
class SolverArguments:
    config_section: ClassVar[str] = "solver"
    c0: float = field(default=1.0, metadata={"help": "Speed of the computational frame."})
    alpha0: float = field(default=0.0, metadata={"help": "Second-order dissipation alpha0*u_xx."})
    beta0: float = field(default=0.001, metadata={"help": "Fourth-order dissipation -beta0*u_xxxx."})
    eps0: float = field(default=0.0, metadata={"help": "Linear damping -eps0*u."})
    dt: float = field(default=0.1, metadata={"help": "Implicit midpoint time step."})
    newton_tol: Optional[float] = field(
        default=None, metadata={"help": "Newton max-norm residual tolerance. Default: 1e-12*max(1, max|u|)."}
    )
    newton_max_iter: int = field(default=25, metadata={"help": "Newton iterations before a step is rejected."})
    blowup_factor: float = field(default=100.0, metadata={"help": "Abort when max|u| exceeds this multiple of the initial amplitude."})


@register_section
@dataclass
class RunArguments:
    config_section: ClassVar[str] = "run"
    t_end: Optional[float] = field(default=None, metadata={"help": "Final time. Default: 500 (desk) or 2000 (--full)."})
    sample_every: float = field(default=10.0, metadata={"help": "Snapshot cadence."})
    full: bool = field(default=False, metadata={"help": "Full-scale figure runs (long domains, minutes of runtime)."})
    num_workers: int = field(default=1, metadata={"help": "Worker processes for figure sweeps."})


@register_section
@dataclass
class FigureArguments:
    config_section: ClassVar[str] = "figure"
    n_list: Optional[str] = field(default=None, metadata={"help": "Comma separated exponents, fractions allowed (e.g. 2,3/2,5/4)."})
    beta0_list: Optional[str] = field(default=None, metadata={"help": "Comma separated beta0 values (figure2)."})
    c: float = field(default=1.0, metadata={"help": "Velocity of the initial compacton."})
    t_snapshot: Optional[float] = field(default=None, metadata={"help": "Snapshot time of the tail profile (figure2). Default: t_end."})


@register_section
@dataclass
class CheckArguments:
    config_section: ClassVar[str] = "check"
    suite: str = field(default="all", metadata={"help": "Check suite to run (oracle, mass-balance, reductions, dissipativity, conservation, divergence, analytic, all)."})
    seed: int = field(default=0, metadata={"help": "Seed of the random reduction draws."})
    draws: int = field(default=100, metadata={"help": "Number of random reduction draws."})
    t_end: float = field(default=100.0, metadata={"help": "Final time of the conservation run."})


@register_section
@dataclass
class OutputArguments:
    config_section: ClassVar[str] = "output"
    out_dir: str = field(default="exp_results", metadata={"help": "Output directory (env COMPACTON_OUTPUT_DIR overrides)."})
    progress: bool = field(default=True, metadata={"help": "Show progress bars."})
    log_level: str = field(default="info", metadata={"help": "Logging level.", "choices": ["debug", "info", "warning", "error"]})


COMMAND_ARGUMENTS = {
    "ode": (OdeArguments, PerturbationArguments, OutputArguments),
    "simulate": (CompactonArguments, GridArguments, SolverArguments, RunArguments, OutputArguments),
    "figure1": (FigureArguments, GridArguments, SolverArguments, RunArguments, OutputArguments),
    "figure2": (FigureArguments, GridArguments, SolverArguments, RunArguments, OutputArguments),
    "check": (CheckArguments, OutputArguments),
}


def setup_logging(log_level: str):
    logging.basicConfig(
        format="%(asctime)s - %(levelname)s - %(name)s - %(message)s",
        datefmt="%m/%d/%Y %H:%M:%S",
        handlers=[logging.StreamHandler(sys.stdout)],
        force=True,
    )
    level = getattr(logging, log_level.upper())
    logging.getLogger().setLevel(level)
    transformers.utils.logging.set_verbosity(level)


def parse_exponent_list(text: str) -> List[float]:
    try:
        return [float(Fraction(item.strip())) for item in text.split(",") if item.strip()]
    except (ValueError, ZeroDivisionError) as err:
        raise ValueError(f"cannot parse exponent list {text!r}: {err}") from err


def parse_float_list(text: str) -> List[float]:
    return [float(item) for item in text.split(",") if item.strip()]


def exponent_label(n: float) -> str:
    return format(n, ".6g")


# ---------------------------------------------------------------------------
# ode
# ---------------------------------------------------------------------------
def cmd_ode(ode_args: OdeArguments, perturbation_args: PerturbationArguments, output_args: OutputArguments) -> str:
    family = PerturbationFamily(ode_args.family)
    require_exponent(ode_args.n, family)
    spec = make_perturbation(family, **asdict(perturbation_args))
    trajectory = solve_velocity_ode(
        ode_args.n,
        spec,
        ode_args.c0,
        ode_args.t_end,
        tol=ode_args.rtol,
        atol=ode_args.atol,
        n_samples=ode_args.samples,
    )
    path = os.path.join(output_args.out_dir, f"ode_{family.value}_n{exponent_label(ode_args.n)}.csv")
    data = np.column_stack([trajectory.t, trajectory.c, trajectory.amplitudes()])
    write_csv(path, ["t", "c", "amplitude"], data)
    logger.info(
        f"{family.value} n={ode_args.n}: c({trajectory.t_end:g}) = {trajectory.c[-1]:.12g} "
        f"({trajectory.nfev} rhs evaluations) -> {path}"
    )
    if trajectory.truncated_reason:
        logger.warning(trajectory.truncated_reason)
    return path


# ---------------------------------------------------------------------------
# simulate / figures
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class RunPlan:
    n: float
    c: float
    cfg: SolverConfig
    grid: GridSpec
    center: float
    t_end: float
    sample_every: float
    out_dir: str
    progress: bool


def resolve_run(n, c, grid_args, solver_args, run_args, output_args, beta0=None) -> RunPlan:
    t_end = run_args.t_end if run_args.t_end is not None else (FULL_T_END if run_args.full else DESK_T_END)
    length = grid_args.length
    if length is None:
        length = FULL_LENGTH if run_args.full else max(DESK_LENGTH, default_domain_length(solver_args.c0, t_end))
    cfg = SolverConfig(
        n=n,
        c0=solver_args.c0,
        beta0=solver_args.beta0 if beta0 is None else beta0,
        eps0=solver_args.eps0,
        alpha0=solver_args.alpha0,
        dt=solver_args.dt,
        newton_tol=solver_args.newton_tol,
        newton_max_iter=solver_args.newton_max_iter,
        blowup_factor=solver_args.blowup_factor,
    )
    grid = GridSpec(length, grid_args.dx)
    center = grid_args.center if grid_args.center is not None else initial_placement(grid, n)
    return RunPlan(n, c, cfg, grid, center, t_end, run_args.sample_every, output_args.out_dir, output_args.progress)


@dataclass
class RunOutcome:
    plan: RunPlan
    result: object
    trajectory: Optional[object]
    records: List[TailRecord]
    X0: float


def execute_run(plan: RunPlan) -> RunOutcome:
    initial = compacton_snapshot(plan.n, plan.c, plan.grid, plan.center)
    result = run_simulation(plan.cfg, initial, plan.t_end, plan.sample_every, progress=plan.progress)
    X0 = plan.center - support_halfwidth(plan.n)
    try:
        spec = plan.cfg.adiabatic_spec()
    except ValueError as err:
        logger.warning(f"tail analysis skipped: {err}")
        return RunOutcome(plan, result, None, [], X0)
    t_eval = np.array([s.t for s in result.snapshots])
    trajectory = solve_velocity_ode(plan.n, spec, plan.c, result.snapshots[-1].t, t_eval=t_eval)
    records = build_tail_records(result.snapshots, plan.n, trajectory, X0, frame_speed=plan.cfg.c0)
    return RunOutcome(plan, result, trajectory, records, X0)


def cmd_simulate(
    compacton_args: CompactonArguments,
    grid_args: GridArguments,
    solver_args: SolverArguments,
    run_args: RunArguments,
    output_args: OutputArguments,
) -> str:
    plan = resolve_run(compacton_args.n, compacton_args.c, grid_args, solver_args, run_args, output_args)
    cfg = plan.cfg
    run_dir = os.path.join(
        output_args.out_dir,
        f"simulate_n{exponent_label(cfg.n)}_beta{cfg.beta0:g}_eps{cfg.eps0:g}_alpha{cfg.alpha0:g}",
    )
    outcome = execute_run(plan)
    export_snapshots(outcome.result, run_dir)
    if outcome.records:
        write_csv(
            os.path.join(run_dir, "tail.csv"),
            TailRecord.COLUMNS,
            [record.as_row() for record in outcome.records],
        )
    report = outcome.result.report
    logger.info(f"mass drift {report.max_mass_drift:.3e}, momentum drift {report.max_momentum_drift:.3e}")
    if cfg.eps0 > 0:
        table = report.as_array()
        mass_rate = fit_exponential_rate(table[:, 0], table[:, 1])
        velocity_rate = fit_exponential_rate(
            table[:, 0], [estimate_velocity(s, cfg.n) for s in outcome.result.snapshots]
        )
        logger.info(
            f"fitted mass decay rate {mass_rate:.6g} (eps0={cfg.eps0:g}); velocity decay rate "
            f"{velocity_rate:.6g} (eps0*(n-1)={cfg.eps0 * (cfg.n - 1.0):g})"
        )
    logger.info(f"wrote {run_dir}")
    return run_dir


def run_figure1_job(plan: RunPlan) -> str:
    outcome = execute_run(plan)
    path = os.path.join(plan.out_dir, f"figure1_n{exponent_label(plan.n)}.csv")
    write_csv(path, ["t", "A_num", "A_adb"], [[r.t, r.A_num, r.A_adb] for r in outcome.records])
    logger.info(f"figure1 n={plan.n}: A_num={outcome.records[-1].A_num:.6g}, A_adb={outcome.records[-1].A_adb:.6g} -> {path}")
    return path


@dataclass(frozen=True)
class Figure2Plan:
    run: RunPlan
    t_snapshot: float


def run_figure2_job(job: Figure2Plan) -> str:
    plan = job.run
    outcome = execute_run(plan)
    snapshot = min(outcome.result.snapshots, key=lambda s: abs(s.t - job.t_snapshot))
    profile = tail_profile_curve(
        plan.n, outcome.trajectory, outcome.X0, snapshot.field, snapshot.t, frame_speed=plan.cfg.c0
    )
    stem = os.path.join(plan.out_dir, f"figure2_n{exponent_label(plan.n)}_beta{plan.cfg.beta0:g}")
    write_csv(stem + ".csv", ["x", "u_pred", "u_meas"], np.column_stack([profile.x, profile.u_pred, profile.u_meas]))
    front = next(r for r in outcome.records if r.t == snapshot.t)
    write_metadata(
        stem + ".json",
        {
            "n": plan.n,
            "beta0": plan.cfg.beta0,
            "t": snapshot.t,
            "limiting": validate_exponent(plan.n).limiting,
            "c_est": front.c_est,
            "c_ode": outcome.trajectory.velocity_at(snapshot.t),
            "front": {"X": front.X, "x_meas": front.x_meas, "uT_pred": front.uT_pred, "uT_meas": front.uT_meas},
        },
    )
    logger.info(f"figure2 n={plan.n} beta0={plan.cfg.beta0:g}: uT_pred={front.uT_pred:.4e}, uT_meas={front.uT_meas:.4e}")
    return stem + ".csv"


def dispatch(job_fn, jobs: Sequence, num_workers: int) -> List[str]:
    if num_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=num_workers) as pool:
            return list(pool.map(job_fn, jobs))
    return [job_fn(job) for job in jobs]


def cmd_figure1(figure_args, grid_args, solver_args, run_args, output_args) -> List[str]:
    default = FIGURE1_EXPONENTS_FULL if run_args.full else FIGURE1_EXPONENTS
    exponents = parse_exponent_list(figure_args.n_list or default)
    plans = [resolve_run(n, figure_args.c, grid_args, solver_args, run_args, output_args) for n in exponents]
    for plan in plans:
        plan.cfg.adiabatic_spec()
    os.makedirs(output_args.out_dir, exist_ok=True)
    return dispatch(run_figure1_job, plans, run_args.num_workers)


def cmd_figure2(figure_args, grid_args, solver_args, run_args, output_args) -> List[str]:
    exponents = parse_exponent_list(figure_args.n_list or (FIGURE2_EXPONENTS_FULL if run_args.full else FIGURE2_EXPONENTS))
    betas = parse_float_list(figure_args.beta0_list or (FIGURE2_BETAS_FULL if run_args.full else FIGURE2_BETAS))
    jobs = []
    for n in exponents:
        for beta0 in betas:
            plan = resolve_run(n, figure_args.c, grid_args, solver_args, run_args, output_args, beta0=beta0)
            plan.cfg.adiabatic_spec()
            t_snapshot = figure_args.t_snapshot if figure_args.t_snapshot is not None else plan.t_end
            if not 0 < t_snapshot <= plan.t_end:
                raise ValueError(f"t_snapshot={t_snapshot} must lie in (0, t_end={plan.t_end}]")
            jobs.append(Figure2Plan(plan, t_snapshot))
    os.makedirs(output_args.out_dir, exist_ok=True)
    return dispatch(run_figure2_job, jobs, run_args.num_workers)


def cmd_check(check_args: CheckArguments, output_args: OutputArguments) -> bool:
    results = run_suites(
        check_args.suite,
        seed=check_args.seed,
        draws=check_args.draws,
        t_end=check_args.t_end,
        progress=output_args.progress,
    )
    for result in results:
        logger.info(f"[{'PASS' if result.passed else 'FAIL'}] {result.name}")
        for line in result.details:
            logger.info(f"    {line}")
    return all(result.passed for result in results)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in COMMANDS:
        print(f"usage: run_compacton.py {{{','.join(COMMANDS)}}} [--config FILE] [options]", file=sys.stderr)
        return 2
    command, rest = argv[0], argv[1:]
    parser = ConfigArgumentParser(COMMAND_ARGUMENTS[command], prog=f"run_compacton.py {command}")
    try:
        groups = parser.parse_with_config(rest)
    except ValueError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    setup_logging(groups[-1].log_level)
    logger.info(f"{command}: {groups}")

    try:
        if command == "ode":
            cmd_ode(*groups)
        elif command == "simulate":
            cmd_simulate(*groups)
        elif command == "figure1":
            cmd_figure1(*groups)
        elif command == "figure2":
            cmd_figure2(*groups)
        elif not cmd_check(*groups):
            return 1
    except ValueError as err:
        logger.error(f"validation error: {err}")
        return 2
    except RuntimeError as err:
        logger.error(f"runtime failure: {err}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Adiabatic velocity laws c'(t) for weakly perturbed compactons.

Each perturbation family has a closed-form right-hand side obtained from the
momentum balance d/dt int u^(n+1)/(n+1) dx = int u^n P(u) dx evaluated on the
compacton. `oracle_rhs` re-evaluates the same balance by quadrature with exact
derivatives of the compacton so that every closed form can be checked
independently.
"""
import enum
import logging
import math
from dataclasses import dataclass, field, fields
from typing import Callable, ClassVar, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from operators.derivative_kernels import cos_power_derivative_coefficients, reduced_derivative
from operators.quadrature import tanh_sinh

from .compacton_core import (
    LINEAR6_EXPONENT_BOUND,
    PerturbationFamily,
    amplitude_from_velocity,
    compacton_mass_derivative,
    compacton_momentum_density_derivative,
    log_amplitude,
    require_exponent,
    wavenumber,
)

logger = logging.getLogger(__name__)

VELOCITY_FLOOR = 1e-12
VELOCITY_CEILING = 1e6


@dataclass(frozen=True)
class PerturbationSpec:
    """Base of the perturbation variants; exactly one variant is used at a time."""

    family: ClassVar[PerturbationFamily]

    def __post_init__(self):
        for name, value in self.coefficients().items():
            if not math.isfinite(value):
                raise ValueError(f"{self.family.value} coefficient {name}={value} is not finite")

    def coefficients(self) -> Dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}

    def active_coefficients(self) -> Dict[str, float]:
        return {name: value for name, value in self.coefficients().items() if value != 0.0}

    def is_zero(self) -> bool:
        return not self.active_coefficients()


@dataclass(frozen=True)
class MassDamping(PerturbationSpec):
    family: ClassVar[PerturbationFamily] = PerturbationFamily.MASS_DAMPING
    eps0: float = 0.0


@dataclass(frozen=True)
class Linear2(PerturbationSpec):
    family: ClassVar[PerturbationFamily] = PerturbationFamily.LINEAR2
    alpha0: float = 0.0
    alpha1: float = 0.0
    alpha2: float = 0.0


@dataclass(frozen=True)
class Linear4(PerturbationSpec):
    family: ClassVar[PerturbationFamily] = PerturbationFamily.LINEAR4
    beta0: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0
    beta3: float = 0.0
    beta4: float = 0.0


@dataclass(frozen=True)
class Linear6(PerturbationSpec):
    family: ClassVar[PerturbationFamily] = PerturbationFamily.LINEAR6
    gamma0: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0
    gamma3: float = 0.0
    gamma4: float = 0.0
    gamma5: float = 0.0
    gamma6: float = 0.0


@dataclass(frozen=True)
class Nonlinear2(PerturbationSpec):
    family: ClassVar[PerturbationFamily] = PerturbationFamily.NONLINEAR2
    delta1: float = 0.0
    delta2: float = 0.0

    @classmethod
    def from_power_second_derivative(cls, delta: float) -> "Nonlinear2":
        """delta * (u^n)_xx, i.e. delta1 = delta2 = delta."""
        return cls(delta, delta)


@dataclass(frozen=True)
class Nonlinear4(PerturbationSpec):
    family: ClassVar[PerturbationFamily] = PerturbationFamily.NONLINEAR4
    eta1: float = 0.0
    eta2: float = 0.0
    eta3: float = 0.0
    eta4: float = 0.0
    eta5: float = 0.0

    @classmethod
    def from_power_fourth_derivative(cls, n: float, eta: float) -> "Nonlinear4":
        """eta * (u^n)_xxxx expanded into its five monomials."""
        return cls(
            eta * (n - 3.0) * (n - 2.0) * (n - 1.0) * n,
            6.0 * eta * (n - 2.0) * (n - 1.0) * n,
            3.0 * eta * (n - 1.0) * n,
            4.0 * eta * (n - 1.0) * n,
            eta * n,
        )


PERTURBATION_CLASSES = {
    cls.family: cls for cls in (MassDamping, Linear2, Linear4, Linear6, Nonlinear2, Nonlinear4)
}


def make_perturbation(family: Union[str, PerturbationFamily], **coefficients: float) -> PerturbationSpec:
    """Build the variant of `family`; coefficients of other families must be zero."""
    family = PerturbationFamily(family)
    cls = PERTURBATION_CLASSES[family]
    own = {f.name for f in fields(cls)}
    foreign = sorted(name for name, value in coefficients.items() if name not in own and value)
    if foreign:
        raise ValueError(f"coefficients {foreign} do not belong to the {family.value} family")
    return cls(**{name: float(value) for name, value in coefficients.items() if name in own})


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------
def linear2_coefficient(n: float) -> float:
    return (n - 1.0) ** 2 / (n * (n + 3.0))


def linear4_coefficient(n: float) -> float:
    return (n - 1.0) ** 3 * ((n - 3.0) * n - 1.0) / ((n - 5.0) * n**3 * (n + 3.0))


def linear6_polynomial(n: float) -> float:
    return 3.0 * n**4 - 13.0 * n**3 + 7.0 * n**2 + 13.0 * n + 5.0


def linear6_coefficient(n: float) -> float:
    return (n - 1.0) ** 4 * linear6_polynomial(n) / ((n - 5.0) * n**5 * (n + 3.0) * (3.0 * n - 7.0))


def linear6_sign_change() -> float:
    """Exponent in (2, 7/3) where the sixth-order coefficient changes sign."""
    return brentq(linear6_polynomial, 2.0, LINEAR6_EXPONENT_BOUND, xtol=1e-15)


def nonlinear2_factor(n: float) -> float:
    return (n - 1.0) ** 2 / (2.0 * n * (n + 1.0))


def nonlinear2_weights(n: float) -> Tuple[float, float]:
    return n - 1.0, 1.0 - 2.0 * n


def nonlinear4_factor(n: float) -> float:
    return (n - 1.0) ** 3 / (2.0 * n**4 * (n + 1.0) * (n + 3.0))


def nonlinear4_weights(n: float) -> Tuple[float, ...]:
    q = 2.0 * n**2 - 8.0 * n + 3.0
    return 3.0, -(2.0 * n - 3.0), 2.0 * n**2 - 2.0 * n + 3.0, q, -(2.0 * n - 1.0) * q


def _check_velocity(c: float):
    if not (math.isfinite(c) and c >= 0):
        raise ValueError(f"velocity must be non-negative, got c={c}")


def rhs_mass_damping(n: float, eps0: float, c: float) -> float:
    require_exponent(n, PerturbationFamily.MASS_DAMPING)
    _check_velocity(c)
    return -eps0 * (n - 1.0) * c


def rhs_linear2(n: float, spec: Linear2, c: float) -> float:
    require_exponent(n, PerturbationFamily.LINEAR2)
    _check_velocity(c)
    return -linear2_coefficient(n) * (spec.alpha0 * c + spec.alpha1 * c**2 + spec.alpha2 * c**3)


def rhs_linear4(n: float, spec: Linear4, c: float) -> float:
    require_exponent(n, PerturbationFamily.LINEAR4)
    _check_velocity(c)
    betas = (spec.beta0, spec.beta1, spec.beta2, spec.beta3, spec.beta4)
    return -linear4_coefficient(n) * sum(beta * c ** (i + 1) for i, beta in enumerate(betas))


def rhs_linear6(n: float, spec: Linear6, c: float) -> float:
    require_exponent(n, PerturbationFamily.LINEAR6)
    _check_velocity(c)
    gammas = tuple(spec.coefficients().values())
    return -linear6_coefficient(n) * sum(gamma * c ** (i + 1) for i, gamma in enumerate(gammas))


def rhs_nonlinear2(n: float, spec: Nonlinear2, c: float) -> float:
    require_exponent(n, PerturbationFamily.NONLINEAR2)
    _check_velocity(c)
    w1, w2 = nonlinear2_weights(n)
    return (spec.delta1 * w1 + spec.delta2 * w2) * nonlinear2_factor(n) * c**2


def rhs_nonlinear4(n: float, spec: Nonlinear4, c: float) -> float:
    require_exponent(n, PerturbationFamily.NONLINEAR4)
    _check_velocity(c)
    etas = tuple(spec.coefficients().values())
    weighted = sum(eta * w for eta, w in zip(etas, nonlinear4_weights(n)))
    return nonlinear4_factor(n) * weighted * c**2


def nonlinear2_reduced_rhs(n: float, delta: float, c: float) -> float:
    """Velocity law for delta * (u^n)_xx."""
    return -delta * (n - 1.0) ** 2 / (2.0 * (n + 1.0)) * c**2


def nonlinear4_reduced_rhs(n: float, eta: float, c: float) -> float:
    """Velocity law for eta * (u^n)_xxxx."""
    return eta * (n - 1.0) ** 3 * (2.0 + n) / (2.0 * n * (n + 1.0) * (n + 3.0)) * c**2


def closed_form_rhs(n: float, spec: PerturbationSpec, c: float) -> float:
    if isinstance(spec, MassDamping):
        return rhs_mass_damping(n, spec.eps0, c)
    if isinstance(spec, Linear2):
        return rhs_linear2(n, spec, c)
    if isinstance(spec, Linear4):
        return rhs_linear4(n, spec, c)
    if isinstance(spec, Linear6):
        return rhs_linear6(n, spec, c)
    if isinstance(spec, Nonlinear2):
        return rhs_nonlinear2(n, spec, c)
    if isinstance(spec, Nonlinear4):
        return rhs_nonlinear4(n, spec, c)
    raise ValueError(f"unknown perturbation {spec!r}")


@dataclass(frozen=True)
class RateTerm:
    """One coefficient's share of the velocity law: rate * c**power."""

    name: str
    coefficient: float
    rate: float
    power: int


def rate_terms(n: float, spec: PerturbationSpec) -> List[RateTerm]:
    require_exponent(n, spec.family)
    coefficients = spec.coefficients()
    if isinstance(spec, MassDamping):
        scales, powers = [-(n - 1.0)], [1]
    elif isinstance(spec, (Linear2, Linear4, Linear6)):
        base = {
            Linear2: linear2_coefficient,
            Linear4: linear4_coefficient,
            Linear6: linear6_coefficient,
        }[type(spec)](n)
        scales = [-base] * len(coefficients)
        powers = list(range(1, len(coefficients) + 1))
    elif isinstance(spec, Nonlinear2):
        scales = [w * nonlinear2_factor(n) for w in nonlinear2_weights(n)]
        powers = [2, 2]
    else:
        scales = [w * nonlinear4_factor(n) for w in nonlinear4_weights(n)]
        powers = [2] * 5
    return [
        RateTerm(name, value, scale * value, power)
        for (name, value), scale, power in zip(coefficients.items(), scales, powers)
        if value != 0.0
    ]


def amplitude_rate(n: float, c: float, dc_dt: float) -> float:
    """dA/dt of the compacton amplitude A = (2nc/(n+1))^(1/(n-1))."""
    return amplitude_from_velocity(n, c) * dc_dt / ((n - 1.0) * c)


# ---------------------------------------------------------------------------
# quadrature oracle
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Monomial:
    """weight * u^u_power * prod(d^k u / dxi^k for k in derivatives), time derivatives already
    replaced by -c d/dxi and folded into the weight."""

    weight: float
    u_power: float
    derivatives: Tuple[int, ...]


def perturbation_monomials(n: float, spec: PerturbationSpec, c: float) -> List[Monomial]:
    if isinstance(spec, MassDamping):
        return [Monomial(-spec.eps0, 1.0, ())]
    if isinstance(spec, Nonlinear2):
        return [
            Monomial(spec.delta1 * (n - 1.0) * n, n - 2.0, (1, 1)),
            Monomial(spec.delta2 * n, n - 1.0, (2,)),
        ]
    if isinstance(spec, Nonlinear4):
        return [
            Monomial(spec.eta1, n - 4.0, (1, 1, 1, 1)),
            Monomial(spec.eta2, n - 3.0, (1, 1, 2)),
            Monomial(spec.eta3, n - 2.0, (2, 2)),
            Monomial(spec.eta4, n - 2.0, (1, 3)),
            Monomial(spec.eta5, n - 1.0, (4,)),
        ]
    # linear families: the b-th coefficient multiplies a derivative with b time
    # derivatives; after d/dt -> -c d/dxi every term is (sign) c^b u^(order)
    order, sign = {Linear2: (2, 1.0), Linear4: (4, -1.0), Linear6: (6, 1.0)}[type(spec)]
    return [
        Monomial(sign * value * c**b, 0.0, (order,))
        for b, value in enumerate(spec.coefficients().values())
        if value != 0.0
    ]


def compacton_moment(n: float, c: float, monomials: Sequence[Monomial], base_power: float, tol: float = 1e-12) -> float:
    """Integral over the support of u_c^base_power * sum(monomials), by tanh-sinh quadrature.

    With theta = kappa * xi and u = a cos^p(theta), each k-th derivative is
    a kappa^k cos^(p-k)(theta) R_k(theta) with R_k bounded; the integrand is even,
    so the half support is integrated in phi = pi/2 - theta, where cos(theta) = sin(phi)
    stays accurate at the edge.
    """
    active = [m for m in monomials if m.weight != 0.0]
    if not active:
        return 0.0
    p = 2.0 / (n - 1.0)
    kappa = wavenumber(n)
    log_a = log_amplitude(n, c)
    max_order = max((max(m.derivatives) for m in active if m.derivatives), default=0)
    coefficients = cos_power_derivative_coefficients(p, max_order)
    plan = []
    for m in active:
        factors = base_power + m.u_power + len(m.derivatives)
        order = sum(m.derivatives)
        plan.append((m.weight, p * factors - order, factors * log_a + order * math.log(kappa), m.derivatives))

    def integrand(_, phi, phi_to_center):
        cos_t = np.sin(phi)
        sin_t = np.sin(phi_to_center)
        log_cos = np.log(cos_t)
        total = np.zeros_like(phi)
        for weight, exponent, log_scale, derivatives in plan:
            term = weight * np.exp(log_scale + exponent * log_cos)
            for k in derivatives:
                term = term * reduced_derivative(coefficients[k], cos_t, sin_t)
            total = total + term
        return total

    result = tanh_sinh(integrand, 0.0, 0.5 * math.pi, tol=tol)
    return 2.0 * result.value / kappa


def oracle_rhs(n: float, spec: PerturbationSpec, c: float, tol: float = 1e-12) -> float:
    """Momentum balance c' = int u^n P(u) / (d/dc int u^(n+1)/(n+1)), by quadrature.

    Raises QuadratureDivergenceError when the balance integral does not exist.
    """
    require_exponent(n)
    if not c > 0:
        raise ValueError(f"velocity must be positive, got c={c}")
    numerator = compacton_moment(n, c, perturbation_monomials(n, spec, c), base_power=n, tol=tol)
    return numerator / compacton_momentum_density_derivative(n, c)


def mass_balance_rhs(n: float, spec: PerturbationSpec, c: float, tol: float = 1e-12) -> float:
    """Mass balance c' = int P(u) / (dM_c/dc); vanishes for mass-preserving perturbations."""
    require_exponent(n)
    if not c > 0:
        raise ValueError(f"velocity must be positive, got c={c}")
    numerator = compacton_moment(n, c, perturbation_monomials(n, spec, c), base_power=0.0, tol=tol)
    return numerator / compacton_mass_derivative(n, c)


# ---------------------------------------------------------------------------
# dissipativity
# ---------------------------------------------------------------------------
class Dissipativity(enum.Enum):
    DISSIPATIVE = "dissipative"
    ANTI_DISSIPATIVE = "anti-dissipative"
    NEUTRAL = "neutral"
    MIXED = "mixed"


def _sign_verdict(value: float) -> Dissipativity:
    if value < 0:
        return Dissipativity.DISSIPATIVE
    if value > 0:
        return Dissipativity.ANTI_DISSIPATIVE
    return Dissipativity.NEUTRAL


@dataclass(frozen=True)
class DissipativityReport:
    per_coefficient: Dict[str, Dissipativity]
    overall: Dissipativity
    rate_at_unit_velocity: float


def is_dissipative(n: float, spec: PerturbationSpec) -> DissipativityReport:
    terms = rate_terms(n, spec)
    per_coefficient = {term.name: _sign_verdict(term.rate) for term in terms}
    rate = sum(term.rate for term in terms)
    signs = {v for v in per_coefficient.values() if v is not Dissipativity.NEUTRAL}
    overall = Dissipativity.MIXED if len(signs) > 1 else _sign_verdict(rate)
    return DissipativityReport(per_coefficient, overall, rate)


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class VelocityTrajectory:
    spec: PerturbationSpec
    n: float
    t: np.ndarray
    c: np.ndarray
    rtol: float
    atol: float
    nfev: int = 0
    n_steps: int = 0
    truncated_reason: Optional[str] = None
    dense: Optional[Callable] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.t.shape != self.c.shape or self.t.ndim != 1 or self.t.size == 0:
            raise ValueError("trajectory needs matching one-dimensional t and c samples")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if np.any(self.c <= 0):
            raise ValueError("trajectory velocities must stay positive")

    @property
    def c0(self) -> float:
        return float(self.c[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def covers(self, t: float) -> bool:
        slack = 1e-12 * max(1.0, abs(self.t_end))
        return self.t[0] - slack <= t <= self.t_end + slack

    def velocity_at(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if not all(self.covers(s) for s in (t_arr.min(), t_arr.max())):
            raise ValueError(f"requested t outside the trajectory [{self.t[0]}, {self.t_end}]")
        t_arr = np.clip(t_arr, self.t[0], self.t_end)
        if self.dense is not None:
            values = np.asarray(self.dense(t_arr))[0]
        else:
            values = np.interp(t_arr, self.t, self.c)
        return float(values[0]) if np.ndim(t) == 0 else values

    def rates(self) -> np.ndarray:
        return np.array([closed_form_rhs(self.n, self.spec, float(c)) for c in self.c])

    def amplitudes(self) -> np.ndarray:
        return np.array([amplitude_from_velocity(self.n, float(c)) for c in self.c])


def solve_velocity_ode(
    n: float,
    spec: PerturbationSpec,
    c0: float,
    t_end: float,
    tol: float = 1e-10,
    atol: float = 1e-12,
    t_eval: Optional[Sequence[float]] = None,
    n_samples: int = 201,
) -> VelocityTrajectory:
    """Integrate c' = closed_form_rhs(n, spec, c) with RK45 and dense output."""
    require_exponent(n, spec.family)
    if not (c0 > 0 and t_end > 0 and tol > 0):
        raise ValueError(f"need c0 > 0, t_end > 0 and tol > 0, got c0={c0}, t_end={t_end}, tol={tol}")
    terms = [(term.rate, term.power) for term in rate_terms(n, spec)]

    def fun(_, y):
        return [sum(rate * y[0] ** power for rate, power in terms)]

    def velocity_floor(_, y):
        return y[0] - VELOCITY_FLOOR * c0

    velocity_floor.terminal = True
    velocity_floor.direction = -1

    def velocity_ceiling(_, y):
        return y[0] - VELOCITY_CEILING * c0

    velocity_ceiling.terminal = True
    velocity_ceiling.direction = 1

    if t_eval is None:
        t_eval = np.linspace(0.0, t_end, n_samples)
    t_eval = np.asarray(t_eval, dtype=np.float64)
    sol = solve_ivp(
        fun,
        (0.0, t_end),
        [c0],
        method="RK45",
        t_eval=t_eval,
        dense_output=True,
        events=[velocity_floor, velocity_ceiling],
        rtol=tol,
        atol=atol,
    )
    if sol.status < 0:
        raise RuntimeError(f"velocity integration failed for {spec}: {sol.message}")
    reason = None
    if sol.status == 1:
        if sol.t_events[0].size:
            reason = f"velocity reached the floor {VELOCITY_FLOOR * c0:.3g} at t={sol.t_events[0][0]:.6g}"
        else:
            reason = f"velocity exceeded {VELOCITY_CEILING * c0:.3g} at t={sol.t_events[1][0]:.6g}"
        logger.warning(f"trajectory truncated: {reason}")

    return VelocityTrajectory(
        spec=spec,
        n=n,
        t=np.asarray(sol.t, dtype=np.float64),
        c=np.asarray(sol.y[0], dtype=np.float64),
        rtol=tol,
        atol=atol,
        nfev=int(sol.nfev),
        n_steps=len(sol.sol.ts) - 1,
        truncated_reason=reason,
        dense=sol.sol,
    )


def analytic_velocity(n: float, spec: PerturbationSpec, c0: float, t) -> Optional[np.ndarray]:
    """Exact c(t) when every term is linear in c (exponential) or quadratic in c (hyperbolic)."""
    terms = rate_terms(n, spec)
    t = np.asarray(t, dtype=np.float64)
    if not terms:
        return np.full_like(t, c0)
    powers = {term.power for term in terms}
    rate = sum(term.rate for term in terms)
    if powers == {1}:
        return c0 * np.exp(rate * t)
    if powers == {2}:
        return c0 / (1.0 - rate * c0 * t)
    return None

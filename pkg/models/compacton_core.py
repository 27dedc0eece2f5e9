"""Closed-form compactons of the K(n,n) equation.

The traveling compacton of velocity c is

    u_c(xi) = {2 n c / (n+1) * cos^2((n-1) xi / (2n))}^(1/(n-1)),   |xi| <= n pi / (n-1),

and exactly zero outside its support. Everything here is a pure function of
(n, c); the other modules build on these helpers.
"""
import enum
import functools
import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import torch

from .grid_field import GridField, GridSpec
from .utils.compute_utils import log_gamma_ratio

logger = logging.getLogger(__name__)

LINEAR6_EXPONENT_BOUND = 7.0 / 3.0
LIMITING_EXPONENT = 3.0


class ExponentDomainError(ValueError):
    pass


class ExponentVerdict(enum.Enum):
    OK = "ok"
    LIMITING = "limiting"
    INVALID = "invalid"


class PerturbationFamily(enum.Enum):
    MASS_DAMPING = "mass-damping"
    LINEAR2 = "linear2"
    LINEAR4 = "linear4"
    LINEAR6 = "linear6"
    NONLINEAR2 = "nonlinear2"
    NONLINEAR4 = "nonlinear4"


@dataclass(frozen=True)
class ExponentCheck:
    verdict: ExponentVerdict
    bound: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.verdict is not ExponentVerdict.INVALID

    @property
    def limiting(self) -> bool:
        return self.verdict is ExponentVerdict.LIMITING


def validate_exponent(n: float, family: Optional[PerturbationFamily] = None) -> ExponentCheck:
    """Classify n against the window of `family` (None: the bare compacton).

    Never raises; INVALID verdicts name the violated bound.
    """
    if not math.isfinite(n) or n <= 1.0:
        return ExponentCheck(ExponentVerdict.INVALID, "n > 1")
    if family is PerturbationFamily.LINEAR6:
        if n < LINEAR6_EXPONENT_BOUND:
            return ExponentCheck(ExponentVerdict.OK)
        return ExponentCheck(ExponentVerdict.INVALID, "n < 7/3")
    if n < LIMITING_EXPONENT:
        return ExponentCheck(ExponentVerdict.OK)
    if n == LIMITING_EXPONENT:
        return ExponentCheck(ExponentVerdict.LIMITING, "n < 3")
    return ExponentCheck(ExponentVerdict.INVALID, "n <= 3")


@functools.lru_cache(maxsize=None)
def _warn_limiting(n: float):
    logger.warning(f"n={n} is the limiting case of the classical window 1 < n < 3; proceeding")


def require_exponent(n: float, family: Optional[PerturbationFamily] = None) -> ExponentCheck:
    check = validate_exponent(n, family)
    if not check.ok:
        scope = f" for the {family.value} family" if family is not None else ""
        raise ExponentDomainError(f"exponent n={n} outside the validity window{scope}: requires {check.bound}")
    if check.limiting:
        _warn_limiting(float(n))
    return check


def support_halfwidth(n: float) -> float:
    return n * math.pi / (n - 1.0)


def wavenumber(n: float) -> float:
    return (n - 1.0) / (2.0 * n)


def log_amplitude(n: float, c: float) -> float:
    return math.log(2.0 * n * c / (n + 1.0)) / (n - 1.0)


def amplitude_from_velocity(n: float, c: float) -> float:
    if c <= 0:
        return 0.0
    return math.exp(log_amplitude(n, c))


def velocity_from_amplitude(n: float, amplitude: float) -> float:
    if amplitude <= 0:
        raise ValueError(f"amplitude must be positive, got {amplitude}")
    return (n + 1.0) / (2.0 * n) * amplitude ** (n - 1.0)


@dataclass(frozen=True)
class SupportInterval:
    center: float
    halfwidth: float

    @property
    def left(self) -> float:
        return self.center - self.halfwidth

    @property
    def right(self) -> float:
        return self.center + self.halfwidth


@dataclass(frozen=True)
class CompactonParams:
    n: float
    c: float

    def __post_init__(self):
        require_exponent(self.n)
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValueError(f"compacton velocity must be positive, got c={self.c}")

    @property
    def halfwidth(self) -> float:
        return support_halfwidth(self.n)

    def support(self, center: float = 0.0) -> SupportInterval:
        return SupportInterval(center, self.halfwidth)


def _profile(n: float, c: float, xi: torch.Tensor) -> torch.Tensor:
    inside = xi.abs() < support_halfwidth(n)
    base = (2.0 * n * c / (n + 1.0)) * torch.cos(wavenumber(n) * xi).pow(2)
    positive = inside & (base > 0)
    # exp/log form keeps rounding near the edge away from negative bases
    powered = torch.exp(torch.log(base.clamp_min(torch.finfo(torch.float64).tiny)) / (n - 1.0))
    return torch.where(positive, powered, torch.zeros_like(xi))


def eval_compacton(p: CompactonParams, xi: Union[float, torch.Tensor, np.ndarray]):
    if isinstance(xi, torch.Tensor):
        return _profile(p.n, p.c, xi.to(torch.float64))
    if isinstance(xi, np.ndarray):
        return _profile(p.n, p.c, torch.from_numpy(xi.astype(np.float64))).numpy()
    return float(_profile(p.n, p.c, torch.tensor([float(xi)], dtype=torch.float64))[0])


def compacton_amplitude(p: CompactonParams) -> float:
    return math.exp(log_amplitude(p.n, p.c))


def log_mass_prefactor(n: float) -> float:
    return (
        math.log(n)
        + 0.5 * math.log(math.pi)
        + math.log(2.0**n * n / (n + 1.0)) / (n - 1.0)
        + log_gamma_ratio(0.5 + 1.0 / (n - 1.0), 1.0 / (n - 1.0))
    )


def mass_prefactor(n: float) -> float:
    """K in M_c(c) = K c^(1/(n-1))."""
    return math.exp(log_mass_prefactor(n))


def compacton_mass(n: float, c: float) -> float:
    require_exponent(n)
    if c < 0:
        raise ValueError(f"velocity must be non-negative, got c={c}")
    if c == 0:
        return 0.0
    return math.exp(log_mass_prefactor(n) + math.log(c) / (n - 1.0))


def compacton_mass_derivative(n: float, c: float) -> float:
    """dM_c/dc = K/(n-1) * c^((2-n)/(n-1))."""
    require_exponent(n)
    if c <= 0:
        raise ValueError(f"velocity must be positive, got c={c}")
    return math.exp(log_mass_prefactor(n) + (2.0 - n) / (n - 1.0) * math.log(c)) / (n - 1.0)


def momentum_exponent(n: float) -> float:
    return (n + 1.0) / (n - 1.0)


def log_momentum_prefactor(n: float) -> float:
    return (
        0.5 * math.log(math.pi)
        - math.log(n + 1.0)
        + 2.0 * n / (n - 1.0) * math.log(2.0 * n / (n + 1.0))
        + log_gamma_ratio((3.0 * n + 1.0) / (2.0 * (n - 1.0)), (n + 1.0) / (n - 1.0))
    )


def momentum_prefactor(n: float) -> float:
    return math.exp(log_momentum_prefactor(n))


def compacton_momentum_density_integral(n: float, c: float) -> float:
    """Integral of u_c^(n+1)/(n+1) over the support."""
    require_exponent(n)
    if c < 0:
        raise ValueError(f"velocity must be non-negative, got c={c}")
    if c == 0:
        return 0.0
    return math.exp(log_momentum_prefactor(n) + momentum_exponent(n) * math.log(c))


def compacton_momentum_density_derivative(n: float, c: float) -> float:
    require_exponent(n)
    if c <= 0:
        raise ValueError(f"velocity must be positive, got c={c}")
    e = momentum_exponent(n)
    return e * math.exp(log_momentum_prefactor(n) + (e - 1.0) * math.log(c))


def sample_compacton(p: CompactonParams, grid: GridSpec, center: float) -> GridField:
    support = p.support(center)
    if 2.0 * support.halfwidth >= grid.length:
        raise ValueError(
            f"compacton support ({2.0 * support.halfwidth:.4g}) is wider than the domain ({grid.length})"
        )
    if support.left < 0.0 or support.right >= grid.length:
        raise ValueError(
            f"support [{support.left:.4g}, {support.right:.4g}] wraps around the periodic domain [0, {grid.length})"
        )
    values = eval_compacton(p, grid.coordinates() - center)
    return GridField(grid, values)

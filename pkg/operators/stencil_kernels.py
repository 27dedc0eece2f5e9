import math
from typing import Dict, Union

import torch

# stencil offsets m = -2..2, row index = m + 2
STENCIL_OFFSETS = (-2, -1, 0, 1, 2)


def signed_power(u: Union[float, torch.Tensor], n: float):
    """sign(u) * |u|^n, exactly zero at u = 0."""
    if isinstance(u, torch.Tensor):
        return torch.sign(u) * u.abs().pow(n)
    if u == 0:
        return 0.0
    return math.copysign(abs(u) ** n, u)


def shift(u: torch.Tensor, m: int) -> torch.Tensor:
    """Periodic shift returning u_{j+m} at index j."""
    return torch.roll(u, shifts=-m)


def d1(u: torch.Tensor, dx: float) -> torch.Tensor:
    return (shift(u, 1) - shift(u, -1)) / (2.0 * dx)


def d2(u: torch.Tensor, dx: float) -> torch.Tensor:
    return (shift(u, 1) - 2.0 * u + shift(u, -1)) / dx**2


def d3(u: torch.Tensor, dx: float) -> torch.Tensor:
    return (shift(u, 2) - 2.0 * shift(u, 1) + 2.0 * shift(u, -1) - shift(u, -2)) / (2.0 * dx**3)


def d4(u: torch.Tensor, dx: float) -> torch.Tensor:
    return (shift(u, 2) - 4.0 * shift(u, 1) + 6.0 * u - 4.0 * shift(u, -1) + shift(u, -2)) / dx**4


def stencil_weights(dx: float) -> Dict[str, torch.Tensor]:
    """Coefficients of D1..D4 at offsets -2..2."""
    return {
        "d1": torch.tensor([0.0, -1.0, 0.0, 1.0, 0.0], dtype=torch.float64) / (2.0 * dx),
        "d2": torch.tensor([0.0, 1.0, -2.0, 1.0, 0.0], dtype=torch.float64) / dx**2,
        "d3": torch.tensor([-1.0, 2.0, 0.0, -2.0, 1.0], dtype=torch.float64) / (2.0 * dx**3),
        "d4": torch.tensor([1.0, -4.0, 6.0, -4.0, 1.0], dtype=torch.float64) / dx**4,
    }


def knn_rhs_forward(
    u: torch.Tensor,
    n: float,
    dx: float,
    c0: float = 0.0,
    alpha0: float = 0.0,
    beta0: float = 0.0,
    eps0: float = 0.0,
) -> torch.Tensor:
    """F(U) = c0 D1 U - D1 W - D3 W + alpha0 D2 U - beta0 D4 U - eps0 U, W = signed_power(U, n)."""
    w = signed_power(u, n)
    out = c0 * d1(u, dx) - d1(w, dx) - d3(w, dx)
    if alpha0 != 0.0:
        out = out + alpha0 * d2(u, dx)
    if beta0 != 0.0:
        out = out - beta0 * d4(u, dx)
    if eps0 != 0.0:
        out = out - eps0 * u
    return out


def knn_rhs_jacobian(
    u: torch.Tensor,
    n: float,
    dx: float,
    c0: float = 0.0,
    alpha0: float = 0.0,
    beta0: float = 0.0,
    eps0: float = 0.0,
) -> torch.Tensor:
    """Cyclic bands of dF/dU: bands[m + 2, i] = dF_i / dU_{(i+m) mod N}."""
    weights = stencil_weights(dx)
    linear = c0 * weights["d1"] + alpha0 * weights["d2"] - beta0 * weights["d4"]
    linear[2] -= eps0
    nonlinear = -(weights["d1"] + weights["d3"])
    slope = n * u.abs().pow(n - 1.0)
    bands = torch.empty((5, u.numel()), dtype=torch.float64)
    for row, m in enumerate(STENCIL_OFFSETS):
        bands[row] = linear[row] + nonlinear[row] * shift(slope, m)
    return bands

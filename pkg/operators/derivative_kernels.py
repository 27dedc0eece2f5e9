from typing import List

import numpy as np


def cos_power_derivative_coefficients(p: float, order: int) -> List[np.ndarray]:
    """Coefficients C[k][b] with

        d^k/dtheta^k cos^p(theta) = sum_b C[k][b] cos^(p-b)(theta) sin^b(theta),   k = 0..order.

    Differentiating cos^(p-b) sin^b gives -(p-b) cos^(p-b-1) sin^(b+1) + b cos^(p-b+1) sin^(b-1).
    Each C[k][b] is therefore a polynomial in p, and it vanishes unless b has the parity of k.
    """
    if order < 0:
        raise ValueError(f"derivative order must be non-negative, got {order}")
    coefficients = [np.array([1.0])]
    for k in range(order):
        previous = coefficients[-1]
        current = np.zeros(k + 2)
        for b, value in enumerate(previous):
            if value == 0.0:
                continue
            current[b + 1] -= (p - b) * value
            if b > 0:
                current[b - 1] += b * value
        coefficients.append(current)
    return coefficients


def reduced_derivative(coefficients: np.ndarray, cos_t: np.ndarray, sin_t: np.ndarray) -> np.ndarray:
    """R_k = sum_b C[k][b] cos^(k-b) sin^b, so that the k-th derivative is cos^(p-k) * R_k.

    R_k is a polynomial in (cos, sin) and stays bounded at the support edge.
    """
    k = coefficients.size - 1
    out = np.zeros_like(cos_t)
    for b, value in enumerate(coefficients):
        if value != 0.0:
            out = out + value * cos_t ** (k - b) * sin_t**b
    return out

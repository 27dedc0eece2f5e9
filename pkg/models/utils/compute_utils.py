from typing import Sequence

import numpy as np
from scipy.special import gammaln


def log_gamma_ratio(a: float, b: float) -> float:
    """log(Gamma(a) / Gamma(b)) for positive a, b, via log-Gamma differences."""
    if a <= 0 or b <= 0:
        raise ValueError(f"gamma ratio needs positive arguments, got a={a}, b={b}")
    return float(gammaln(a) - gammaln(b))


def fit_exponential_rate(t: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares decay rate lambda of y ~ y0 * exp(-lambda * t)."""
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if t.shape != y.shape or t.size < 2:
        raise ValueError("need at least two (t, y) samples of equal length")
    if np.any(y <= 0):
        raise ValueError("exponential fit needs strictly positive samples")
    slope, _ = np.polyfit(t, np.log(y), 1)
    return float(-slope)

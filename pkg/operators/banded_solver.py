"""Cyclic pentadiagonal solves.

Matrices are given in periodic row-diagonal form: ``bands[m + 2, i] = A[i, (i + m) % N]``
for m = -2..2. The non-corner part goes through LAPACK banded LU
(``scipy.linalg.solve_banded``); the four wrapped corner rows are restored with a
rank-4 correction and a small dense solve.
"""
import logging

import numpy as np
from scipy.linalg import LinAlgError, solve, solve_banded

logger = logging.getLogger(__name__)

HALF_BANDWIDTH = 2
DENSE_FALLBACK_LIMIT = 1024


def _to_lapack_layout(bands: np.ndarray) -> np.ndarray:
    # ab[u + i - j, j] = A[i, j]; for offset m = j - i that is ab[2 - m, j] = bands[m + 2, j - m]
    ab = np.empty_like(bands)
    for m in range(-HALF_BANDWIDTH, HALF_BANDWIDTH + 1):
        ab[HALF_BANDWIDTH - m] = np.roll(bands[m + HALF_BANDWIDTH], m)
    return ab


def _corner_rows(size: int):
    return [0, 1, size - 2, size - 1]


def cyclic_banded_to_dense(bands: np.ndarray) -> np.ndarray:
    size = bands.shape[1]
    dense = np.zeros((size, size), dtype=np.float64)
    rows = np.arange(size)
    for m in range(-HALF_BANDWIDTH, HALF_BANDWIDTH + 1):
        dense[rows, (rows + m) % size] += bands[m + HALF_BANDWIDTH]
    return dense


def solve_cyclic_banded(bands: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve A x = rhs for a periodic pentadiagonal A given by its bands."""
    bands = np.asarray(bands, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    size = bands.shape[1]
    if bands.shape != (2 * HALF_BANDWIDTH + 1, size) or rhs.shape != (size,):
        raise ValueError(f"bands {bands.shape} and rhs {rhs.shape} do not describe one periodic system")
    if size <= 2 * HALF_BANDWIDTH:
        raise ValueError(f"cyclic pentadiagonal solve needs more than 4 unknowns, got {size}")

    # split A = B + U V^T, B banded (corners dropped), U selects the corner rows
    rows = _corner_rows(size)
    v_t = np.zeros((len(rows), size), dtype=np.float64)
    for k, i in enumerate(rows):
        for m in range(-HALF_BANDWIDTH, HALF_BANDWIDTH + 1):
            j = i + m
            if j < 0 or j >= size:
                v_t[k, j % size] += bands[m + HALF_BANDWIDTH, i]
    selector = np.zeros((size, len(rows)), dtype=np.float64)
    selector[rows, np.arange(len(rows))] = 1.0

    try:
        ab = _to_lapack_layout(bands)
        stacked = solve_banded((HALF_BANDWIDTH, HALF_BANDWIDTH), ab, np.column_stack([rhs, selector]))
        y, z = stacked[:, 0], stacked[:, 1:]
        capacitance = np.eye(len(rows)) + v_t @ z
        return y - z @ solve(capacitance, v_t @ y)
    except (LinAlgError, ValueError) as err:
        if size > DENSE_FALLBACK_LIMIT:
            raise
        logger.debug(f"banded solve failed ({err}); falling back to a dense solve with N={size}")
        return solve(cyclic_banded_to_dense(bands), rhs)

import numpy as np
import pytest
import torch

from operators.derivative_kernels import cos_power_derivative_coefficients, reduced_derivative


def autograd_derivatives(p, theta, order):
    x = torch.tensor(theta, dtype=torch.float64, requires_grad=True)
    y = torch.cos(x).pow(p)
    out = [y.detach().numpy()]
    for _ in range(order):
        (y,) = torch.autograd.grad(y.sum(), x, create_graph=True)
        out.append(y.detach().numpy())
    return out


def test_cos_squared():
    coefficients = cos_power_derivative_coefficients(2.0, 2)
    np.testing.assert_array_equal(coefficients[1], [0.0, -2.0])
    np.testing.assert_array_equal(coefficients[2], [-2.0, 0.0, 2.0])


@pytest.mark.parametrize("n", [5 / 4, 3 / 2, 2.0, 9 / 4, 5 / 2])
def test_against_autograd(n):
    p = 2.0 / (n - 1.0)
    order = 6
    theta = np.linspace(-1.3, 1.3, 27)
    coefficients = cos_power_derivative_coefficients(p, order)
    reference = autograd_derivatives(p, theta, order)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    for k in range(order + 1):
        value = cos_t ** (p - k) * reduced_derivative(coefficients[k], cos_t, sin_t)
        scale = max(1.0, np.max(np.abs(reference[k])))
        np.testing.assert_allclose(value, reference[k], rtol=1e-9, atol=1e-11 * scale)


def test_negative_order():
    with pytest.raises(ValueError):
        cos_power_derivative_coefficients(2.0, -1)

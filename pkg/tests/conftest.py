import numpy as np
import pytest

from mutualpos.error_model import default_surface


@pytest.fixture(scope="session")
def surface():
    return default_surface()


def gauss_hermite_moments(d, sigma_p, nodes=120):
    """Mean and std of d - |(d + dx, dy)| by tensor Gauss-Hermite quadrature.

    Independent of the sampling code path; dx, dy ~ N(0, sigma_p^2 / 2).
    """
    t, w = np.polynomial.hermite.hermgauss(nodes)
    # N(0, v) expectation: sum w f(sqrt(2 v) t) / sqrt(pi), with v = sigma_p^2 / 2
    x = sigma_p * t
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w) / np.pi
    f = d - np.hypot(d + X, Y)
    m1 = float(np.sum(W * f))
    m2 = float(np.sum(W * f * f))
    return m1, float(np.sqrt(m2 - m1 * m1))

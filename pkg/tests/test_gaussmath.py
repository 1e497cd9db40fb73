import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from iccopf.gaussmath import (BETA_MAX, DomainError, Quantile, SaturationError, dphi_dbeta, std_normal_cdf,
                              std_normal_icdf)


@pytest.mark.parametrize("beta, phi, tol", [(0.5, 0.0, 0.0), (0.841344746, 1.0, 1e-7), (0.95, 1.6448536, 1e-6)])
def test_icdf_examples(beta, phi, tol):
    assert abs(std_normal_icdf(beta) - phi) <= tol


@pytest.mark.parametrize("phi, beta, tol", [(0.0, 0.5, 0.0), (1.6448536, 0.95, 1e-7), (-3.0, 0.0013499, 1e-6)])
def test_cdf_examples(phi, beta, tol):
    assert abs(std_normal_cdf(phi) - beta) <= tol


@pytest.mark.parametrize("x", [-8.0, -6.0, -3.0, -1.0, 0.3, 2.0, 5.0, 7.5])
def test_cdf_matches_high_precision_oracle(x):
    assert std_normal_cdf(x) == pytest.approx(oracles.cdf(x), rel=1e-13, abs=1e-300)


@pytest.mark.parametrize("beta", [1e-10, 0.001, 0.02425, 0.3, 0.5 + 1e-9, 0.9, 0.999, 1 - 1e-9])
def test_icdf_matches_bisection_oracle(beta):
    assert std_normal_icdf(beta) == pytest.approx(oracles.icdf(beta), abs=1e-9)


@given(st.floats(min_value=-6.0, max_value=6.0))
def test_round_trip(phi):
    assert abs(std_normal_icdf(std_normal_cdf(phi)) - phi) <= 1e-7


@given(st.floats(min_value=0.01, max_value=0.99), st.floats(min_value=1e-6, max_value=0.009))
def test_icdf_increasing(beta, step):
    assert std_normal_icdf(beta + step) > std_normal_icdf(beta)


@pytest.mark.parametrize("beta", [0.0, 1.0, -0.1, 1.5, BETA_MAX + 1e-13, float("nan")])
def test_icdf_domain(beta):
    with pytest.raises(DomainError):
        std_normal_icdf(beta)


def test_dphi_examples():
    assert dphi_dbeta(0.0, 1.0) == pytest.approx(math.sqrt(2 * math.pi), rel=1e-15)
    assert dphi_dbeta(3.7, 0.0) == 0.0
    assert dphi_dbeta(1.0, math.sqrt(0.5)) == pytest.approx(2.9226, abs=5e-4)


@pytest.mark.parametrize("beta", np.linspace(0.55, 0.999, 12))
def test_dphi_matches_quantile_derivative(beta):
    h = 1e-6 * min(beta - 0.5, 1 - beta)
    fd = (oracles.icdf(beta + h) - oracles.icdf(beta - h)) / (2 * h)
    assert dphi_dbeta(std_normal_icdf(beta), 0.7) == pytest.approx(0.7 * fd, rel=1e-5)


def test_dphi_saturates():
    with pytest.raises(SaturationError):
        dphi_dbeta(40.0, 1.0)


def test_quantile_record():
    q = Quantile.of(0.95)
    assert q.beta == 0.95 and q.phi == std_normal_icdf(0.95)

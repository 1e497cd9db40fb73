"""Standard normal CDF/ICDF and the quantile derivative factor."""

import math
from dataclasses import dataclass

BETA_MIN = 1e-12
BETA_MAX = 1.0 - 1e-12
SQRT_2PI = math.sqrt(2.0 * math.pi)
# largest phi**2/2 that exp() can represent
_EXP_LIMIT = math.log(1.7976931348623157e308)


class DomainError(ValueError):
    """A probability or security level outside the admissible range."""


class SaturationError(OverflowError):
    """The quantile derivative exceeds the floating-point range."""


# Acklam's rational approximation (relative error ~1.15e-9 before polishing)
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def std_normal_cdf(phi):
    return 0.5 * math.erfc(-phi / math.sqrt(2.0))


def _pdf(x):
    return math.exp(-0.5 * x * x) / SQRT_2PI


def _rational_icdf(p):
    if p < _P_LOW:
        r = math.sqrt(-2.0 * math.log(p))
        return (((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5]) / \
            ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0)
    if p > 1.0 - _P_LOW:
        r = math.sqrt(-2.0 * math.log1p(-p))
        return -(((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5]) / \
            ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0)
    r = p - 0.5
    t = r * r
    return (((((_A[0] * t + _A[1]) * t + _A[2]) * t + _A[3]) * t + _A[4]) * t + _A[5]) * r / \
        (((((_B[0] * t + _B[1]) * t + _B[2]) * t + _B[3]) * t + _B[4]) * t + 1.0)


def std_normal_icdf(beta):
    """Quantile of the standard normal, accurate to |cdf(phi) - beta| <= 1e-9.

    A rational approximation followed by one Halley correction against the
    erfc-based CDF.
    """
    if not (BETA_MIN <= beta <= BETA_MAX):
        raise DomainError(f"probability {beta!r} outside [{BETA_MIN}, 1 - 1e-12]")
    if beta == 0.5:
        return 0.0
    x = _rational_icdf(beta)
    # upper tail: work with the complementary probability to keep digits
    if beta > 0.5:
        err = (1.0 - beta) - 0.5 * math.erfc(x / math.sqrt(2.0))
    else:
        err = std_normal_cdf(x) - beta
    u = err / _pdf(x)
    return x - u / (1.0 + 0.5 * x * u)


def dphi_dbeta(phi_k, u_k):
    """Derivative of the quantile along direction component ``u_k``."""
    if u_k == 0.0:
        return 0.0
    half = 0.5 * phi_k * phi_k
    if half > _EXP_LIMIT - math.log(SQRT_2PI * abs(u_k)) or not math.isfinite(half):
        raise SaturationError(f"exp(phi^2/2) overflows at phi = {phi_k!r}")
    return SQRT_2PI * u_k * math.exp(half)


@dataclass(frozen=True)
class Quantile:
    beta: float
    phi: float

    @classmethod
    def of(cls, beta):
        return cls(beta, std_normal_icdf(beta))

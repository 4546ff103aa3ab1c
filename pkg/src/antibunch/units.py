"""Unit conversions at the package boundary.

Internally every rate is ns^-1 and every time is ns. MHz, counts/s, uW and
mW appear only in user-facing inputs and outputs; convert explicitly with
these helpers instead of sprinkling powers of ten through the code.
"""

NS_PER_S = 1e9
PS_PER_NS = 1e3

# Gaussian FWHM = 2*sqrt(2*ln 2) * sigma
FWHM_TO_SIGMA = 1.0 / 2.3548200450309493


def mhz_to_per_ns(rate_mhz: float) -> float:
    """1 MHz = 1e6 s^-1 = 1e-3 ns^-1."""
    return rate_mhz * 1e-3


def per_ns_to_mhz(rate_per_ns: float) -> float:
    return rate_per_ns * 1e3


def counts_per_s_to_per_ns(rate_cps: float) -> float:
    return rate_cps / NS_PER_S


def per_ns_to_counts_per_s(rate_per_ns: float) -> float:
    return rate_per_ns * NS_PER_S


def uw_to_mw(power_uw: float) -> float:
    return power_uw * 1e-3


def mw_to_uw(power_mw: float) -> float:
    return power_mw * 1e3


def s_to_ns(t_s: float) -> float:
    return t_s * NS_PER_S


def ns_to_s(t_ns: float) -> float:
    return t_ns / NS_PER_S


def ps_to_ns(t_ps: float) -> float:
    return t_ps / PS_PER_NS

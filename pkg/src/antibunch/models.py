"""Closed-form photophysics of two- and three-level single photon emitters.

Pure functions and frozen value types: analytic second-order correlation
g2(tau), the power laws of the two decay rates, saturation curves and the
steady-state count-rate / quantum-efficiency relation. All rates are ns^-1
and delays are ns; see :mod:`antibunch.units` for boundary conversions.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .units import per_ns_to_counts_per_s


class LevelScheme(enum.Enum):
    TWO_LEVEL = "two_level"
    THREE_LEVEL = "three_level"


@dataclass(frozen=True)
class RateSet:
    """Transition rates of a single emitter (ns^-1).

    r12 is the pump rate ground -> excited, r21 the excited-state decay,
    r23 the shelving rate into the metastable state and r31 the rate back
    to the ground state. A two-level emitter has ``r23 == 0`` (and r31 is
    ignored).
    """

    r12: float
    r21: float
    r23: float = 0.0
    r31: float = 0.0
    scheme: LevelScheme | None = None

    def __post_init__(self):
        if self.r21 <= 0.0:
            raise ValueError(f"r21 must be positive, got {self.r21}")
        for name in ("r12", "r23", "r31"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        derived = LevelScheme.TWO_LEVEL if self.r23 == 0.0 else LevelScheme.THREE_LEVEL
        if self.scheme is None:
            object.__setattr__(self, "scheme", derived)
        elif self.scheme is not derived:
            raise ValueError(
                f"scheme {self.scheme.value} inconsistent with r23={self.r23}"
            )
        if self.scheme is LevelScheme.THREE_LEVEL and self.r31 <= 0.0:
            raise ValueError("three-level rates require r31 > 0")

    @property
    def lambda1(self) -> float:
        """Antibunching decay rate, r12 + r21."""
        return self.r12 + self.r21

    @property
    def lambda2(self) -> float:
        """Bunching decay rate r31 + r23*r12/lambda1.

        This is the first-order expression valid when shelving is slow
        (r23, r31 << lambda1). Exact eigenvalues of the rate matrix are
        available from :func:`antibunch.kinetics.biexponential_parameters`.
        """
        if self.scheme is LevelScheme.TWO_LEVEL:
            raise ValueError("lambda2 is undefined for a two-level emitter")
        return self.r31 + self.r23 * self.r12 / self.lambda1

    def as_dict(self) -> dict:
        return {
            "r12": self.r12,
            "r21": self.r21,
            "r23": self.r23,
            "r31": self.r31,
            "scheme": self.scheme.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RateSet":
        scheme = d.get("scheme")
        return cls(
            r12=d["r12"],
            r21=d["r21"],
            r23=d.get("r23", 0.0),
            r31=d.get("r31", 0.0),
            scheme=LevelScheme(scheme) if scheme is not None else None,
        )


@dataclass(frozen=True)
class PowerLaw:
    """Maps optical power (mW) to an emitter's transition rates.

    lambda1(P) = r21_0 * (1 + alpha * P), so the pump rate is
    r12(P) = pump_slope * P with pump_slope = alpha * r21_0 when the
    excited-state decay r21 is power independent (the default when
    ``pump_slope`` is not given). The deshelving rate follows
    r31(P) = r31_0 * (1 + beta * P) and r23 is constant.
    """

    r21_0: float
    alpha: float
    r31_0: float = 0.0
    beta: float = 0.0
    r23: float = 0.0
    pump_slope: float | None = None

    def __post_init__(self):
        if self.r21_0 <= 0.0:
            raise ValueError("r21_0 must be positive")
        for name in ("alpha", "r31_0", "beta", "r23"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        if self.pump_slope is None:
            object.__setattr__(self, "pump_slope", self.alpha * self.r21_0)
        elif self.pump_slope < 0.0:
            raise ValueError("pump_slope must be nonnegative")

    @property
    def scheme(self) -> LevelScheme:
        return LevelScheme.TWO_LEVEL if self.r23 == 0.0 else LevelScheme.THREE_LEVEL

    @property
    def p_sat_mw(self) -> float:
        """Optical saturation power 1/alpha (mW)."""
        if self.alpha <= 0.0:
            raise ValueError("saturation power undefined for alpha = 0")
        return 1.0 / self.alpha

    def rates_at(self, p_opt_mw: float) -> RateSet:
        """Transition rates at optical power ``p_opt_mw``."""
        if p_opt_mw < 0.0:
            raise ValueError("optical power must be nonnegative")
        return RateSet(
            r12=self.pump_slope * p_opt_mw,
            r21=self.r21_0,
            r23=self.r23,
            r31=self.r31_0 * (1.0 + self.beta * p_opt_mw) if self.r23 > 0.0 else 0.0,
        )

    def as_dict(self) -> dict:
        return {
            "r21_0": self.r21_0,
            "alpha": self.alpha,
            "r31_0": self.r31_0,
            "beta": self.beta,
            "r23": self.r23,
            "pump_slope": self.pump_slope,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PowerLaw":
        return cls(
            r21_0=d["r21_0"],
            alpha=d["alpha"],
            r31_0=d.get("r31_0", 0.0),
            beta=d.get("beta", 0.0),
            r23=d.get("r23", 0.0),
            pump_slope=d.get("pump_slope"),
        )


@dataclass(frozen=True)
class SaturationModel:
    """Detected-rate saturation curve: phi_inf (counts/s), p_sat (uW)."""

    phi_inf: float
    p_sat: float

    def __post_init__(self):
        if self.phi_inf <= 0.0 or self.p_sat <= 0.0:
            raise ValueError("phi_inf and p_sat must be positive")

    @classmethod
    def from_power_law(cls, law: PowerLaw, eta: float) -> "SaturationModel":
        """Two-level saturation parameters: phi_inf = eta*r21_0, p_sat = 1/alpha."""
        return cls(
            phi_inf=eta * per_ns_to_counts_per_s(law.r21_0),
            p_sat=law.p_sat_mw * 1e3,
        )


@dataclass(frozen=True)
class CollectionBudget:
    """End-to-end collection efficiency and its optional factorization.

    eta_total = eta_opt * eta_det * eta_theta * eta_cr when the four
    factors are known; any factor may be left None, in which case
    eta_total must be supplied directly.
    """

    eta_total: float | None = None
    eta_opt: float | None = None
    eta_det: float | None = None
    eta_theta: float | None = None
    eta_cr: float | None = None

    def __post_init__(self):
        factors = (self.eta_opt, self.eta_det, self.eta_theta, self.eta_cr)
        for f in factors:
            if f is not None and not 0.0 <= f <= 1.0:
                raise ValueError("each efficiency factor must lie in [0, 1]")
        if all(f is not None for f in factors):
            product = math.prod(factors)
            if self.eta_total is None:
                object.__setattr__(self, "eta_total", product)
            elif not math.isclose(self.eta_total, product, rel_tol=1e-9):
                raise ValueError(
                    f"eta_total={self.eta_total} does not equal the factor "
                    f"product {product}"
                )
        elif self.eta_total is None:
            raise ValueError("eta_total required when factors are incomplete")
        if not 0.0 <= self.eta_total <= 1.0:
            raise ValueError("eta_total must lie in [0, 1]")


def _eval_abs_tau(tau):
    arr = np.abs(np.asarray(tau, dtype=float))
    return arr, np.isscalar(tau) or np.ndim(tau) == 0


def g2_two_level(tau, lambda1: float):
    """g2(tau) = 1 - exp(-lambda1*|tau|) for a two-level emitter.

    Exactly 0 at tau = 0, rises monotonically to 1. ``tau`` may be a
    scalar or array of signed delays (ns); the curve is symmetric.
    """
    if lambda1 <= 0.0:
        raise ValueError("lambda1 must be positive")
    t, scalar = _eval_abs_tau(tau)
    out = -np.expm1(-lambda1 * t)
    return float(out) if scalar else out


def g2_three_level(tau, lambda1: float, lambda2: float, a: float):
    """g2(tau) = 1 - (1+a)exp(-lambda1*|tau|) + a*exp(-lambda2*|tau|).

    Requires lambda1 > lambda2 > 0 and a >= 0. The curve is 0 at
    tau = 0, exceeds 1 at intermediate delays when a > 0 (bunching) and
    approaches 1 as tau -> inf.
    """
    if lambda2 <= 0.0 or lambda1 <= lambda2:
        raise ValueError("need lambda1 > lambda2 > 0 (degenerate model otherwise)")
    if a < 0.0:
        raise ValueError("bunching amplitude a must be nonnegative")
    t, scalar = _eval_abs_tau(tau)
    out = 1.0 - (1.0 + a) * np.exp(-lambda1 * t) + a * np.exp(-lambda2 * t)
    return float(out) if scalar else out


def lambda1_of_power(p_opt: float, law: PowerLaw) -> float:
    """Antibunching rate lambda1 = r21_0*(1 + alpha*P) at power P (mW)."""
    if p_opt < 0.0:
        raise ValueError("optical power must be nonnegative")
    return law.r21_0 * (1.0 + law.alpha * p_opt)


def lambda2_of_power(p_opt: float, law: PowerLaw) -> float:
    """Bunching rate lambda2 at power P (mW).

    r31_0*(1 + beta*P) + r23*r12(P)/lambda1(P) with r12 = pump_slope*P;
    reduces to r31_0 at zero power.
    """
    if p_opt < 0.0:
        raise ValueError("optical power must be nonnegative")
    shelf = law.r23 * law.pump_slope * p_opt / lambda1_of_power(p_opt, law)
    return law.r31_0 * (1.0 + law.beta * p_opt) + shelf


def bunching_amplitude(rates: RateSet) -> float:
    """Bunching amplitude a = r12*r23 / (lambda1*r31).

    First-order expression for slow shelving; the exact amplitude comes
    from :func:`antibunch.kinetics.biexponential_parameters`.
    """
    if rates.r31 <= 0.0:
        raise ValueError("bunching amplitude requires r31 > 0")
    return rates.r12 * rates.r23 / (rates.lambda1 * rates.r31)


def shelving_ratio(rates: RateSet) -> float:
    """Ratio r23/r31 of average off to on periods of the source."""
    if rates.r31 <= 0.0:
        raise ValueError("shelving ratio requires r31 > 0")
    return rates.r23 / rates.r31


def saturation_rate(p_opt: float, model: SaturationModel) -> float:
    """Detected rate phi_inf*P/(P_sat + P) at pump power P (uW)."""
    if p_opt < 0.0:
        raise ValueError("optical power must be nonnegative")
    return model.phi_inf * p_opt / (model.p_sat + p_opt)


def three_level_count_rate(rates: RateSet, eta: float, eta_qe: float) -> float:
    """Detected steady-state rate (counts/s) of a three-level emitter.

    eta_qe * eta * r21 / (1 + r21/r12 + r23/r31); returns 0 in the
    unpumped limit r12 = 0.
    """
    if not 0.0 < eta <= 1.0 or not 0.0 < eta_qe <= 1.0:
        raise ValueError("eta and eta_qe must lie in (0, 1]")
    if rates.r12 == 0.0:
        return 0.0
    shelf = rates.r23 / rates.r31 if rates.r23 > 0.0 else 0.0
    denom = 1.0 + rates.r21 / rates.r12 + shelf
    return eta_qe * eta * per_ns_to_counts_per_s(rates.r21) / denom

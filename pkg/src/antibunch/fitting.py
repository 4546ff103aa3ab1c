"""Weighted least-squares inversion of emitter observables.

Every fit follows the same pattern: an analytic model with an analytic
Jacobian, positive scale parameters handled in log space, and damped least
squares (MINPACK Levenberg-Marquardt through scipy) on error-weighted
residuals. Standard errors come from the Gauss-Newton covariance at the
optimum; fits that fail to converge return a flagged result instead of
raising.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .correlate import IRF, DecayCurve, G2Curve, convolve_model
from .models import LevelScheme, PowerLaw
from .units import per_ns_to_counts_per_s, per_ns_to_mhz, uw_to_mw

_MAX_NFEV = 2000


# -- result container --------------------------------------------------------


@dataclass
class FitResult:
    """Named parameter estimates with standard errors and fit diagnostics."""

    params: dict[str, float]
    errors: dict[str, float]
    chi2_dof: float
    covariance: np.ndarray
    converged: bool
    iterations: int
    model: str = ""
    flags: list[str] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def value(self, name: str) -> float:
        return self.params[name]

    def error(self, name: str) -> float:
        return self.errors[name]

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "params": self.params,
            "errors": self.errors,
            "chi2_dof": self.chi2_dof,
            "covariance": np.asarray(self.covariance).tolist(),
            "converged": self.converged,
            "iterations": self.iterations,
            "flags": self.flags,
            "extras": self.extras,
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.as_dict(), indent=2))
        return path

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(
            params=d["params"],
            errors=d["errors"],
            chi2_dof=d["chi2_dof"],
            covariance=np.asarray(d["covariance"]),
            converged=d["converged"],
            iterations=d["iterations"],
            model=d.get("model", ""),
            flags=list(d.get("flags", [])),
            extras=d.get("extras", {}),
        )

    @classmethod
    def load(cls, path) -> "FitResult":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class PowerSeries:
    """Fitted decay rates versus optical power (powers in uW, rates ns^-1)."""

    powers: np.ndarray
    lambda1: np.ndarray
    lambda1_err: np.ndarray | None = None
    lambda2: np.ndarray | None = None
    lambda2_err: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "powers", np.asarray(self.powers, dtype=float))
        object.__setattr__(self, "lambda1", np.asarray(self.lambda1, dtype=float))
        for name in ("lambda1_err", "lambda2", "lambda2_err"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=float))
        if np.any(self.powers <= 0.0) or np.unique(self.powers).size != self.powers.size:
            raise ValueError("powers must be distinct and positive")
        if self.lambda1.size != self.powers.size:
            raise ValueError("lambda1 must match powers in length")


@dataclass
class EmitterReport:
    """One summary row of an emitter's photophysics."""

    label: str
    scheme: LevelScheme
    eta_qe: float | None = None
    phi_inf: float | None = None  # counts/s
    p_sat: float | None = None  # uW
    tau21_pulsed: float | None = None  # ns
    tau21_cw: float | None = None  # ns
    r31: float | None = None  # MHz
    r23: float | None = None  # MHz
    eta: float | None = None
    g2_zero: float | None = None
    gaps: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["scheme"] = self.scheme.value
        return d

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.as_dict(), indent=2))
        return path

    @classmethod
    def from_dict(cls, d: dict) -> "EmitterReport":
        d = dict(d)
        d["scheme"] = LevelScheme(d["scheme"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "EmitterReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def render_table(reports: list[EmitterReport]) -> str:
    """Fixed-width summary table, one row per emitter."""

    def fmt(v, spec=".3g") -> str:
        return "" if v is None else format(v, spec)

    headers = [
        "lambda (nm)", "eta_QE", "phi_inf (counts/s)",
        "tau21 pulsed (ns)", "tau21 CW (ns)", "r31 (MHz)", "r23 (MHz)",
    ]
    rows = [
        [
            r.label, fmt(r.eta_qe), fmt(r.phi_inf),
            fmt(r.tau21_pulsed), fmt(r.tau21_cw), fmt(r.r31), fmt(r.r23),
        ]
        for r in reports
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows]
    return "\n".join(lines)


# -- shared machinery --------------------------------------------------------


def _sigma_floor(err: np.ndarray) -> np.ndarray:
    """Usable weights: unit sigma if no errors given, floor zeros otherwise."""
    err = np.asarray(err, dtype=float)
    if not np.any(err > 0.0):
        return np.ones_like(err)
    return np.where(err > 0.0, err, err[err > 0.0].min())


def _to_internal(p: np.ndarray, transforms) -> np.ndarray:
    return np.array([math.log(v) if t == "log" else v for v, t in zip(p, transforms)])


def _to_external(u: np.ndarray, transforms) -> np.ndarray:
    return np.array([math.exp(v) if t == "log" else v for v, t in zip(u, transforms)])


def _lsq_fit(
    model_and_jac,
    x: np.ndarray,
    y: np.ndarray,
    sigma: np.ndarray,
    names: list[str],
    p0: np.ndarray,
    transforms: list[str],
    label: str,
) -> FitResult:
    """Generic damped least squares with log-transformed positive params.

    ``model_and_jac(x, p)`` returns (model values, Jacobian d(model)/dp of
    shape (len(x), len(p))) in external parameter space.
    """
    sigma = _sigma_floor(sigma)

    def residuals(u):
        p = _to_external(u, transforms)
        f, _ = model_and_jac(x, p)
        return (f - y) / sigma

    def jac(u):
        p = _to_external(u, transforms)
        _, jp = model_and_jac(x, p)
        scale = np.array([pi if t == "log" else 1.0 for pi, t in zip(p, transforms)])
        return (jp * scale) / sigma[:, None]

    u0 = _to_internal(np.asarray(p0, dtype=float), transforms)
    try:
        res = least_squares(residuals, u0, jac=jac, method="lm", max_nfev=_MAX_NFEV)
    except Exception as exc:  # noqa: BLE001 - a fit must never crash the pipeline
        nan = float("nan")
        return FitResult(
            params={n: nan for n in names},
            errors={n: nan for n in names},
            chi2_dof=nan,
            covariance=np.full((len(names), len(names)), nan),
            converged=False,
            iterations=0,
            model=label,
            flags=[f"exception: {exc}"],
        )
    p = _to_external(res.x, transforms)
    dof = max(x.size - len(names), 1)
    chi2_dof = float(2.0 * res.cost / dof)
    jtj = res.jac.T @ res.jac
    flags: list[str] = []
    try:
        cov_u = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov_u = np.linalg.pinv(jtj)
        flags.append("singular-covariance")
    scale = np.array([pi if t == "log" else 1.0 for pi, t in zip(p, transforms)])
    cov = cov_u * np.outer(scale, scale)
    err = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    converged = bool(res.success)
    if not converged:
        flags.append("non-converged")
    return FitResult(
        params=dict(zip(names, map(float, p))),
        errors=dict(zip(names, map(float, err))),
        chi2_dof=chi2_dof,
        covariance=cov,
        converged=converged,
        iterations=int(res.nfev),
        model=label,
        flags=flags,
    )


def _wls_linear(basis: np.ndarray, y: np.ndarray, sigma: np.ndarray):
    """Closed-form weighted linear least squares; returns (coeff, cov, chi2_dof)."""
    sigma = _sigma_floor(sigma)
    a = basis / sigma[:, None]
    b = y / sigma
    coeff, *_ = np.linalg.lstsq(a, b, rcond=None)
    cov = np.linalg.pinv(a.T @ a)
    resid = b - a @ coeff
    dof = max(y.size - basis.shape[1], 1)
    return coeff, cov, float(resid @ resid / dof)


# -- g2 fits ------------------------------------------------------------------


def _g2_model_and_jac(scheme: LevelScheme, irf: IRF):
    def conv(fn, grid):
        return convolve_model(fn, irf, grid)

    if scheme is LevelScheme.TWO_LEVEL:

        def model_and_jac(x, p):
            lam1, amp, off = p
            c = conv(lambda t: 1.0 - np.exp(-lam1 * np.abs(t)), x)
            dlam = conv(lambda t: np.abs(t) * np.exp(-lam1 * np.abs(t)), x)
            jac = np.column_stack([amp * dlam, c, np.ones_like(c)])
            return off + amp * c, jac

        return model_and_jac, ["lambda1", "amplitude", "offset"], ["log", "lin", "lin"]

    def model_and_jac(x, p):
        lam1, lam2, a, amp, off = p
        c = conv(
            lambda t: 1.0 - (1.0 + a) * np.exp(-lam1 * np.abs(t)) + a * np.exp(-lam2 * np.abs(t)),
            x,
        )
        d1 = conv(lambda t: (1.0 + a) * np.abs(t) * np.exp(-lam1 * np.abs(t)), x)
        d2 = conv(lambda t: -a * np.abs(t) * np.exp(-lam2 * np.abs(t)), x)
        da = conv(lambda t: np.exp(-lam2 * np.abs(t)) - np.exp(-lam1 * np.abs(t)), x)
        jac = np.column_stack([amp * d1, amp * d2, amp * da, c, np.ones_like(c)])
        return off + amp * c, jac

    return (
        model_and_jac,
        ["lambda1", "lambda2", "a", "amplitude", "offset"],
        ["log", "log", "lin", "lin", "lin"],
    )


def _g2_initial_guess(curve: G2Curve, scheme: LevelScheme) -> dict:
    """Moment-style starting values from the curve shape."""
    tau = np.abs(curve.bin_centers)
    order = np.argsort(tau)
    tau_s, val_s = tau[order], curve.values[order]
    outer = max(1, tau_s.size // 10)
    plateau = float(np.mean(val_s[-outer:]))
    if plateau <= 0.0:
        plateau = 1.0
    floor = float(np.min(val_s[: max(3, outer)]))
    offset0 = min(max(floor, 0.0), 0.9 * plateau)
    amp0 = max(plateau - offset0, 0.1 * plateau)
    # half-rise delay of the antibunching dip
    target = offset0 + 0.5 * amp0
    above = np.nonzero(val_s >= target)[0]
    t_half = tau_s[above[0]] if above.size and tau_s[above[0]] > 0.0 else (tau_s[-1] / 10.0 or 1.0)
    lam1 = math.log(2.0) / t_half
    guess = {"lambda1": lam1, "amplitude": amp0, "offset": offset0}
    if scheme is LevelScheme.THREE_LEVEL:
        excess = val_s - plateau
        peak = float(np.max(excess))
        a0 = max(peak / max(plateau, 1e-12), 1e-3)
        # bunching tail: last delay where the excess is above half its peak
        above_half = np.nonzero(excess > 0.5 * peak)[0]
        t_tail = tau_s[above_half[-1]] if peak > 0.0 and above_half.size else tau_s[-1] / 3.0
        lam2 = min(math.log(2.0) / max(t_tail, tau_s[1] if tau_s.size > 1 else 1.0), lam1 / 10.0)
        guess.update({"lambda2": max(lam2, 1e-9), "a": a0})
    return guess


def fit_g2(
    curve: G2Curve,
    irf: IRF,
    scheme: LevelScheme = LevelScheme.TWO_LEVEL,
    init: dict | None = None,
) -> FitResult:
    """Fit the IRF-convolved analytic g2 to a measured curve.

    Two-level parameters: lambda1, amplitude, offset; three-level adds
    lambda2 and the bunching amplitude a. The amplitude and offset absorb
    residual normalization and uncorrected background. The result carries
    ``g2_zero_fitted`` (convolved model at zero delay) and
    ``g2_zero_raw`` (central bin) in ``extras``.
    """
    if curve.bin_centers.size < 50:
        raise ValueError("g2 fit needs at least 50 bins")
    model_and_jac, names, transforms = _g2_model_and_jac(scheme, irf)
    guess = _g2_initial_guess(curve, scheme)
    if init:
        guess.update(init)
    p0 = np.array([guess[n] for n in names])
    result = _lsq_fit(
        model_and_jac,
        curve.bin_centers,
        curve.values,
        curve.errors,
        names,
        p0,
        transforms,
        label=f"g2-{scheme.value}",
    )
    if scheme is LevelScheme.THREE_LEVEL and result.converged:
        if result.params["lambda2"] >= result.params["lambda1"]:
            result.flags.append("degenerate")
    if result.converged:
        p = np.array([result.params[n] for n in names])
        center = np.argmin(np.abs(curve.bin_centers))
        lo = max(center - 2, 0)
        window = curve.bin_centers[lo : center + 3]
        fitted, _ = model_and_jac(window, p)
        result.extras["g2_zero_fitted"] = float(fitted[np.argmin(np.abs(window))])
        result.extras["g2_zero_raw"] = curve.central_value()
    return result


# -- power-series extrapolation ----------------------------------------------


def extrapolate_lambda1(series: PowerSeries) -> FitResult:
    """Weighted linear fit lambda1(P) = r21_0*(1 + alpha*P).

    Powers are uW in the series and the fitted alpha is per mW. Reports
    r21_0 (ns^-1), alpha (mW^-1) and the zero-power lifetime tau21 (ns).
    """
    if series.powers.size < 3:
        raise ValueError("extrapolation needs at least 3 powers")
    p_mw = uw_to_mw(series.powers)
    sigma = series.lambda1_err if series.lambda1_err is not None else np.zeros_like(p_mw)
    basis = np.column_stack([np.ones_like(p_mw), p_mw])
    coeff, cov, chi2_dof = _wls_linear(basis, series.lambda1, sigma)
    b, m = coeff
    alpha = m / b
    # delta method for alpha = m/b and tau = 1/b
    g_alpha = np.array([-m / b**2, 1.0 / b])
    var_alpha = float(g_alpha @ cov @ g_alpha)
    var_tau = float(cov[0, 0] / b**4)
    return FitResult(
        params={"r21_0": float(b), "alpha": float(alpha), "tau21": float(1.0 / b)},
        errors={
            "r21_0": float(math.sqrt(max(cov[0, 0], 0.0))),
            "alpha": math.sqrt(max(var_alpha, 0.0)),
            "tau21": math.sqrt(max(var_tau, 0.0)),
        },
        chi2_dof=chi2_dof,
        covariance=cov,
        converged=True,
        iterations=1,
        model="lambda1-power-law",
    )


def extrapolate_lambda2(series: PowerSeries, r21_law: FitResult | PowerLaw) -> FitResult:
    """Weighted fit of lambda2(P) = r31_0*(1 + beta*P) + r23*r12(P)/lambda1(P).

    The pump term r12(P) = pump_slope*P is fixed by the lambda1 stage
    (pump_slope = alpha*r21_0), which linearizes the model in
    (r31_0, r31_0*beta, r23). Reports r31_0 (ns^-1), beta (mW^-1), r23
    (ns^-1) and the raw product r23*pump_slope.
    """
    if series.lambda2 is None:
        raise ValueError("series has no lambda2 entries")
    if series.powers.size < 3:
        raise ValueError("extrapolation needs at least 3 powers")
    if isinstance(r21_law, FitResult):
        r21_0 = r21_law.params["r21_0"]
        alpha = r21_law.params["alpha"]
        pump_slope = alpha * r21_0
    else:
        r21_0, alpha, pump_slope = r21_law.r21_0, r21_law.alpha, r21_law.pump_slope
    p_mw = uw_to_mw(series.powers)
    sigma = series.lambda2_err if series.lambda2_err is not None else np.zeros_like(p_mw)
    shelf_basis = pump_slope * p_mw / (r21_0 * (1.0 + alpha * p_mw))
    basis = np.column_stack([np.ones_like(p_mw), p_mw, shelf_basis])
    coeff, cov, chi2_dof = _wls_linear(basis, series.lambda2, sigma)
    r31_0, c1, r23 = coeff
    beta = c1 / r31_0
    g_beta = np.array([-c1 / r31_0**2, 1.0 / r31_0, 0.0])
    var_beta = float(g_beta @ cov @ g_beta)
    return FitResult(
        params={
            "r31_0": float(r31_0),
            "beta": float(beta),
            "r23": float(r23),
            "r23_pump_product": float(r23 * pump_slope),
        },
        errors={
            "r31_0": float(math.sqrt(max(cov[0, 0], 0.0))),
            "beta": math.sqrt(max(var_beta, 0.0)),
            "r23": float(math.sqrt(max(cov[2, 2], 0.0))),
            "r23_pump_product": float(math.sqrt(max(cov[2, 2], 0.0)) * pump_slope),
        },
        chi2_dof=chi2_dof,
        covariance=cov,
        converged=True,
        iterations=1,
        model="lambda2-power-law",
        extras={"pump_slope": float(pump_slope), "r21_0": float(r21_0), "alpha": float(alpha)},
    )


# -- saturation ---------------------------------------------------------------


@dataclass(frozen=True)
class SaturationCurve:
    """Detected count rate versus optical power (uW, counts/s)."""

    powers: np.ndarray
    rates: np.ndarray
    errors: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "powers", np.asarray(self.powers, dtype=float))
        object.__setattr__(self, "rates", np.asarray(self.rates, dtype=float))
        err = self.errors if self.errors is not None else np.zeros_like(self.powers)
        object.__setattr__(self, "errors", np.asarray(err, dtype=float))
        if self.powers.size != self.rates.size or self.powers.size != self.errors.size:
            raise ValueError("curve arrays must share a length")
        if np.any(self.powers < 0.0):
            raise ValueError("powers must be nonnegative")

    def save(self, path) -> Path:
        from .correlate import _save_curve

        return _save_curve(
            path,
            columns={"power_uw": self.powers, "rate_cps": self.rates, "error_cps": self.errors},
            meta={"kind": "saturation"},
        )

    @classmethod
    def load(cls, path) -> "SaturationCurve":
        from .correlate import _load_curve

        cols, _ = _load_curve(path, expected_kind="saturation")
        return cls(powers=cols["power_uw"], rates=cols["rate_cps"], errors=cols["error_cps"])


def fit_saturation(
    curve: SaturationCurve,
    scheme: LevelScheme = LevelScheme.TWO_LEVEL,
    law: PowerLaw | None = None,
    eta: float | None = None,
) -> FitResult:
    """Fit the detected-rate saturation curve.

    Two-level: phi(P) = phi_inf*P/(P_sat + P), parameters (phi_inf, P_sat).
    Three-level: the rates come from ``law`` at each power and ``eta`` is
    fixed, leaving the quantum efficiency eta_qe as the single linear
    parameter of phi = eta_qe*eta*r21/(1 + r21/r12 + r23/r31).
    """
    if curve.powers.size < 4:
        raise ValueError("saturation fit needs at least 4 powers")
    if scheme is LevelScheme.TWO_LEVEL:
        return _fit_saturation_two_level(curve)
    if law is None or eta is None:
        raise ValueError("three-level saturation fit requires a PowerLaw and eta")
    return _fit_saturation_three_level(curve, law, eta)


def _fit_saturation_two_level(curve: SaturationCurve) -> FitResult:
    def model_and_jac(x, p):
        phi_inf, p_sat = p
        denom = p_sat + x
        f = phi_inf * x / denom
        jac = np.column_stack([x / denom, -phi_inf * x / denom**2])
        return f, jac

    pos = curve.rates > 0.0
    if np.count_nonzero(pos) >= 2:
        # reciprocal form 1/phi = 1/phi_inf + (P_sat/phi_inf)/P from the
        # lowest and highest usable powers
        p_lo, p_hi = curve.powers[pos][[0, -1]]
        y_lo, y_hi = curve.rates[pos][[0, -1]]
        a = np.array([[1.0, 1.0 / p_lo], [1.0, 1.0 / p_hi]])
        try:
            c0, c1 = np.linalg.solve(a, [1.0 / y_lo, 1.0 / y_hi])
            phi0 = 1.0 / c0 if c0 > 0.0 else float(curve.rates.max()) * 2.0
            psat0 = c1 / c0 if c0 > 0.0 and c1 > 0.0 else float(np.median(curve.powers))
        except np.linalg.LinAlgError:
            phi0, psat0 = float(curve.rates.max()) * 2.0, float(np.median(curve.powers))
    else:
        phi0, psat0 = max(float(curve.rates.max()), 1.0) * 2.0, float(np.median(curve.powers))
    result = _lsq_fit(
        model_and_jac,
        curve.powers,
        curve.rates,
        curve.errors,
        ["phi_inf", "p_sat"],
        np.array([phi0, psat0]),
        ["log", "log"],
        label="saturation-two-level",
    )
    if result.converged and curve.powers.max() < result.params["p_sat"] / 5.0:
        result.flags.append("ill-conditioned")
    return result


def _fit_saturation_three_level(curve: SaturationCurve, law: PowerLaw, eta: float) -> FitResult:
    p_mw = uw_to_mw(curve.powers)
    shape = np.empty_like(p_mw)
    for i, p in enumerate(p_mw):
        rates = law.rates_at(p)
        if rates.r12 == 0.0:
            shape[i] = 0.0
            continue
        shelf = rates.r23 / rates.r31 if rates.r23 > 0.0 else 0.0
        shape[i] = eta * per_ns_to_counts_per_s(rates.r21) / (
            1.0 + rates.r21 / rates.r12 + shelf
        )
    basis = shape[:, None]
    coeff, cov, chi2_dof = _wls_linear(basis, curve.rates, curve.errors)
    return FitResult(
        params={"eta_qe": float(coeff[0])},
        errors={"eta_qe": float(math.sqrt(max(cov[0, 0], 0.0)))},
        chi2_dof=chi2_dof,
        covariance=cov,
        converged=True,
        iterations=1,
        model="saturation-three-level",
        extras={"eta": eta},
    )


# -- pulsed lifetime -----------------------------------------------------------


def fit_lifetime(decay: DecayCurve, t_min: float = 0.5) -> FitResult:
    """Poisson-weighted single-exponential fit of a decay histogram.

    Bins before ``t_min`` (ns) are excluded; the sub-0.5 ns region is
    where fast background luminescence contaminates the decay. Parameters
    are tau (ns), amplitude (counts/bin) and a flat baseline.
    """
    mask = decay.bin_centers >= t_min
    t = decay.bin_centers[mask]
    y = decay.counts[mask].astype(float)
    if t.size < 4:
        raise ValueError("too few bins beyond t_min")
    sigma = np.sqrt(np.maximum(y, 1.0))

    def model_and_jac(x, p):
        tau, amp, base = p
        e = np.exp(-x / tau)
        f = amp * e + base
        jac = np.column_stack([amp * x * e / tau**2, e, np.ones_like(x)])
        return f, jac

    base0 = float(np.mean(y[-max(1, y.size // 10) :]))
    excess = np.clip(y - base0, 0.0, None)
    total = excess.sum()
    if total > 0.0:
        tau0 = float(np.sum(excess * t) / total - t[0])
        tau0 = max(tau0, decay.bin_width)
        amp0 = max(float(excess[0]), 1.0)
    else:
        tau0, amp0 = max(t[-1] / 5.0, decay.bin_width), max(float(y.max()), 1.0)
    result = _lsq_fit(
        model_and_jac,
        t,
        y,
        sigma,
        ["tau", "amplitude", "baseline"],
        np.array([tau0, amp0, max(base0, 1e-9)]),
        ["log", "log", "lin"],
        label="lifetime",
    )
    if y.sum() < 1e3:
        result.flags.append("low-statistics")
    if result.converged and result.params["amplitude"] <= 2.0 * math.sqrt(max(base0, 1.0)):
        result.flags.append("amplitude-consistent-with-zero")
    return result


# -- efficiencies ---------------------------------------------------------------


def collection_efficiency_pulsed(
    phi: float,
    rep_rate: float,
    dead_time: float | None = None,
    lifetime: float | None = None,
) -> float:
    """Direct collection efficiency eta = phi/R_rep for a two-level
    emitter pulsed above saturation.

    phi in counts/s, rep_rate in MHz. Warns when the pulse period does
    not dominate the supplied dead time or lifetime (ns).
    """
    if rep_rate <= 0.0:
        raise ValueError("rep_rate must be positive")
    if phi < 0.0:
        raise ValueError("count rate must be nonnegative")
    period_ns = 1e3 / rep_rate
    if dead_time is not None and period_ns <= dead_time:
        warnings.warn("pulse period does not exceed the detector dead time")
    if lifetime is not None and period_ns <= lifetime:
        warnings.warn("pulse period does not exceed the emitter lifetime")
    return phi / (rep_rate * 1e6)


def collection_efficiency_cw(phi_inf: float, r21_0: float) -> float:
    """CW collection efficiency eta = phi_inf / r21_0 for a two-level
    emitter (phi_inf counts/s, r21_0 ns^-1)."""
    if phi_inf < 0.0 or r21_0 <= 0.0:
        raise ValueError("phi_inf must be nonnegative and r21_0 positive")
    return phi_inf / per_ns_to_counts_per_s(r21_0)


# -- report assembly -------------------------------------------------------------


def build_report(
    label: str,
    scheme: LevelScheme,
    g2_fit: FitResult | None = None,
    saturation_fit: FitResult | None = None,
    lifetime_fit: FitResult | None = None,
    lambda1_fit: FitResult | None = None,
    lambda2_fit: FitResult | None = None,
    eta: float | None = None,
) -> EmitterReport:
    """Assemble the per-emitter summary row from the available fits.

    Requires at least one fit; mandatory pieces that are absent are
    listed in ``gaps``. CW and pulsed lifetimes disagreeing by more than
    20% are flagged in ``notes``, never averaged.
    """
    fits = (g2_fit, saturation_fit, lifetime_fit, lambda1_fit, lambda2_fit)
    if all(f is None for f in fits):
        raise ValueError("cannot build a report without any fits")
    report = EmitterReport(label=label, scheme=scheme, eta=eta)
    if g2_fit is None:
        report.gaps.append("g2 fit")
    else:
        report.g2_zero = g2_fit.extras.get("g2_zero_fitted")
    if saturation_fit is None:
        report.gaps.append("saturation fit")
    if lifetime_fit is not None and lifetime_fit.converged:
        report.tau21_pulsed = lifetime_fit.params["tau"]
    if lambda1_fit is not None and lambda1_fit.converged:
        report.tau21_cw = lambda1_fit.params["tau21"]
    if scheme is LevelScheme.TWO_LEVEL:
        report.eta_qe = 1.0
        if saturation_fit is not None and saturation_fit.converged:
            report.phi_inf = saturation_fit.params["phi_inf"]
            report.p_sat = saturation_fit.params["p_sat"]
            if report.eta is None and lambda1_fit is not None and lambda1_fit.converged:
                report.eta = collection_efficiency_cw(
                    report.phi_inf, lambda1_fit.params["r21_0"]
                )
    else:
        if saturation_fit is not None and saturation_fit.converged:
            report.eta_qe = saturation_fit.params.get("eta_qe")
            if report.eta is None:
                report.eta = saturation_fit.extras.get("eta")
        if lambda2_fit is not None and lambda2_fit.converged:
            report.r31 = per_ns_to_mhz(lambda2_fit.params["r31_0"])
            report.r23 = per_ns_to_mhz(lambda2_fit.params["r23"])
        else:
            report.gaps.append("lambda2 extrapolation")
        if (
            report.eta_qe is not None
            and report.eta is not None
            and lambda1_fit is not None
            and lambda1_fit.converged
        ):
            # model-implied asymptote: shelving leaks vanish as r31 grows
            report.phi_inf = report.eta_qe * report.eta * per_ns_to_counts_per_s(
                lambda1_fit.params["r21_0"]
            )
            report.notes.append("phi_inf is model-implied (eta_qe*eta*r21_0)")
    if report.tau21_cw and report.tau21_pulsed:
        rel = abs(report.tau21_pulsed - report.tau21_cw) / report.tau21_cw
        if rel > 0.20:
            report.notes.append(
                f"CW and pulsed lifetimes disagree by {rel:.0%}; both reported"
            )
    return report

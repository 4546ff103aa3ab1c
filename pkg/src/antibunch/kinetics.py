"""Population dynamics of the emitter rate equations.

Independent numerical oracle for the closed forms in :mod:`antibunch.models`:
the linear rate equations are solved by numeric eigendecomposition (with a
matrix-exponential fallback near eigenvalue degeneracy) and, as a second
self-check, by adaptive Runge-Kutta integration. The exact biexponential
parameters of the three-level g2 are derived here from the eigen-structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .models import LevelScheme, RateSet

_DEGENERACY_RTOL = 1e-9
_STATE_TOL = 1e-9


@dataclass(frozen=True)
class PopulationState:
    """Occupation probabilities of the three levels at time t (ns)."""

    n1: float
    n2: float
    n3: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        total = self.n1 + self.n2 + self.n3
        if abs(total - 1.0) > _STATE_TOL:
            raise ValueError(f"populations must sum to 1, got {total}")
        for name in ("n1", "n2", "n3"):
            v = getattr(self, name)
            if v < -_STATE_TOL or v > 1.0 + _STATE_TOL:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([self.n1, self.n2, self.n3])


GROUND = PopulationState(n1=1.0, n2=0.0, n3=0.0)


def rate_matrix(rates: RateSet) -> np.ndarray:
    """Generator matrix M with dn/dt = M n (columns sum to zero)."""
    r12, r21, r23, r31 = rates.r12, rates.r21, rates.r23, rates.r31
    if rates.scheme is LevelScheme.TWO_LEVEL:
        r23 = 0.0
        r31 = 0.0
    return np.array(
        [
            [-r12, r21, r31],
            [r12, -(r21 + r23), 0.0],
            [0.0, r23, -r31],
        ]
    )


def _eig_propagated(m: np.ndarray, n0: np.ndarray, t_grid: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eig(m)
    coeff = np.linalg.solve(v, n0)
    return ((v * coeff) @ np.exp(np.outer(w, t_grid))).real


def _propagated(rates: RateSet, n0: np.ndarray, t_grid: np.ndarray) -> np.ndarray:
    """Populations at each time in t_grid, shape (3, len(t_grid)).

    Eigendecomposition of the generator; two-level systems use the 2x2
    block (the shelf is disconnected), and near-degenerate decaying
    eigenvalues fall back to the matrix exponential, whose Pade form
    carries the t*exp(-lambda*t) limit.
    """
    m = rate_matrix(rates)
    if rates.scheme is LevelScheme.TWO_LEVEL:
        out2 = _eig_propagated(m[:2, :2], n0[:2], t_grid)
        return np.vstack([out2, np.full(t_grid.shape, n0[2])])
    w = np.linalg.eigvals(m)
    decaying = np.sort(np.abs(w))[1:]
    if decaying[1] - decaying[0] < _DEGENERACY_RTOL * decaying[1]:
        return np.stack([expm(m * t) @ n0 for t in t_grid], axis=1)
    return _eig_propagated(m, n0, t_grid)


def populations_at(t: float, rates: RateSet, init: PopulationState = GROUND) -> PopulationState:
    """Solve the rate equations from ``init`` for a duration t (ns)."""
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    n = _propagated(rates, init.as_array(), np.array([float(t)]))[:, 0]
    return PopulationState(n1=n[0], n2=n[1], n3=n[2], t=init.t + t)


def integrate_populations(
    t_grid: np.ndarray, rates: RateSet, init: PopulationState = GROUND
) -> np.ndarray:
    """Adaptive Runge-Kutta solution on t_grid, shape (3, len(t_grid)).

    Second, method-independent route used to cross-check the
    eigendecomposition path.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    m = rate_matrix(rates)
    sol = solve_ivp(
        lambda _, n: m @ n,
        (0.0, float(t_grid[-1])),
        init.as_array(),
        t_eval=t_grid,
        method="DOP853",
        rtol=1e-12,
        atol=1e-14,
    )
    if not sol.success:
        raise RuntimeError(f"ODE integration failed: {sol.message}")
    return sol.y


def steady_state(rates: RateSet) -> PopulationState:
    """Normalized null-space vector of the rate matrix."""
    if rates.r12 == 0.0:
        return PopulationState(n1=1.0, n2=0.0, n3=0.0, t=math.inf)
    m = rate_matrix(rates)
    dim = 2 if rates.scheme is LevelScheme.TWO_LEVEL else 3
    a = np.vstack([m[:dim, :dim], np.ones(dim)])
    b = np.zeros(dim + 1)
    b[-1] = 1.0
    n, *_ = np.linalg.lstsq(a, b, rcond=None)
    n = np.append(n, 0.0) if dim == 2 else n
    return PopulationState(n1=n[0], n2=n[1], n3=n[2], t=math.inf)


def excited_steady_fraction(rates: RateSet) -> float:
    """Closed-form steady-state n2, exact for both schemes.

    1 / (1 + (r21 + r23)/r12 + r23/r31); the detected rate is
    eta * eta_qe * n2 * r21.
    """
    if rates.r12 == 0.0:
        return 0.0
    shelf = rates.r23 / rates.r31 if rates.r23 > 0.0 else 0.0
    return 1.0 / (1.0 + (rates.r21 + rates.r23) / rates.r12 + shelf)


def biexponential_parameters(rates: RateSet) -> tuple[float, float, float]:
    """Exact (lambda_fast, lambda_slow, amplitude) of the three-level g2.

    The decaying eigenvalues solve mu^2 - S*mu + P = 0 with
    S = r12+r21+r23+r31 and P = r31*(r12+r21+r23) + r12*r23; the
    eigen-structure makes n2(t) exactly biexponential, so
    g2(tau) = 1 - (1+a)exp(-mu1 tau) + a exp(-mu2 tau) with the
    amplitude fixed by n2(0) = 0 and dn2/dt(0) = r12.

    Raises when the discriminant is negative (population cycling, no
    real biexponential) or when r12 = 0 (no steady emission).
    """
    if rates.scheme is LevelScheme.TWO_LEVEL:
        raise ValueError("biexponential parameters require a three-level emitter")
    if rates.r12 == 0.0:
        raise ValueError("r12 = 0 has no normalizable g2")
    r12, r21, r23, r31 = rates.r12, rates.r21, rates.r23, rates.r31
    s = r12 + r21 + r23 + r31
    p = r31 * (r12 + r21 + r23) + r12 * r23
    disc = (r12 + r21 + r23 - r31) ** 2 - 4.0 * r12 * r23
    if disc < 0.0:
        raise ValueError("complex decay eigenvalues; no real biexponential form")
    root = math.sqrt(disc)
    mu1 = 0.5 * (s + root)
    mu2 = 0.5 * (s - root)
    n2_inf = excited_steady_fraction(rates)
    a = (r12 - mu1 * n2_inf) / (n2_inf * (mu1 - mu2))
    return mu1, mu2, a


def g2_oracle(tau, rates: RateSet):
    """Reference g2(tau) = n2(tau)/n2(inf) with the emitter starting in
    the ground state.

    Computed from the numeric eigendecomposition of the rate matrix;
    accepts scalar or array delays (ns, evaluated at |tau|).
    """
    if rates.r12 == 0.0:
        raise ValueError("r12 = 0 gives n2(inf) = 0; g2 undefined")
    scalar = np.isscalar(tau) or np.ndim(tau) == 0
    t = np.atleast_1d(np.abs(np.asarray(tau, dtype=float)))
    n2 = _propagated(rates, GROUND.as_array(), t)[1]
    n2_inf = steady_state(rates).n2
    out = n2 / n2_inf
    return float(out[0]) if scalar else out

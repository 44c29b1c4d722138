"""Liouville-Green construction of the decaying mode of m'' + b m' = a^2 m.

The substitution m = exp(-B/2) psi turns the damped equation into
psi'' = V psi with V = a^2 + b'/2 + b^2/4.  Both fundamental solutions are
integrated in exponentially rescaled form so nothing overflows:

* decaying:  psi_- = exp(-A) z,  z'' = 2a z' + (a' + V_*) z   (backward in t)
* growing:   psi_+ = exp(+A) z,  z'' = -2a z' + (V_* - a') z  (forward in t)

In both directions the unwanted mode is the contracting one, so the
integration is stable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .coefficients import CoefficientModel, ConditionResult, fit_decay_rate, tail_integrability

RTOL = 1e-11
ATOL = 1e-14


class WKBError(RuntimeError):
    """Raised when a computed mode changes sign or the integrator fails."""


@dataclass(frozen=True)
class PotentialSplit:
    """V = phi**2 + V_star with phi > 0 (here phi = a)."""

    phi: Callable
    phi1: Callable
    phi2: Callable
    V_star: Callable

    def V(self, t):
        return self.phi(t) ** 2 + self.V_star(t)

    def W(self, t):
        return error_weight(self, t)


def effective_potential(model: CoefficientModel) -> PotentialSplit:
    return PotentialSplit(
        phi=model.a,
        phi1=model.a1,
        phi2=model.a2,
        V_star=lambda t: 0.5 * model.b1(t) + 0.25 * model.b(t) ** 2,
    )


def error_weight(split: PotentialSplit, t):
    """-phi^{-1/2} (phi^{-1/2})'' + V_star / phi."""
    f, f1, f2 = split.phi(t), split.phi1(t), split.phi2(t)
    # (phi^{-1/2})'' = 3/4 phi^{-5/2} phi'^2 - 1/2 phi^{-3/2} phi''
    theta2 = 0.75 * f**-2.5 * f1**2 - 0.5 * f**-1.5 * f2
    return -(f**-0.5) * theta2 + split.V_star(t) / f


@dataclass
class AdmissibilityReport:
    conditions: list[ConditionResult]
    horizon: float
    tol: float

    @property
    def verdict(self) -> str:
        vs = [c.verdict for c in self.conditions]
        if "fail" in vs:
            return "fail"
        return "pass" if all(v == "pass" for v in vs) else "inconclusive"

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "horizon": self.horizon, "tol": self.tol,
                "conditions": [c.__dict__ for c in self.conditions]}


def check_admissibility(split: PotentialSplit, horizon: float = 100.0, tol: float = 0.05,
                        margin: float = 0.02) -> AdmissibilityReport:
    ts = np.linspace(0.0, 10.0 * horizon, 2001)
    fmin = float(np.min(split.phi(ts)))
    conds = [ConditionResult("phi_positive", "pass" if fmin > 0 else "fail", fmin)]

    k, _, rms = fit_decay_rate(split.phi, horizon, 10.0 * horizon)
    if k is None or not math.isfinite(k) or rms > 0.25:
        conds.append(ConditionResult("phi_not_L1", "inconclusive", math.nan, k))
    elif k < 1.0 - margin:
        conds.append(ConditionResult("phi_not_L1", "pass", k, k, "phi decays slower than 1/t"))
    elif k > 1.0 + margin:
        conds.append(ConditionResult("phi_not_L1", "fail", k, k, "phi is integrable"))
    else:
        conds.append(ConditionResult("phi_not_L1", "inconclusive", k, k, "borderline 1/t decay"))

    conds.append(tail_integrability(lambda t: error_weight(split, t), horizon, tol, "W_L1"))
    return AdmissibilityReport(conds, horizon, tol)


def anchor_error(split: PotentialSplit, T_big: float) -> float:
    """Estimate of int_{T_big}^inf |W|, the relative error of the anchor data."""
    res = tail_integrability(lambda t: error_weight(split, t), T_big, math.inf, "anchor")
    return res.value if res.verdict != "fail" else math.inf


def make_grid(t_end: float, n: int) -> np.ndarray:
    return np.linspace(0.0, float(t_end), int(n))


@dataclass
class ScaledMode:
    """A fundamental solution stored as psi = exp(sign_A * A) * z."""

    grid: np.ndarray
    z: np.ndarray
    dz: np.ndarray
    A: np.ndarray
    a: np.ndarray
    direction: int  # -1 decaying, +1 growing

    @property
    def psi(self) -> np.ndarray:
        return np.exp(self.direction * self.A) * self.z

    @property
    def dpsi(self) -> np.ndarray:
        return np.exp(self.direction * self.A) * (self.dz + self.direction * self.a * self.z)

    @property
    def log_abs_psi(self) -> np.ndarray:
        return self.direction * self.A + np.log(np.abs(self.z))

    @property
    def sign(self) -> np.ndarray:
        return np.sign(self.z)

    @property
    def lg_ratio(self) -> np.ndarray:
        """phi^{1/2} exp(-+Phi) psi, which tends to 1 at infinity."""
        return np.sqrt(self.a) * self.z


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3 or np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise ValueError("grid must be an increasing 1-D array of nonnegative times")
    return grid


def solve_decaying(model: CoefficientModel, T_big: float, grid) -> ScaledMode:
    """Decaying solution of psi'' = V psi, anchored at ``T_big``.

    Anchor data are the leading Liouville-Green values
    psi = a^{-1/2} e^{-A}, psi' = -a^{1/2} e^{-A}, i.e. z = a^{-1/2}, z' = 0.
    """
    grid = _check_grid(grid)
    if T_big < grid[-1]:
        raise ValueError("T_big must not precede the end of the grid")
    split = effective_potential(model)

    def rhs(t, y):
        z, dz = y
        return [dz, 2.0 * model.a(t) * dz + (model.a1(t) + split.V_star(t)) * z]

    y0 = [float(model.a(np.float64(T_big))) ** -0.5, 0.0]
    t_eval = grid[::-1]
    sol = solve_ivp(rhs, (float(T_big), float(grid[0])), y0, method="DOP853",
                    t_eval=t_eval, rtol=RTOL, atol=ATOL)
    if not sol.success:
        raise WKBError(f"backward integration failed: {sol.message}")
    z, dz = sol.y[0][::-1], sol.y[1][::-1]
    a = np.asarray(model.a(grid), dtype=float) * np.ones_like(grid)
    mode = ScaledMode(grid, z, dz, np.asarray(model.A(grid)), a, -1)
    if np.any(z <= 0) or np.any(dz - a * z >= 0):
        raise WKBError("decaying mode changed sign; increase T_big")
    return mode


def solve_growing(model: CoefficientModel, grid) -> ScaledMode:
    """Growing solution started from Liouville-Green data at t = grid[0]."""
    grid = _check_grid(grid)
    split = effective_potential(model)

    def rhs(t, y):
        z, dz = y
        return [dz, -2.0 * model.a(t) * dz + (split.V_star(t) - model.a1(t)) * z]

    t0 = float(grid[0])
    y0 = [float(model.a(np.float64(t0))) ** -0.5, 0.0]
    sol = solve_ivp(rhs, (t0, float(grid[-1])), y0, method="DOP853",
                    t_eval=grid, rtol=RTOL, atol=ATOL)
    if not sol.success:
        raise WKBError(f"forward integration failed: {sol.message}")
    a = np.asarray(model.a(grid), dtype=float) * np.ones_like(grid)
    A = np.asarray(model.A(grid)) - float(model.A(np.float64(t0)))
    return ScaledMode(grid, sol.y[0], sol.y[1], A, a, +1)


def wronskian(growing: ScaledMode, decaying: ScaledMode) -> np.ndarray:
    """psi_+' psi_- - psi_+ psi_-' evaluated without the exponential factors."""
    if not np.array_equal(growing.grid, decaying.grid):
        raise ValueError("modes must share a grid")
    zp, dzp, zm, dzm = growing.z, growing.dz, decaying.z, decaying.dz
    shift = np.exp(growing.A - decaying.A)
    return shift * (dzp * zm + 2.0 * growing.a * zp * zm - zp * dzm)


@dataclass
class MStarProfile:
    """Sampled m_* = kappa_* exp(-B/2) psi_- with its two-sided bound data.

    ``mu`` and ``nu`` hold exp(A) m_* and exp(A) m_*'; the unscaled arrays
    ``m`` and ``m_prime`` underflow gracefully to zero far out.
    """

    grid: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    A: np.ndarray
    a: np.ndarray
    kappa_star: float
    delta_star: float
    T_big: float
    residual: np.ndarray
    anchor_error: float
    _model: CoefficientModel = field(repr=False)
    _mu_spline: CubicHermiteSpline = field(init=False, repr=False)
    _dmu_spline: CubicHermiteSpline = field(init=False, repr=False)

    def __post_init__(self):
        t = self.grid
        md = self._model
        b = md.b(t) * np.ones_like(t)
        dmu = self.nu + self.a * self.mu
        d2mu = (2.0 * self.a - b) * dmu + (md.a1(t) + self.a * b) * self.mu
        self._mu_spline = CubicHermiteSpline(t, self.mu, dmu, extrapolate=False)
        self._dmu_spline = CubicHermiteSpline(t, dmu, d2mu, extrapolate=False)

    @property
    def m(self) -> np.ndarray:
        return np.exp(-self.A) * self.mu

    @property
    def m_prime(self) -> np.ndarray:
        return np.exp(-self.A) * self.nu

    @property
    def ratio(self) -> np.ndarray:
        """a^{1/2} e^{A} m_*, which tends to 1."""
        return np.sqrt(self.a) * self.mu

    @property
    def residual_sup(self) -> float:
        return float(np.max(np.abs(self.residual)))

    def scaled(self, t):
        """(e^{A} m_*, e^{A} m_*') at arbitrary t inside the grid."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.grid[0]) or np.any(t > self.grid[-1]):
            raise ValueError("t outside the m_* grid")
        mu = self._mu_spline(t)
        nu = self._dmu_spline(t) - self._model.a(t) * mu
        return mu, nu

    def __call__(self, t):
        """(m_*, m_*') at t."""
        mu, nu = self.scaled(t)
        eA = np.exp(-np.asarray(self._model.A(t)))
        return mu * eA, nu * eA

    def to_dict(self, stride: int = 1) -> dict:
        s = slice(None, None, stride)
        return {
            "T_big": self.T_big,
            "kappa_star": self.kappa_star,
            "delta_star": self.delta_star,
            "residual_sup": self.residual_sup,
            "anchor_error": self.anchor_error,
            "t": self.grid[s].tolist(),
            "m": self.m[s].tolist(),
            "m_prime": self.m_prime[s].tolist(),
            "ratio": self.ratio[s].tolist(),
        }


def build_m_star(model: CoefficientModel, T_big: float, grid) -> MStarProfile:
    """m_* and the empirical delta_* on a uniform grid ending at or before T_big."""
    grid = _check_grid(grid)
    if not np.allclose(np.diff(grid), grid[1] - grid[0], rtol=1e-9, atol=0):
        raise ValueError("build_m_star needs a uniform grid")
    psi = solve_decaying(model, T_big, grid)
    t = grid
    B = np.asarray(model.B(t)) * np.ones_like(t)
    b = model.b(t) * np.ones_like(t)
    kappa = math.exp(0.5 * model.B_infinity)
    damp = kappa * np.exp(-0.5 * B)
    mu = damp * psi.z
    nu = damp * (psi.dz - (psi.a + 0.5 * b) * psi.z)
    a = psi.a
    if np.any(mu <= 0) or np.any(nu >= 0):
        raise WKBError("m_* or m_*' changed sign")

    # residual of m'' + b m' - a^2 m in scaled form, second derivative by differences
    h = t[1] - t[0]
    dmu = nu + a * mu
    res = np.zeros_like(t)
    d2 = (mu[2:] - 2.0 * mu[1:-1] + mu[:-2]) / h**2
    inner = slice(1, -1)
    res[inner] = (d2 - (2.0 * a[inner] - b[inner]) * dmu[inner]
                  - (model.a1(t[inner]) + a[inner] * b[inner]) * mu[inner])
    res[inner] /= a[inner] ** 2 * mu[inner]

    r_m = np.sqrt(a) * mu
    r_mp = -nu / np.sqrt(a)
    delta = float(min(r_m.min(), (1 / r_m).min(), r_mp.min(), (1 / r_mp).min()))
    return MStarProfile(
        grid=t, mu=mu, nu=nu, A=psi.A, a=a, kappa_star=kappa, delta_star=delta,
        T_big=float(T_big), residual=res,
        anchor_error=anchor_error(effective_potential(model), T_big),
        _model=model,
    )

"""Test functions: the radial profile phi with Laplacian phi = phi, the time
cutoff psi_R, and the paired quantities Q_1 and Q_*.

phi(x) = int_{S^{N-1}} exp(omega . x) dS(omega) depends only on r = |x|.  It
equals (2 pi)^{N/2} r^{1-N/2} I_{N/2-1}(r), which gives a fast scaled
evaluator through ``scipy.special.ive``; the direct sphere integral is kept
as an independent route.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .coefficients import CoefficientModel


def sphere_area(N: int) -> float:
    """|S^{N-1}|, surface measure of the unit sphere in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


def _bessel_ratio_scaled(nu: float, r: np.ndarray) -> np.ndarray:
    """r^{-nu} I_nu(r) e^{-r}, with a short series near r = 0."""
    out = np.empty_like(r)
    small = r < 1e-4
    big = ~small
    rb = r[big]
    out[big] = special.ive(nu, rb) * rb ** (-nu)
    rs = r[small]
    x = (0.5 * rs) ** 2
    c0 = 2.0 ** (-nu) / math.gamma(nu + 1.0)
    series = c0 * (1.0 + x / (nu + 1.0) + x * x / (2.0 * (nu + 1.0) * (nu + 2.0)))
    out[small] = series * np.exp(-rs)
    return out


def phi_scaled(N: int, r) -> np.ndarray:
    """phi(r) * exp(-r)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    flat = np.atleast_1d(r).ravel()
    nu = N / 2.0 - 1.0
    vals = (2.0 * math.pi) ** (N / 2.0) * _bessel_ratio_scaled(nu, flat)
    return vals.reshape(r.shape) if r.ndim else vals[0]


def log_phi(N: int, r):
    return np.log(phi_scaled(N, r)) + np.asarray(r, dtype=float)


def phi(N: int, r):
    """phi(r); overflows to inf for r beyond ~700, use ``phi_scaled`` there."""
    with np.errstate(over="ignore"):
        return phi_scaled(N, r) * np.exp(np.asarray(r, dtype=float))


def phi_eval(N: int, r) -> tuple[float, float, float]:
    """(phi, log phi, phi e^{-r}) at a single radius."""
    sc = float(phi_scaled(N, r))
    return float(phi(N, r)), math.log(sc) + float(r), sc


def phi_quadrature(N: int, r: float) -> float:
    """phi(r) e^{-r} from the sphere integral itself.

    N = 1 reduces to 2 cosh r; otherwise the integral over S^{N-1} is written
    as |S^{N-2}| int_0^pi exp(r (cos t - 1)) sin^{N-2} t dt.
    """
    r = float(r)
    if N == 1:
        return 1.0 + math.exp(-2.0 * r)
    val, _ = integrate.quad(lambda th: math.exp(r * (math.cos(th) - 1.0)) * math.sin(th) ** (N - 2),
                            0.0, math.pi, epsabs=1e-14, epsrel=1e-13, limit=200)
    return sphere_area(N - 1) * val


def phi_laplacian_residual(N: int, r: float, h: float) -> float:
    """|Delta_h phi - phi| at r via second-order central differences."""
    if not r > h > 0:
        raise ValueError("need r > h > 0")
    pm, p0, pp = (float(phi(N, x)) for x in (r - h, r, r + h))
    lap = (pp - 2 * p0 + pm) / h**2 + (N - 1) * (pp - pm) / (2 * h * r)
    return abs(lap - p0)


# --- temporal cutoff ------------------------------------------------------

def _g(y):
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return np.where(y > 0, np.exp(-1.0 / np.where(y > 0, y, 1.0)), 0.0)


def _g_derivs(y):
    """g, g', g'' for g(y) = exp(-1/y) on y > 0 (zero otherwise)."""
    g = _g(y)
    ys = np.where(y > 0, y, 1.0)
    g1 = np.where(y > 0, g / ys**2, 0.0)
    g2 = np.where(y > 0, g * (1.0 / ys**4 - 2.0 / ys**3), 0.0)
    return g, g1, g2


def eta(x):
    """Smooth step: 1 on (-inf, 1/2], 0 on [1, inf), C^inf in between."""
    return eta_derivs(x)[0]


def eta_derivs(x):
    x = np.asarray(x, dtype=float)
    u, v = x - 0.5, 1.0 - x
    gu, gu1, gu2 = _g_derivs(u)
    gv, gv1, gv2 = _g_derivs(v)
    S = gu + gv
    inside = (x > 0.5) & (x < 1.0)
    Ss = np.where(inside, S, 1.0)
    e = np.where(x <= 0.5, 1.0, np.where(x >= 1.0, 0.0, gv / Ss))
    # d/dx g(v) = -g'(v), d^2/dx^2 g(v) = g''(v)
    G1p, G1pp = -gv1, gv2
    Sp, Spp = gu1 - gv1, gu2 + gv2
    e1 = np.where(inside, (G1p - e * Sp) / Ss, 0.0)
    e2 = np.where(inside, (G1pp - 2.0 * e1 * Sp - e * Spp) / Ss, 0.0)
    return e, e1, e2


@dataclass(frozen=True)
class CutoffPsi:
    """psi_R(t) = eta(B_*(t)/B_*(R))**(2p/(p-1))."""

    R: float
    p: float
    model: CoefficientModel

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if not self.R > 0:
            raise ValueError("R must be positive")

    @property
    def power(self) -> float:
        return 2.0 * self.p / (self.p - 1.0)

    def zeta_derivs(self, x):
        k = self.power
        e, e1, e2 = eta_derivs(x)
        z = e**k
        z1 = k * e ** (k - 1) * e1
        z2 = k * (k - 1) * e ** np.maximum(k - 2, 0.0) * e1**2 + k * e ** (k - 1) * e2
        return z, z1, z2

    def __call__(self, t):
        """(psi_R, psi_R' e^B, (psi_R' e^B)') at t."""
        t = np.asarray(t, dtype=float)
        bsR = float(self.model.B_star(self.R))
        x = np.asarray(self.model.B_star(t)) / bsR
        z, z1, z2 = self.zeta_derivs(x)
        eB = np.exp(-np.asarray(self.model.B(t)))
        return z, z1 / bsR, z2 * eB / bsR**2

    def derivative(self, t):
        """psi_R'(t) itself."""
        _, w, _ = self(t)
        return w * np.exp(-np.asarray(self.model.B(t)))


def cutoff_psi(cut: CutoffPsi, t):
    return cut(t)


@dataclass
class CutoffBoundResult:
    C: float
    C_first: float
    C_second: float
    C_refined: float
    diverging: bool


def verify_cutoff_bounds(cut: CutoffPsi, n: int = 4001) -> CutoffBoundResult:
    """Smallest C with |psi'e^B| <= C/R psi^{1/p} and |(psi'e^B)'| <= C/R^2 psi^{1/p}."""

    def fitted(m):
        t = np.linspace(0.0, cut.R, m)
        psi, w1, w2 = cut(t)
        pos = psi > 0
        base = psi[pos] ** (1.0 / cut.p)
        c1 = float(np.max(cut.R * np.abs(w1[pos]) / base))
        c2 = float(np.max(cut.R**2 * np.abs(w2[pos]) / base))
        return c1, c2

    c1, c2 = fitted(n)
    r1, r2 = fitted(2 * n - 1)
    C, Cr = max(c1, c2), max(r1, r2)
    return CutoffBoundResult(C=C, C_first=c1, C_second=c2, C_refined=Cr,
                             diverging=Cr > 1.01 * C)


# --- Yordanov-Zhang norm --------------------------------------------------

@dataclass
class YZPoint:
    t: float
    measured_log: float
    bound_log: float

    @property
    def log_ratio(self) -> float:
        return self.measured_log - self.bound_log

    @property
    def ratio(self) -> float:
        return math.exp(self.log_ratio)


def yz_norm_bound(N: int, p: float, r0: float, model: CoefficientModel, t: float) -> YZPoint:
    """log of ||phi||_{L^{p'}(B(0, r0 + A(t)))}^{p'} against its bound shape."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    pc = p / (p - 1.0)
    Rt = r0 + float(model.A(t))

    def integrand(r):
        return float(phi_scaled(N, r)) ** pc * math.exp(pc * (r - Rt)) * r ** (N - 1)

    val, _ = integrate.quad(integrand, 0.0, Rt, epsabs=0.0, epsrel=1e-10, limit=400)
    measured_log = math.log(sphere_area(N)) + pc * Rt + math.log(val)
    A = float(model.A(t))
    bound_log = (N - 1 - 0.5 * (N - 1) * pc) * math.log(1.0 + r0 + A) + pc * A
    return YZPoint(float(t), measured_log, bound_log)


# --- conserved quantities ---------------------------------------------------

def radial_integral(N: int, r: np.ndarray, f: np.ndarray) -> float:
    """|S^{N-1}| int f r^{N-1} dr by composite Simpson."""
    return sphere_area(N) * float(integrate.simpson(f * r ** (N - 1), x=r))


def q1(N: int, r, ut, model: CoefficientModel, t: float) -> float:
    """Q_1 = e^{B(t)} int u_t dx."""
    return math.exp(float(model.B(t))) * radial_integral(N, r, ut)


def q_star(N: int, r, u, ut, model: CoefficientModel, t: float, mstar, phi_sc=None) -> float:
    """Q_* = e^{B(t)} int (m_* u_t - m_*' u) phi dx, evaluated in scaled form."""
    mu, nu = mstar.scaled(t)
    if phi_sc is None:
        phi_sc = phi_scaled(N, r)
    A = float(model.A(t))
    with np.errstate(over="ignore"):
        weight = phi_sc * np.exp(r - A)
    integrand = (float(mu) * ut - float(nu) * u) * weight
    return math.exp(float(model.B(t))) * radial_integral(N, r, integrand)

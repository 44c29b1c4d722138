"""Closed-form exponent algebra for the blowup regime.

All functions are pure.  Unbounded exponents are returned as ``math.inf``;
:func:`jsonable` turns them into the string ``"inf"`` for persisted output.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

INF = math.inf
# gamma below this is treated as the critical case (no lifespan bound)
CRITICAL_TOL = 1e-12


def _positive_root(lin: float, quad: float) -> float:
    """Positive root of 2 + lin*p - quad*p**2 for quad > 0.

    Uses the cancellation-free branch of the quadratic formula.
    """
    disc = math.sqrt(lin * lin + 8.0 * quad)
    if lin >= 0:
        return (lin + disc) / (2.0 * quad)
    return 4.0 / (disc - lin)


def gamma_strauss(nu: float, p: float) -> float:
    return 2.0 + (nu + 1.0) * p - (nu - 1.0) * p * p


def p_strauss(nu: float) -> float:
    if nu < 1:
        raise ValueError("nu must be >= 1")
    if nu == 1:
        return INF
    return _positive_root(nu + 1.0, nu - 1.0)


def _hwy_coeffs(nu: float, alpha: float) -> tuple[float, float]:
    r = alpha / (1.0 + alpha)
    return nu + 1.0 - 3.0 * r, nu - 1.0 + r


def gamma_hwy(nu: float, alpha: float, p: float) -> float:
    lin, quad = _hwy_coeffs(nu, alpha)
    return 2.0 + lin * p - quad * p * p


def p_hwy(nu: float, alpha: float) -> float:
    """sup{p > 1 : gamma(nu, alpha; p) > 0}."""
    if nu < 1 or alpha <= -1:
        raise ValueError("need nu >= 1 and alpha > -1")
    lin, quad = _hwy_coeffs(nu, alpha)
    if quad > 0:
        return _positive_root(lin, quad)
    if quad < 0:
        # convex with gamma(1) = 4/(1+alpha) > 0 and lin > 0: positive for all p > 1
        return INF
    return INF if lin >= 0 else -2.0 / lin


def p_fujita(nu: float) -> float:
    return 1.0 + 2.0 / nu


def p_kato(nu: float) -> float:
    return INF if nu == 1 else (nu + 1.0) / (nu - 1.0)


def lifespan_exponent(N: float, alpha: float, p: float) -> float | None:
    """Exponent e in T_eps <= C eps**(-e); None in the critical/supercritical case."""
    g = gamma_hwy(N, alpha, p)
    if g <= CRITICAL_TOL:
        return None
    return 2.0 * p * (p - 1.0) / ((1.0 + alpha) * g)


def critical_lifespan_log_exponent(p: float) -> float:
    """Exponent in the conjectured critical bound T <= exp(C eps**(-p(p-1)))."""
    return p * (p - 1.0)


def tw_condition(N: float, sigma: float, p: float) -> tuple[bool, bool]:
    """Earlier blowup conditions, for M_g > 0 and for M_g = 0 respectively."""
    return (p + 1.0 - N * sigma * (p - 1.0) > 0, 2.0 - N * sigma * (p - 1.0) > 0)


def estimate_sigma(model, horizon: float = 1e4, n: int = 64) -> float:
    """Growth rate of A(t) = int_0^t a.

    Returns the largest secant slope of log A against log t on a geometric
    grid over [horizon/10, horizon].  For a power-law speed this converges to
    1 + alpha much faster than the raw ratio log A / log t.
    """
    if horizon < 10:
        raise ValueError("horizon must be >= 10")
    ts = np.geomspace(horizon / 10.0, horizon, n)
    logA = np.log(np.asarray(model.A(ts), dtype=float))
    slopes = np.diff(logA) / np.diff(np.log(ts))
    return float(np.max(slopes))


@dataclass
class ExponentReport:
    nu: float
    alpha: float
    p: float
    mu: float
    sigma: float
    gamma: float
    gamma_strauss: float
    p_strauss: float
    gamma_hwy: float
    p_hwy: float
    p_fujita: float
    p_kato: float
    lifespan_exponent: float | None
    tw_condition: tuple[bool, bool]
    critical_lifespan_note: str | None = None

    def to_dict(self) -> dict:
        return jsonable(asdict(self))


def exponent_report(nu: float, alpha: float, p: float, mu: float = 0.0,
                    sigma: float | None = None) -> ExponentReport:
    if nu < 1 or alpha <= -1 or p <= 1 or mu < 0:
        raise ValueError("need nu >= 1, alpha > -1, p > 1, mu >= 0")
    sigma = 1.0 + alpha if sigma is None else sigma
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    g = gamma_hwy(nu, alpha, p)
    note = None
    if abs(g) <= CRITICAL_TOL:
        note = (f"critical case; conjectural bound T_eps <= exp(C*eps^-{critical_lifespan_log_exponent(p):g}),"
                " informational only")
    return ExponentReport(
        nu=nu, alpha=alpha, p=p, mu=mu, sigma=sigma,
        gamma=g,
        gamma_strauss=gamma_strauss(nu, p),
        p_strauss=p_strauss(nu),
        gamma_hwy=g,
        p_hwy=p_hwy(nu, alpha),
        p_fujita=p_fujita(nu),
        p_kato=p_kato(nu),
        lifespan_exponent=lifespan_exponent(nu, alpha, p),
        tw_condition=tw_condition(nu, sigma, p),
        critical_lifespan_note=note,
    )


def jsonable(obj):
    """Recursively replace infinite floats by the string ``"inf"``."""
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        if math.isnan(f):
            return None
        return f
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    return obj

"""Coefficient pairs (a, b) and their cumulative integrals.

A model carries the propagation speed ``a`` and the damping ``b`` together
with the derivatives needed downstream (a', a'', b').  Three families are
supported: the power law ``a = (1+t)**alpha``, ``b = mu*(1+t)**(-beta)``, a
constant speed without damping, and custom tables with explicitly supplied
derivatives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline, PPoly

Fn = Callable[[np.ndarray], np.ndarray]

QUAD_TOL = 1e-10
T_CAP = 1e4


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


def _quad(fun, lo: float, hi: float, tol: float = QUAD_TOL) -> float:
    if hi <= lo:
        return 0.0
    val, err = integrate.quad(fun, lo, hi, epsabs=tol, epsrel=tol, limit=400)
    if err > max(100 * tol, 1e-8 * abs(val)):
        raise QuadratureError(f"quad on [{lo:g}, {hi:g}] did not converge", err)
    return float(val)


def _cumulative_quad(fun, t, tol: float = QUAD_TOL) -> np.ndarray:
    """Integral of ``fun`` from 0 to every entry of ``t``.

    Points are visited in sorted order so each panel is integrated once.
    """
    t = np.asarray(t, dtype=float)
    flat = t.ravel()
    order = np.argsort(flat, kind="stable")
    out = np.empty_like(flat)
    acc, prev = 0.0, 0.0
    for idx in order:
        ti = flat[idx]
        if ti < 0:
            raise ValueError("time must be nonnegative")
        acc += _quad(fun, prev, ti, tol)
        prev = ti
        out[idx] = acc
    return out.reshape(t.shape)


def _as_float_or_array(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


@dataclass(frozen=True)
class CumulativeIntegrals:
    """A(t) = int_0^t a,  B(t) = int_0^t b,  B_*(t) = int_0^t exp(-B)."""

    A_fn: Fn
    B_fn: Fn
    B_infinity: float
    b_star_fn: Fn
    tol: float = QUAD_TOL

    def A(self, t):
        return _as_float_or_array(self.A_fn(np.asarray(t, dtype=float)))

    def B(self, t):
        return _as_float_or_array(self.B_fn(np.asarray(t, dtype=float)))

    def B_star(self, t):
        return _as_float_or_array(self.b_star_fn(np.asarray(t, dtype=float)))


@dataclass(frozen=True)
class CoefficientModel:
    """Propagation speed ``a`` and damping ``b`` with analytic derivatives.

    ``a1``/``a2`` are a', a'' and ``b1`` is b'.  ``A_inverse`` is optional and
    only present for families with a closed-form inverse.
    """

    a: Fn
    a1: Fn
    a2: Fn
    b: Fn
    b1: Fn
    family: str = "custom"
    params: dict = field(default_factory=dict)
    t_max: float = math.inf
    A_closed: Fn | None = None
    B_closed: Fn | None = None
    A_inverse: Callable[[float], float] | None = None
    B_inf_closed: float | None = None
    envelope_K: float | None = None
    integrals: CumulativeIntegrals = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "integrals", _build_integrals(self))

    @property
    def model_id(self) -> str:
        if self.family == "power":
            p = self.params
            return f"power(alpha={p['alpha']:g},mu={p['mu']:g},beta={p['beta']:g})"
        if self.family == "constant":
            return f"constant(a={self.params.get('a0', 1.0):g})"
        return "custom"

    @property
    def damped(self) -> bool:
        return not (self.family == "constant" or self.params.get("mu", 1.0) == 0.0)

    def A(self, t):
        return self.integrals.A(t)

    def B(self, t):
        return self.integrals.B(t)

    def B_star(self, t):
        return self.integrals.B_star(t)

    @property
    def B_infinity(self) -> float:
        return self.integrals.B_infinity


def make_power_law(alpha: float, mu: float = 0.0, beta: float = 2.0) -> CoefficientModel:
    """a(t) = (1+t)**alpha, b(t) = mu*(1+t)**(-beta)."""
    if not alpha > -1:
        raise ValueError(f"alpha must exceed -1 (got {alpha}); A(t) would stay bounded")
    if not beta > 1:
        raise ValueError(f"beta must exceed 1 (got {beta}); b would not be integrable")
    if mu < 0:
        raise ValueError(f"mu must be nonnegative (got {mu})")
    al, mu, be = float(alpha), float(mu), float(beta)
    k = al + 1.0

    def A_closed(t):
        return np.expm1(k * np.log1p(t)) / k

    def A_inverse(s):
        return math.expm1(math.log1p(k * s) / k)

    def B_closed(t):
        if mu == 0.0:
            return np.zeros_like(t)
        return mu * np.expm1((1.0 - be) * np.log1p(t)) / (1.0 - be)

    return CoefficientModel(
        a=lambda t: (1.0 + t) ** al,
        a1=lambda t: al * (1.0 + t) ** (al - 1.0),
        a2=lambda t: al * (al - 1.0) * (1.0 + t) ** (al - 2.0),
        b=lambda t: mu * (1.0 + t) ** (-be),
        b1=lambda t: -mu * be * (1.0 + t) ** (-be - 1.0),
        family="power",
        params={"alpha": al, "mu": mu, "beta": be},
        A_closed=A_closed,
        B_closed=B_closed,
        A_inverse=A_inverse,
        B_inf_closed=mu / (be - 1.0),
        envelope_K=1.0,
    )


def make_constant(a0: float = 1.0) -> CoefficientModel:
    """Constant speed ``a0`` without damping."""
    if not a0 > 0:
        raise ValueError("a0 must be positive")
    a0 = float(a0)
    zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))  # noqa: E731
    return CoefficientModel(
        a=lambda t: np.full_like(np.asarray(t, dtype=float), a0),
        a1=zero,
        a2=zero,
        b=zero,
        b1=zero,
        family="constant",
        params={"a0": a0, "alpha": 0.0, "mu": 0.0, "beta": 2.0},
        A_closed=lambda t: a0 * t,
        B_closed=zero,
        A_inverse=lambda s: s / a0,
        B_inf_closed=0.0,
        envelope_K=max(a0, 1.0 / a0),
    )


def make_custom(t, a, a1, a2, b, b1) -> CoefficientModel:
    """Model from sampled tables; every derivative must be supplied.

    ``a`` is interpolated by a cubic Hermite spline using ``a1`` as slopes,
    ``a1`` likewise with ``a2``; ``a2`` and ``b1`` are piecewise linear.
    Evaluation outside the table raises.
    """
    t = np.asarray(t, dtype=float)
    arrs = [np.asarray(x, dtype=float) for x in (a, a1, a2, b, b1)]
    if t.ndim != 1 or t.size < 4 or any(x.shape != t.shape for x in arrs):
        raise ValueError("custom tables need matching 1-D arrays of length >= 4")
    if t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise ValueError("custom time table must start at 0 and increase strictly")
    a, a1, a2, b, b1 = arrs
    if np.any(a <= 0):
        raise ValueError("custom speed table must be positive")
    if np.any(b < 0):
        raise ValueError("custom damping table must be nonnegative")
    t_end = float(t[-1])

    a_sp = CubicHermiteSpline(t, a, a1, extrapolate=False)
    a1_sp = CubicHermiteSpline(t, a1, a2, extrapolate=False)
    b_sp = CubicHermiteSpline(t, b, b1, extrapolate=False)
    A_pp: PPoly = a_sp.antiderivative()
    B_pp: PPoly = b_sp.antiderivative()

    def guard(fn):
        def wrapped(x):
            x = np.asarray(x, dtype=float)
            if np.any(x < 0) or np.any(x > t_end * (1 + 1e-12)):
                raise ValueError(f"custom model evaluated outside its table [0, {t_end:g}]")
            return fn(np.minimum(x, t_end))
        return wrapped

    return CoefficientModel(
        a=guard(a_sp),
        a1=guard(a1_sp),
        a2=guard(lambda x: np.interp(x, t, a2)),
        b=guard(b_sp),
        b1=guard(lambda x: np.interp(x, t, b1)),
        family="custom",
        params={"t_end": t_end},
        t_max=t_end,
        A_closed=guard(A_pp),
        B_closed=guard(B_pp),
    )


def model_from_config(cfg: dict) -> CoefficientModel:
    """Build a model from the ``model`` section of an experiment config."""
    if "custom" in cfg:
        tab = cfg["custom"]
        return make_custom(tab["t"], tab["a"], tab["a1"], tab["a2"], tab["b"], tab["b1"])
    family = cfg.get("family", "power")
    if family == "power":
        return make_power_law(cfg.get("alpha", 0.0), cfg.get("mu", 0.0), cfg.get("beta", 2.0))
    if family == "constant":
        return make_constant(cfg.get("a0", 1.0))
    raise ValueError(f"unknown model family {family!r}")


def fit_decay_rate(fun, lo: float, hi: float, n: int = 24):
    """Least-squares exponent k with |fun(t)| ~ c * t**(-k) on [lo, hi].

    Returns (k, c, rms residual of the log fit); k is None when the samples
    vanish identically.
    """
    ts = np.geomspace(lo, hi, n)
    vals = np.abs(np.asarray(fun(ts), dtype=float))
    if np.all(vals < 1e-300):
        return None, 0.0, 0.0
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        return math.nan, math.nan, math.inf
    X = np.log(ts)
    Y = np.log(vals)
    slope, icpt = np.polyfit(X, Y, 1)
    rms = float(np.sqrt(np.mean((Y - (slope * X + icpt)) ** 2)))
    return float(-slope), float(math.exp(icpt)), rms


def _tail_extrapolate(start: float, decay_k: float, c: float) -> float:
    """Integral of c*t**(-k) from ``start`` to infinity (k > 1)."""
    return c * start ** (1.0 - decay_k) / (decay_k - 1.0)


def _build_integrals(model: CoefficientModel) -> CumulativeIntegrals:
    tol = QUAD_TOL
    if model.A_closed is not None:
        A_fn = model.A_closed
    else:  # pragma: no cover - every family currently has A in closed form
        A_fn = lambda t: _cumulative_quad(lambda r: float(model.a(np.float64(r))), t, tol)  # noqa: E731
    if model.B_closed is not None:
        B_fn = model.B_closed
    else:  # pragma: no cover
        B_fn = lambda t: _cumulative_quad(lambda r: float(model.b(np.float64(r))), t, tol)  # noqa: E731

    if model.B_inf_closed is not None:
        B_inf = float(model.B_inf_closed)
    else:
        B_inf = _estimate_B_infinity(model, B_fn)

    undamped = model.family == "constant" or (
        model.family == "power" and model.params.get("mu", 0.0) == 0.0
    )
    if undamped:
        b_star_fn = lambda t: np.array(t, dtype=float)  # noqa: E731
    else:
        def integrand(r):
            return math.exp(-float(B_fn(np.float64(r))))

        b_star_fn = lambda t: _cumulative_quad(integrand, t, tol)  # noqa: E731

    return CumulativeIntegrals(A_fn=A_fn, B_fn=B_fn, B_infinity=B_inf, b_star_fn=b_star_fn, tol=tol)


def _estimate_B_infinity(model: CoefficientModel, B_fn) -> float:
    """B(T_cap) plus a power-law extrapolation of the remaining tail."""
    t_cap = min(T_CAP, model.t_max)
    base = float(B_fn(np.float64(t_cap)))
    k, c, _ = fit_decay_rate(model.b, t_cap / 2, t_cap)
    if k is None:
        return base
    if not (k > 1.0):
        return math.inf
    return base + _tail_extrapolate(t_cap, k, c)


# --- assumption audit ----------------------------------------------------

def inv_a_d1(model, t):
    """d/dt (1/a)."""
    a = model.a(t)
    return -model.a1(t) / a**2


def inv_a_d2(model, t):
    """d^2/dt^2 (1/a)."""
    a, a1, a2 = model.a(t), model.a1(t), model.a2(t)
    return -a2 / a**2 + 2.0 * a1**2 / a**3


def inv_a_b_d1(model, t):
    """d/dt (b/a)."""
    a = model.a(t)
    return model.b1(t) / a - model.b(t) * model.a1(t) / a**2


def inv_sqrt_a_d1(model, t):
    """d/dt a**(-1/2)."""
    return -0.5 * model.a(t) ** -1.5 * model.a1(t)


@dataclass
class ConditionResult:
    name: str
    verdict: str
    value: float
    decay_rate: float | None = None
    detail: str = ""


@dataclass
class AssumptionReport:
    conditions: list[ConditionResult]
    horizon: float
    tol: float
    note: str = "tolerances are artifact choices; integrability is judged by decay-rate extrapolation"

    @property
    def verdicts(self) -> dict[str, str]:
        return {c.name: c.verdict for c in self.conditions}

    @property
    def all_pass(self) -> bool:
        return all(c.verdict == "pass" for c in self.conditions)

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "tol": self.tol,
            "note": self.note,
            "conditions": [c.__dict__ for c in self.conditions],
        }


def tail_integrability(fun, horizon: float, tol: float, name: str,
                       margin: float = 0.02) -> ConditionResult:
    """Judge whether int_horizon^inf |fun| is finite and below ``tol``.

    The panel [horizon, 10*horizon] is integrated by quadrature and the rest
    is extrapolated from the fitted decay exponent.  Exponents within
    ``margin`` of 1 (or below) count as non-integrable.
    """
    hi = 10.0 * horizon
    k, c, rms = fit_decay_rate(fun, horizon, hi)
    if k is None:
        return ConditionResult(name, "pass", 0.0, None, "integrand vanishes on the tail")
    if not math.isfinite(k) or rms > 0.25:
        return ConditionResult(name, "inconclusive", math.nan, k, "integrand not power-like on the tail")
    panel = _quad(lambda r: abs(float(fun(np.float64(r)))), horizon, hi, tol=min(1e-12, tol * 1e-3))
    if k <= 1.0 + margin:
        return ConditionResult(name, "fail", panel, k,
                               f"decay exponent {k:.4f} <= 1: tail grows with horizon")
    tail = panel + _tail_extrapolate(hi, k, abs(float(fun(np.float64(hi)))) * hi**k)
    verdict = "pass" if tail <= tol else "inconclusive"
    return ConditionResult(name, verdict, tail, k, "")


def check_assumptions(model: CoefficientModel, horizon: float = 100.0, tol: float = 0.05,
                      n_samples: int = 2001) -> AssumptionReport:
    """Evidential audit of positivity, integrability and limit conditions."""
    if not (horizon > 0 and tol > 0):
        raise ValueError("horizon and tol must be positive")
    ts = np.linspace(0.0, 10.0 * horizon, n_samples)
    out: list[ConditionResult] = []

    amin = float(np.min(model.a(ts)))
    out.append(ConditionResult("a_positive", "pass" if amin > 0 else "fail", amin))
    bmin = float(np.min(model.b(ts)))
    out.append(ConditionResult("b_nonnegative", "pass" if bmin >= 0 else "fail", bmin))

    out.append(tail_integrability(model.b, horizon, tol, "b_L1"))
    out.append(tail_integrability(lambda t: inv_a_d2(model, t), horizon, tol, "d2_inv_a_L1"))
    out.append(tail_integrability(lambda t: inv_a_b_d1(model, t), horizon, tol, "d_inv_a_b_L1"))
    out.append(tail_integrability(lambda t: inv_sqrt_a_d1(model, t) ** 2, horizon, tol,
                                  "d_inv_sqrt_a_L2"))

    for name, fn in (("lim_d_inv_a", lambda t: inv_a_d1(model, t)),
                     ("lim_b_over_a", lambda t: model.b(t) / model.a(t))):
        val = abs(float(fn(np.float64(horizon))))
        out.append(ConditionResult(name, "pass" if val <= tol else "fail", val))
    return AssumptionReport(out, horizon, tol)

"""Empirical audits of the test-function-method chain on computed runs.

Three checks:

* the pairing identity for psi(t) Phi(x, t), with Phi = m_*(t) phi(x) or
  Phi = 1, evaluated from recorded frames;
* the integrated bound eps M_g + int_0^R psi_R int |u|^p <= C R^{-(p+1)/(p-1)} (r0 + A(R))^N;
* both lifespan estimates at the measured blowup time, reported through the
  implied constants.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from .coefficients import CoefficientModel
from .exponents import jsonable
from .solver import InitialData, RunOutcome
from .testfn import CutoffPsi, phi_scaled, radial_integral
from .wkb import MStarProfile


class AuditError(ValueError):
    pass


@dataclass
class IdentityTrace:
    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray
    weight: str

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual)) if self.residual.size else 0.0


def _pairings(N, r, frame, model, mstar, weight, p, phi_sc):
    """(I1, I2, I0, Ip) = int u_t Phi, int u Phi_t, int u Phi, int |u|^p Phi."""
    u, ut, t = frame["u"], frame["ut"], frame["t"]
    if weight == "one":
        return (radial_integral(N, r, ut), 0.0, radial_integral(N, r, u),
                radial_integral(N, r, np.abs(u) ** p))
    mu, nu = (float(x) for x in mstar.scaled(t))
    # Phi = m_* phi = mu e^{-A} phi, handled as mu * phi_sc * e^{r - A}
    with np.errstate(over="ignore"):
        base = phi_sc * np.exp(r - float(model.A(t)))
    return (mu * radial_integral(N, r, ut * base), nu * radial_integral(N, r, u * base),
            mu * radial_integral(N, r, u * base), mu * radial_integral(N, r, np.abs(u) ** p * base))


def audit_identity(outcome: RunOutcome, model: CoefficientModel, psi: CutoffPsi, N: int,
                   mstar: MStarProfile | None = None, weight: str = "mstar",
                   min_frames: int = 5) -> IdentityTrace:
    """Both sides of the pairing identity along the recorded frames.

    The time derivative of psi Q_Phi - psi' e^B int u Phi is taken by
    second-order finite differences over the (possibly non-uniform) frame
    times.  The residual is |LHS - RHS| over the largest magnitude seen.
    """
    if weight not in ("mstar", "one"):
        raise AuditError("weight must be 'mstar' or 'one'")
    frames = outcome.frames
    if len(frames) < min_frames:
        raise AuditError(f"insufficient frame density: {len(frames)} frames")
    if weight == "mstar":
        mstar = mstar if mstar is not None else outcome.mstar
        if mstar is None:
            raise AuditError("m_* profile required for weight='mstar'")
    r = outcome.final_state.r
    p = psi.p
    phi_sc = phi_scaled(N, r) if weight == "mstar" else None
    t = np.array([f["t"] for f in frames])
    if np.any(np.diff(t) <= 0):
        raise AuditError("frame times must increase")
    vals = np.array([_pairings(N, r, f, model, mstar, weight, p, phi_sc) for f in frames])
    I1, I2, I0, Ip = vals.T
    ps, dps, ddps = psi(t)
    eB = np.exp(np.asarray(model.B(t), dtype=float))
    F = ps * eB * (I1 - I2) - dps * I0
    lhs = -np.gradient(F, t, edge_order=2)
    if outcome.nonlinear:
        lhs = lhs + ps * eB * Ip
    rhs = 2.0 * dps * I2 + ddps * I0
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))))
    res = np.abs(lhs - rhs) / scale if scale > 0 else np.zeros_like(lhs)
    return IdentityTrace(t, lhs, rhs, res, weight)


@dataclass
class InequalityAudit:
    R: list[float]
    lhs: list[float]
    rhs_shape: list[float]
    ratio: list[float]
    C: float
    spread: float
    stable: bool
    finite: bool
    identity_residuals: list[float] = field(default_factory=list)
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.finite and self.stable

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return jsonable(d)

    def csv_rows(self):
        yield "R,lhs,rhs_shape,ratio"
        for row in zip(self.R, self.lhs, self.rhs_shape, self.ratio):
            yield ",".join(repr(float(x)) for x in row)


def rhs_shape_tfm1(model: CoefficientModel, R: float, N: int, p: float, r0: float) -> float:
    return R ** (-(p + 1.0) / (p - 1.0)) * (r0 + float(model.A(R))) ** N


def audit_prop_tfm1(outcome: RunOutcome, model: CoefficientModel, R_list, data: InitialData,
                    N: int, p: float, stability: float = 0.2) -> InequalityAudit:
    """lhs(R) = eps M_g + int_0^R psi_R int |u|^p dx dt against its bound shape.

    C is the largest ratio; ``stable`` asks every ratio to lie within
    ``stability`` of the median ratio.
    """
    R_list = sorted(float(R) for R in R_list)
    if not R_list or R_list[0] <= 0:
        raise AuditError("R values must be positive")
    H = outcome.history
    t, Lp = H["t"], H["Lp"]
    if t[-1] < R_list[-1] * (1 - 1e-12):
        raise AuditError(f"run too short: covers t <= {t[-1]:g}, need {R_list[-1]:g}")
    if outcome.T_blowup is not None and R_list[-1] >= outcome.T_blowup:
        raise AuditError("R must stay below the blowup time")
    _, Mg = data.moments(N)
    lhs, shape = [], []
    for R in R_list:
        sel = t <= R
        tt, ll = t[sel], Lp[sel]
        if tt[-1] < R:
            tt = np.append(tt, R)
            ll = np.append(ll, np.interp(R, t, Lp))
        w = CutoffPsi(R, p, model)(tt)[0]
        lhs.append(data.eps * Mg + float(integrate.simpson(w * ll, x=tt)))
        shape.append(rhs_shape_tfm1(model, R, N, p, data.r0))
    ratio = [a / b for a, b in zip(lhs, shape)]
    med = float(np.median(ratio))
    spread = max(abs(x / med - 1.0) for x in ratio) if med > 0 else math.inf
    finite = all(math.isfinite(x) for x in lhs + shape) and med > 0
    return InequalityAudit(R=R_list, lhs=lhs, rhs_shape=shape, ratio=ratio, C=max(ratio),
                           spread=spread, stable=spread <= stability, finite=finite)


@dataclass
class TheoremReport:
    eps: float
    T: float
    log_rhs1: float
    log_rhs2: float
    weighted_integral: float
    C1: float
    C2: float

    def to_dict(self) -> dict:
        return jsonable(asdict(self))


def weighted_time_integral(model: CoefficientModel, T: float, N: int, p: float) -> float:
    """int_0^T a^{p'/2} (1 + A)^{N-1-(N-1)p'/2} dt."""
    pc = p / (p - 1.0)
    k = N - 1.0 - 0.5 * (N - 1.0) * pc

    def f(t):
        return float(model.a(t)) ** (0.5 * pc) * (1.0 + float(model.A(t))) ** k

    pts = np.unique(np.concatenate([[0.0], np.geomspace(1e-3, T, 24)])) if T > 1e-3 else np.array([0.0, T])
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-11, limit=200)
        total += val
    return total


def audit_theorem(outcome: RunOutcome, model: CoefficientModel, data: InitialData,
                  N: int, p: float) -> TheoremReport:
    """Implied constants of both lifespan estimates at T = measured blowup time."""
    if outcome.verdict != "blowup" or outcome.T_blowup is None:
        raise AuditError("audit_theorem needs a run with verdict=blowup")
    T = float(outcome.T_blowup)
    pc = p / (p - 1.0)
    Mf, Mg = data.moments(N)
    logA = math.log(float(model.A(T)))
    log_rhs1 = -(p + 1.0) / (p - 1.0) * math.log(T) + N * logA
    J = weighted_time_integral(model, T, N, p)
    log_rhs2 = (-(p * p + 1.0) / (p * (p - 1.0)) * math.log(T) + N / p * logA
                + math.log(J) / pc)
    eps = data.eps
    lhs1 = eps * Mg + eps**p * Mf**p
    return TheoremReport(eps=eps, T=T, log_rhs1=log_rhs1, log_rhs2=log_rhs2, weighted_integral=J,
                         C1=lhs1 * math.exp(-log_rhs1), C2=eps * math.exp(-log_rhs2))


def constant_spread(reports: list[TheoremReport], which: str = "C2") -> float:
    """max/min of the implied constant across a sweep."""
    vals = [getattr(r, which) for r in reports]
    return max(vals) / min(vals)


def identity_refinement_rate(residuals: list[float], hs: list[float]) -> float:
    """Least-squares order of max residual against h."""
    return float(np.polyfit(np.log(hs), np.log(residuals), 1)[0])

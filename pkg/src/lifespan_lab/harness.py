"""Experiment plumbing: config ingestion, lifespan sweeps and exponent fits."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .coefficients import CoefficientModel, model_from_config
from .exponents import jsonable, lifespan_exponent
from .solver import InitialData, SolverConfig, SolverConfigError, bump, _zero, run

RECORD_COLUMNS = ("eps", "verdict", "T_blowup", "h", "runtime_s", "model_id", "config_hash")
SECTIONS = ("model", "solver", "data", "sweep", "audits")


class ConfigError(ValueError):
    pass


class FitError(ValueError):
    pass


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    """Apply ``section.key=value`` overrides; values are parsed as JSON when possible."""
    out = json.loads(json.dumps(cfg))
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        path, raw = item.split("=", 1)
        section, key = path.split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        out.setdefault(section, {})[key] = val
    return out


def config_hash(cfg: dict) -> str:
    """Hash of the model, solver and data sections (eps excluded)."""
    core = {k: cfg.get(k, {}) for k in ("model", "solver", "data")}
    core["data"] = {k: v for k, v in core["data"].items() if k != "eps"}
    blob = json.dumps(core, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def build_model(cfg: dict) -> CoefficientModel:
    try:
        return model_from_config(cfg.get("model", {}))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad model section: {exc}") from exc


_PROFILES = {"bump": None, "zero": _zero}


def build_data(cfg: dict, eps: float | None = None) -> InitialData:
    d = cfg.get("data", {})
    r0 = float(d.get("r0", 1.0))
    eps = float(d.get("eps", 1.0) if eps is None else eps)

    def profile(name):
        if name not in _PROFILES:
            raise ConfigError(f"unknown profile {name!r} (use 'bump' or 'zero')")
        return bump(r0) if name == "bump" else _zero

    return InitialData(profile(d.get("f", "bump")), profile(d.get("g", "bump")), r0, eps)


def build_solver_config(cfg: dict) -> SolverConfig:
    s = dict(cfg.get("solver", {}))
    names = {f.name for f in dataclasses.fields(SolverConfig)}
    unknown = set(s) - names
    if unknown:
        raise ConfigError(f"unknown solver keys: {sorted(unknown)}")
    for key in ("N", "p", "h", "s_max"):
        if key not in s:
            raise ConfigError(f"solver.{key} is required")
    try:
        return SolverConfig(**s)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class SweepSpec:
    model: dict
    solver: dict
    data: dict
    eps: list[float]
    parallel: int = 1
    out_dir: str = "sweep_out"
    grid_check: bool = False

    @classmethod
    def from_config(cls, cfg: dict) -> "SweepSpec":
        sw = cfg.get("sweep", {})
        if "eps" in sw:
            eps = [float(e) for e in sw["eps"]]
        elif {"eps_max", "eps_min", "n"} <= set(sw):
            eps = [float(e) for e in np.geomspace(sw["eps_max"], sw["eps_min"], int(sw["n"]))]
        else:
            raise ConfigError("sweep needs 'eps' or 'eps_max', 'eps_min', 'n'")
        spec = cls(cfg.get("model", {}), cfg.get("solver", {}), cfg.get("data", {}), eps,
                   int(sw.get("parallel", 1)), str(sw.get("out_dir", "sweep_out")),
                   bool(cfg.get("audits", {}).get("grid_check", False)))
        spec.validate()
        return spec

    def validate(self) -> None:
        if not self.eps:
            raise ConfigError("empty eps list")
        if any(not e > 0 for e in self.eps):
            raise ConfigError("eps values must be positive")
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise ConfigError("eps list must be strictly decreasing")
        if self.parallel < 1:
            raise ConfigError("parallel must be >= 1")

    def as_config(self) -> dict:
        return {"model": self.model, "solver": self.solver, "data": self.data}


@dataclass
class ExperimentRecord:
    eps: float
    verdict: str
    T_blowup: float | None
    h: float
    runtime_s: float
    model_id: str
    config_hash: str
    T_blowup_half_h: float | None = None

    def row(self) -> list[str]:
        T = "" if self.T_blowup is None else repr(float(self.T_blowup))
        return [repr(float(self.eps)), self.verdict, T, repr(float(self.h)),
                f"{self.runtime_s:.3f}", self.model_id, self.config_hash]


def _run_one(args) -> ExperimentRecord:
    cfg, eps, grid_check = args
    model = build_model(cfg)
    scfg = build_solver_config(cfg)
    scfg.track_qstar = False
    data = build_data(cfg, eps)
    chash = config_hash(cfg)
    try:
        out = run(model, scfg, data)
        verdict, T, rt = out.verdict, out.T_blowup, out.runtime_s
    except (FloatingPointError, ArithmeticError):
        verdict, T, rt = "instability", None, 0.0
    except SolverConfigError as exc:
        raise ConfigError(str(exc)) from exc
    rec = ExperimentRecord(eps, verdict, T, scfg.h, rt, model.model_id, chash)
    if grid_check and verdict == "blowup":
        half = dataclasses.replace(scfg, h=scfg.h / 2.0)
        try:
            out2 = run(model, half, data)
            rec.T_blowup_half_h = out2.T_blowup
        except (FloatingPointError, ArithmeticError):
            rec.T_blowup_half_h = None
    return rec


def _append_row(path: Path, row: list[str]) -> None:
    with open(path, "a", newline="") as fh:
        csv.writer(fh).writerow(row)
        fh.flush()
        os.fsync(fh.fileno())


def lifespan_sweep(spec: SweepSpec, out_dir: str | os.PathLike | None = None) -> list[ExperimentRecord]:
    """Run the solver for each eps and append one CSV row per finished run.

    Rows are written in eps order whatever the parallelism degree, so the
    file content (runtime column aside) is deterministic.
    """
    spec.validate()
    out = Path(out_dir or spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "records.csv"
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerow(RECORD_COLUMNS)
    gpath = out / "grid_check.csv"
    if spec.grid_check:
        with open(gpath, "w", newline="") as fh:
            csv.writer(fh).writerow(["eps", "T_h", "T_h2", "rel_change"])
    cfg = spec.as_config()
    # validate once up front so config errors surface before any work
    build_model(cfg)
    build_solver_config(cfg).validate(build_data(cfg, spec.eps[0]).r0)
    jobs = [(cfg, e, spec.grid_check) for e in spec.eps]
    records = []

    def consume(it):
        for rec in it:
            records.append(rec)
            _append_row(path, rec.row())
            if spec.grid_check and rec.verdict == "blowup":
                T2 = rec.T_blowup_half_h
                rel = "" if T2 is None else repr(abs(T2 - rec.T_blowup) / rec.T_blowup)
                _append_row(gpath, [repr(rec.eps), repr(rec.T_blowup), "" if T2 is None else repr(T2), rel])

    if spec.parallel == 1:
        consume(map(_run_one, jobs))
    else:
        with ProcessPoolExecutor(max_workers=spec.parallel) as pool:
            consume(pool.map(_run_one, jobs))
    return records


def read_records(path) -> list[ExperimentRecord]:
    recs = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            T = row["T_blowup"]
            recs.append(ExperimentRecord(float(row["eps"]), row["verdict"], float(T) if T else None,
                                         float(row["h"]), float(row["runtime_s"]),
                                         row["model_id"], row["config_hash"]))
    return recs


@dataclass
class FitResult:
    slope: float
    stderr: float
    slope_corollary: float | None
    slope_thm1: float | None
    chosen: str
    deviation: float
    n_points: int
    window: list[float] = field(default_factory=list)
    curvature_trimmed: bool = False

    def to_dict(self) -> dict:
        return jsonable(asdict(self))


def _lstsq(x, y, deg):
    X = np.vander(x, deg + 1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    dof = len(x) - (deg + 1)
    if dof <= 0:
        return coef, np.full(deg + 1, math.nan)
    resid = y - X @ coef
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    return coef, np.sqrt(np.diag(cov))


def thm1_slope(N: float, alpha: float, p: float, g_positive: bool = True) -> float | None:
    """Slope of log T vs log eps implied by the first lifespan estimate.

    With A(T) ~ T^(1+alpha) the estimate reads eps^k <~ T^e, e = N(1+alpha) - (p+1)/(p-1),
    k = 1 when M_g > 0 and k = p otherwise; it bounds T only when e < 0.
    """
    e = N * (1.0 + alpha) - (p + 1.0) / (p - 1.0)
    if e >= -1e-12:
        return None
    return (1.0 if g_positive else p) / e


def fit_lifespan_exponent(records: list[ExperimentRecord], N: float, alpha: float, p: float,
                          g_positive: bool = True) -> FitResult:
    pts = sorted((r.eps, r.T_blowup) for r in records
                 if r.verdict == "blowup" and r.T_blowup is not None and r.T_blowup > 0)
    if len(pts) < 4:
        raise FitError(f"need at least 4 blowup records, have {len(pts)}")
    x = np.log([e for e, _ in pts])
    y = np.log([T for _, T in pts])
    trimmed = False
    if len(x) >= 5:
        c2, se2 = _lstsq(x, y, 2)
        if math.isfinite(se2[0]) and abs(c2[0]) > 2.0 * se2[0] and (len(x) + 1) // 2 >= 4:
            keep = (len(x) + 1) // 2  # the smallest-eps half (x sorted ascending)
            x, y = x[:keep], y[:keep]
            trimmed = True
    coef, se = _lstsq(x, y, 1)
    slope, stderr = float(coef[0]), float(se[0])
    le = lifespan_exponent(N, alpha, p)
    s_cor = -le if le is not None else None
    s_thm = thm1_slope(N, alpha, p, g_positive)
    cands = {k: v for k, v in (("corollary", s_cor), ("thm1", s_thm)) if v is not None}
    if cands:
        chosen = min(cands, key=lambda k: abs(slope - cands[k]))
        dev = abs(slope - cands[chosen]) / abs(cands[chosen])
    else:
        chosen, dev = "none", math.nan
    return FitResult(slope, stderr, s_cor, s_thm, chosen, dev, len(x),
                     [float(math.exp(v)) for v in x], trimmed)

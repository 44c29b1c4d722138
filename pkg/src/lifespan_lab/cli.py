"""Command line entry point: ``lifespan-lab <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .coefficients import QuadratureError, check_assumptions, make_power_law
from .exponents import exponent_report, jsonable
from .inequality import AuditError, audit_identity, audit_prop_tfm1, audit_theorem
from .solver import SolverConfigError, run
from .testfn import CutoffPsi, verify_cutoff_bounds, yz_norm_bound
from .wkb import WKBError, build_m_star, check_admissibility, effective_potential, make_grid

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
SERIES_COLUMNS = ("s", "t", "sup_u", "support_r", "Q1", "Qstar", "mass")


def _dump(obj, path: Path | None = None) -> None:
    text = json.dumps(jsonable(obj), indent=2, sort_keys=True)
    if path is None:
        print(text)
    else:
        path.write_text(text + "\n")


def _config(args) -> dict:
    cfg = harness.load_config(args.config) if getattr(args, "config", None) else {}
    return harness.apply_overrides(cfg, getattr(args, "set", None) or [])


def cmd_exponents(args) -> int:
    rep = exponent_report(args.nu, args.alpha, args.p, args.mu, args.sigma)
    _dump(rep.to_dict())
    return EXIT_OK


def cmd_wkb_verify(args) -> int:
    if args.config:
        model = harness.build_model(_config(args))
    else:
        model = make_power_law(args.alpha, args.mu, args.beta)
    T_big = args.T_big if args.T_big else max(2.0 * args.t_end, args.t_end + 10.0)
    prof = build_m_star(model, T_big, make_grid(args.t_end, args.n))
    tail = prof.grid >= 0.75 * args.t_end
    ratio = prof.ratio[tail]
    out = {
        "model_id": model.model_id,
        "assumptions": check_assumptions(model).to_dict(),
        "admissibility": check_admissibility(effective_potential(model)).to_dict(),
        "residual_sup": prof.residual_sup,
        "m_positive": bool(np.all(prof.mu > 0)),
        "m_prime_negative": bool(np.all(prof.nu < 0)),
        "ratio_final_quarter": [float(ratio.min()), float(ratio.max())],
        "kappa_star": prof.kappa_star,
        "delta_star": prof.delta_star,
        "anchor_error": prof.anchor_error,
    }
    if args.profile:
        with open(args.profile, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "m", "m_prime", "ratio", "residual"])
            for row in zip(prof.grid, prof.m, prof.m_prime, prof.ratio, prof.residual):
                w.writerow([repr(float(x)) for x in row])
    _dump(out)
    return EXIT_OK


def cmd_check_testfn(args) -> int:
    cfg = _config(args)
    model = harness.build_model(cfg) if cfg.get("model") else make_power_law(args.alpha, args.mu, args.beta)
    print("R,C,C_first,C_second,C_refined,diverging")
    for R in args.R:
        res = verify_cutoff_bounds(CutoffPsi(R, args.p, model))
        print(f"{R!r},{res.C!r},{res.C_first!r},{res.C_second!r},{res.C_refined!r},{res.diverging}")
    print()
    print("t,measured_log,bound_log,ratio")
    for t in np.linspace(args.t_max / args.n_t, args.t_max, args.n_t):
        pt = yz_norm_bound(args.N, args.p, args.r0, model, float(t))
        print(f"{pt.t!r},{pt.measured_log!r},{pt.bound_log!r},{pt.ratio!r}")
    return EXIT_OK


def _write_series(path: Path, hist: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SERIES_COLUMNS)
        for row in zip(*(hist[k] for k in SERIES_COLUMNS)):
            w.writerow([repr(float(x)) for x in row])


def cmd_simulate(args) -> int:
    cfg = _config(args)
    model = harness.build_model(cfg)
    scfg = harness.build_solver_config(cfg)
    data = harness.build_data(cfg)
    out = run(model, scfg, data, nonlinearity_on=not args.linear)
    odir = Path(args.out)
    odir.mkdir(parents=True, exist_ok=True)
    summary = out.summary()
    summary.update(model_id=model.model_id, config_hash=harness.config_hash(cfg), eps=data.eps)
    _dump(summary, odir / "outcome.json")
    _write_series(odir / "series.csv", out.history)
    _dump(summary)
    return EXIT_NUMERIC if out.verdict == "instability" else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    spec = harness.SweepSpec.from_config(cfg)
    odir = Path(args.out or spec.out_dir)
    recs = harness.lifespan_sweep(spec, odir)
    scfg = harness.build_solver_config(cfg)
    alpha = float(cfg.get("model", {}).get("alpha", 0.0))
    g_pos = cfg.get("data", {}).get("g", "bump") != "zero"
    try:
        fit = harness.fit_lifespan_exponent(recs, scfg.N, alpha, scfg.p, g_pos).to_dict()
    except harness.FitError as exc:
        fit = {"error": str(exc)}
    _dump(fit, odir / "fit.json")
    _dump({"records": len(recs), "blowups": sum(r.verdict == "blowup" for r in recs), "fit": fit})
    return EXIT_OK


def cmd_check_inequalities(args) -> int:
    cfg = _config(args)
    model = harness.build_model(cfg)
    scfg = harness.build_solver_config(cfg)
    data = harness.build_data(cfg)
    aud = cfg.get("audits", {})
    R_list = [float(R) for R in aud.get("R", [2, 4, 8, 16])]
    scfg.s_max = max(scfg.s_max, float(model.A(R_list[-1])) * 1.01)
    scfg.record_every = int(aud.get("record_every", 4))
    out = run(model, scfg, data)
    report = {"verdict": out.verdict, "T_blowup": out.T_blowup}
    try:
        prop = audit_prop_tfm1(out, model, R_list, data, scfg.N, scfg.p)
        report["prop_tfm1"] = prop.to_dict()
    except AuditError as exc:
        report["prop_tfm1"] = {"error": str(exc)}
        prop = None
    R_id = float(aud.get("identity_R", 4.0))
    id_cfg = harness.build_solver_config(cfg)
    id_cfg.s_max, id_cfg.record_every, id_cfg.keep_frames = float(model.A(R_id)), 1, True
    id_run = run(model, id_cfg, data)
    if id_run.T_blowup is None or id_run.T_blowup > R_id:
        tr = audit_identity(id_run, model, CutoffPsi(R_id, scfg.p, model), scfg.N)
        report["identity_max_residual"] = tr.max_residual
    if out.verdict == "blowup":
        report["theorem"] = audit_theorem(out, model, data, scfg.N, scfg.p).to_dict()
    odir = Path(args.out)
    odir.mkdir(parents=True, exist_ok=True)
    _dump(report, odir / "audit.json")
    if prop is not None:
        (odir / "audit.csv").write_text("\n".join(prop.csv_rows()) + "\n")
    _dump(report)
    return EXIT_OK


def cmd_fit(args) -> int:
    recs = harness.read_records(args.records)
    fit = harness.fit_lifespan_exponent(recs, args.N, args.alpha, args.p, not args.g_zero)
    _dump(fit.to_dict())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lifespan-lab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    def with_config(p):
        p.add_argument("--config", help="JSON config with model/solver/data/sweep/audits sections")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config entry (repeatable)")
        return p

    p = sub.add_parser("exponents", help="critical exponents and lifespan rate")
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=None)
    p.set_defaults(func=cmd_exponents)

    p = with_config(sub.add_parser("wkb-verify", help="build m_* and check its properties"))
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--t-end", type=float, default=30.0)
    p.add_argument("--n", type=int, default=12001)
    p.add_argument("--T-big", type=float, default=None)
    p.add_argument("--profile", help="write the sampled profile as CSV")
    p.set_defaults(func=cmd_wkb_verify)

    p = with_config(sub.add_parser("check-testfn", help="cutoff constants and phi norm trace (CSV)"))
    p.add_argument("--N", type=int, default=3)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--r0", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--R", type=float, nargs="+", default=[10.0, 100.0, 1000.0])
    p.add_argument("--t-max", type=float, default=50.0)
    p.add_argument("--n-t", type=int, default=25)
    p.set_defaults(func=cmd_check_testfn)

    p = with_config(sub.add_parser("simulate", help="single solver run"))
    p.add_argument("--out", default="run_out")
    p.add_argument("--linear", action="store_true", help="switch the nonlinearity off")
    p.set_defaults(func=cmd_simulate)

    p = with_config(sub.add_parser("sweep", help="lifespan sweep over eps plus exponent fit"))
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = with_config(sub.add_parser("check-inequalities", help="audit the test-function inequalities"))
    p.add_argument("--out", default="audit_out")
    p.set_defaults(func=cmd_check_inequalities)

    p = sub.add_parser("fit", help="fit log T against log eps from a records CSV")
    p.add_argument("--records", required=True)
    p.add_argument("--N", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--g-zero", action="store_true", help="data has M_g = 0")
    p.set_defaults(func=cmd_fit)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except (harness.ConfigError, SolverConfigError, harness.FitError, AuditError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WKBError, QuadratureError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

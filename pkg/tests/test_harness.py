from __future__ import annotations

import csv
import json
import math

import pytest

from lifespan_lab.harness import (
    ConfigError,
    ExperimentRecord,
    FitError,
    SweepSpec,
    apply_overrides,
    config_hash,
    fit_lifespan_exponent,
    lifespan_sweep,
    load_config,
    read_records,
    thm1_slope,
)

N1_CFG = {
    "model": {"family": "constant"},
    "solver": {"N": 1, "p": 2.0, "h": 0.0625, "s_max": 200.0, "record_every": 1000},
    "data": {"r0": 1.0},
    "sweep": {"eps_max": 0.1, "eps_min": 0.01, "n": 4},
}


def _rec(eps, T, verdict="blowup"):
    return ExperimentRecord(eps, verdict, T, 0.1, 0.0, "m", "h")


def test_fit_recovers_synthetic_power_law():
    recs = [_rec(e, 3.0 * e ** -0.5) for e in (0.1, 0.05, 0.02, 0.01, 0.005)]
    fit = fit_lifespan_exponent(recs, 1, 0.0, 2.0)
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.slope_corollary == pytest.approx(-2 / 3)
    assert fit.slope_thm1 == pytest.approx(-0.5)
    assert fit.chosen == "thm1" and fit.deviation < 1e-10


def test_fit_three_dim_first_estimate_degenerate():
    assert thm1_slope(3, 0.0, 2.0) is None
    recs = [_rec(e, e ** -2.1) for e in (1, 0.8, 0.6, 0.5)]
    fit = fit_lifespan_exponent(recs, 3, 0.0, 2.0)
    assert fit.chosen == "corollary" and fit.slope_corollary == -2.0
    assert fit.deviation == pytest.approx(0.05, abs=1e-9)


def test_fit_trims_curved_large_eps_half():
    eps = [0.5, 0.3, 0.2, 0.1, 0.05, 0.03, 0.02, 0.01]
    # steep curvature at large eps, clean power law at small eps
    recs = [_rec(e, e ** -0.5 * (1 + 20 * e**2)) for e in eps]
    fit = fit_lifespan_exponent(recs, 1, 0.0, 2.0)
    assert fit.curvature_trimmed and fit.n_points == 4
    assert max(fit.window) <= 0.05 + 1e-12


def test_fit_ignores_non_blowup_and_needs_four_points():
    recs = [_rec(e, e ** -0.5) for e in (0.1, 0.05, 0.02)] + [_rec(0.01, None, "survived")]
    with pytest.raises(FitError):
        fit_lifespan_exponent(recs, 1, 0.0, 2.0)
    with pytest.raises(FitError):
        fit_lifespan_exponent([_rec(0.1, None, "survived")] * 5, 1, 0.0, 2.0)


def test_thm1_slope_without_velocity_data_scales_by_p():
    assert thm1_slope(1, 0.0, 2.0, g_positive=False) == pytest.approx(-1.0)


@pytest.mark.parametrize("sweep", [{"eps": []}, {"eps": [0.1, 0.2]}, {"eps": [0.1, -0.1]}, {}])
def test_bad_sweep_specs(sweep):
    with pytest.raises(ConfigError):
        SweepSpec.from_config({**N1_CFG, "sweep": sweep})


def test_config_loading_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    extra = tmp_path / "extra.json"
    extra.write_text(json.dumps({"bogus": {}}))
    with pytest.raises(ConfigError):
        load_config(extra)


def test_overrides_and_hash():
    cfg = apply_overrides(N1_CFG, ["solver.h=0.125", "data.eps=0.2"])
    assert cfg["solver"]["h"] == 0.125 and N1_CFG["solver"]["h"] == 0.0625
    assert config_hash(cfg) != config_hash(N1_CFG)
    # eps does not enter the hash
    assert config_hash(apply_overrides(N1_CFG, ["data.eps=0.7"])) == config_hash(N1_CFG)
    with pytest.raises(ConfigError):
        apply_overrides(N1_CFG, ["nope"])


def _strip_runtime(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return [r[:4] + r[5:] for r in rows]


def test_sweep_writes_records_in_eps_order_and_is_deterministic(tmp_path):
    spec = SweepSpec.from_config(N1_CFG)
    recs = lifespan_sweep(spec, tmp_path / "a")
    lifespan_sweep(spec, tmp_path / "b")
    assert [r.verdict for r in recs] == ["blowup"] * 4
    Ts = [r.T_blowup for r in recs]
    assert all(b > a for a, b in zip(Ts, Ts[1:]))
    a, b = _strip_runtime(tmp_path / "a" / "records.csv"), _strip_runtime(tmp_path / "b" / "records.csv")
    assert a == b
    assert a[0] == ["eps", "verdict", "T_blowup", "h", "model_id", "config_hash"]
    back = read_records(tmp_path / "a" / "records.csv")
    assert [r.eps for r in back] == spec.eps


def test_parallel_sweep_matches_serial(tmp_path):
    cfg = {**N1_CFG, "sweep": {"eps": [0.1, 0.05], "parallel": 2}}
    lifespan_sweep(SweepSpec.from_config(cfg), tmp_path / "par")
    cfg["sweep"]["parallel"] = 1
    lifespan_sweep(SweepSpec.from_config(cfg), tmp_path / "ser")
    assert _strip_runtime(tmp_path / "par" / "records.csv") == _strip_runtime(tmp_path / "ser" / "records.csv")


def test_grid_check_side_file(tmp_path):
    cfg = {**N1_CFG, "sweep": {"eps": [0.1]}, "audits": {"grid_check": True}}
    recs = lifespan_sweep(SweepSpec.from_config(cfg), tmp_path)
    assert recs[0].T_blowup_half_h is not None
    rows = list(csv.DictReader(open(tmp_path / "grid_check.csv")))
    assert float(rows[0]["rel_change"]) < 0.05


def test_supercritical_sweep_does_not_mislabel(tmp_path):
    cfg = {
        "model": {"family": "constant"},
        "solver": {"N": 3, "p": 3.0, "h": 0.0625, "s_max": 40.0, "record_every": 1000},
        "data": {"r0": 1.0},
        "sweep": {"eps": [0.02, 0.01]},
    }
    recs = lifespan_sweep(SweepSpec.from_config(cfg), tmp_path)
    assert [r.verdict for r in recs] == ["survived", "survived"]
    assert all(r.T_blowup is None for r in recs)


def test_record_row_blank_for_missing_time():
    row = _rec(0.1, None, "survived").row()
    assert row[2] == "" and row[1] == "survived"
    assert math.isclose(float(_rec(0.1, 2.5).row()[2]), 2.5)

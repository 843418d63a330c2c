import dataclasses
import json
import math

import numpy as np
import pytest

from thimv import io as tio
from thimv.core import BeamformerParams
from thimv.errors import InvalidArgument
from thimv.pipeline import (
    BASELINES,
    SWEEP_COLUMNS,
    RunConfig,
    SweepPlan,
    case_label,
    compare_report,
    contrast_gains,
    params_from_row,
    round_half_up,
    run_single,
    run_sweep,
    simulate,
    standard_params,
)


def test_round_half_up():
    assert [round_half_up(x) for x in (8.33, 12.5, 37.5, 5.5, 10.67, 0.0)] == [8, 13, 38, 6, 11, 0]


def test_config_roundtrip(tmp_path):
    c = RunConfig(seed=2**63 + 5, snr_db="noiseless", bandpass=False, out=str(tmp_path))
    d = json.loads(json.dumps(c.to_dict()))
    assert RunConfig.from_dict(d) == c


@pytest.mark.parametrize(
    "bad",
    [
        {"phantom": "wires"},
        {"seed": -1},
        {"seed": 2**64},
        {"snr_db": "loud"},
        {"dynamic_range_db": 0},
        {"bandwidth": 1.5},
        {"rx_aperture": 200},
        {"depth_min": 0.1},
        {"bogus": 1},
        {"seed": "abc"},
    ],
)
def test_config_rejects(bad):
    with pytest.raises(InvalidArgument):
        RunConfig.from_dict(bad)


def test_standard_params_reference():
    p = standard_params(RunConfig())
    assert (p.method, p.K, p.L, p.delta_sub) == ("EIBMV", 25, 33, 0.5)
    assert p.delta_load == 1 / 3300


def test_default_plan():
    plan = SweepPlan.default()
    assert len(plan.cases) == 20
    assert len(plan.unique_params()) == 17
    fam = {f: [c.params for c in plan.cases if c.family == f] for f in ("K", "L", "loading", "delta")}
    assert [p.K for p in fam["K"]] == [0, 8, 13, 25, 50]
    assert [p.L for p in fam["L"]] == [1, 11, 22, 33, 66]
    assert [p.delta_load for p in fam["loading"]] == pytest.approx([0, 1 / 330000, 1 / 33000, 1 / 3300, 1 / 330])
    assert [p.delta_sub for p in fam["delta"]] == [0, 0.1, 0.5, 0.8, 1]
    std = plan.standard
    assert fam["K"][3] == fam["L"][3] == fam["loading"][3] == fam["delta"][2] == std
    for f, ps in fam.items():
        assert sum(p == std for p in ps) == 1
    assert sum(p == std for p in plan.unique_params()) == 1
    assert (plan.best.K, plan.best.L, plan.best.delta_load, plan.best.delta_sub) == (38, 22, std.delta_load, 0.5)


def test_plan_single_family_and_unknown():
    assert len(SweepPlan.default(families=("L",)).cases) == 5
    with pytest.raises(InvalidArgument):
        SweepPlan.default(families=("sigma",))


def test_case_labels_unique():
    plan = SweepPlan.default()
    params = plan.unique_params() + list(plan.baseline_params().values())
    labels = {case_label(p) for p in set(params)}
    assert len(labels) == len(set(params))


def test_simulate_writes_readable_rf(tiny_config, tmp_path):
    cfg = tiny_config.replace(out=str(tmp_path), phantom="points")
    sim = simulate(cfg, "points", tmp_path / "rf")
    files = sorted((tmp_path / "rf").glob("*.rf"))
    assert len(files) == 3 * cfg.n_scanlines
    back, header = tio.read_rf(tmp_path / "rf" / "harm_005.rf")
    np.testing.assert_allclose(back.data, sim.frames[5].data, rtol=1e-6, atol=1e-6 * np.abs(sim.frames[5].data).max())
    plus, _ = tio.read_rf(tmp_path / "rf" / "rf_005_pos.rf")
    assert plus.polarity == 1 and header["scanline_index"] == 5


def test_simulation_deterministic(tiny_config, tiny_sims):
    again = simulate(tiny_config, "points")
    assert all(np.array_equal(a.data, b.data) for a, b in zip(again.frames, tiny_sims["points"].frames))
    other = simulate(tiny_config.replace(seed=1), "points")
    assert not np.array_equal(other.frames[0].data, again.frames[0].data)


def test_run_single_das_points(tiny_config, tiny_sims, tmp_path):
    cfg = tiny_config.replace(out=str(tmp_path / "a"), phantom="points")
    das = BeamformerParams(method="DAS")
    res = run_single(cfg, das, sims=tiny_sims)
    assert len(res.report.fwhm_mm) == 9
    assert all(np.isfinite(res.report.fwhm_mm))
    d = res.directory
    for name in ("points.pgm", "points.dbmap", "metrics.csv", "config.resolved.json"):
        assert (d / name).exists()
    resolved = tio.read_json(d / "config.resolved.json")
    assert RunConfig.from_dict(resolved["config"]) == cfg
    assert BeamformerParams(**resolved["params"]) == das

    cfg_b = cfg.replace(out=str(tmp_path / "b"))
    res_b = run_single(cfg_b, das, sims=tiny_sims)
    for name in ("points.pgm", "points.dbmap", "metrics.csv"):
        assert (d / name).read_bytes() == (res_b.directory / name).read_bytes()


def test_eibmv_delta_zero_equals_mv_end_to_end(tiny_config, tiny_sims, tmp_path):
    std = standard_params(tiny_config)
    mv = run_single(tiny_config.replace(out=str(tmp_path / "mv")), dataclasses.replace(std, method="MV"), sims=tiny_sims)
    e0 = run_single(tiny_config.replace(out=str(tmp_path / "e0")), dataclasses.replace(std, delta_sub=0.0), sims=tiny_sims)
    assert mv.report == e0.report
    assert (mv.directory / "metrics.csv").read_bytes() == (e0.directory / "metrics.csv").read_bytes()
    assert np.array_equal(mv.images["cysts"].values, e0.images["cysts"].values)


def test_single_family_sweep(tiny_config, tiny_sims, tmp_path):
    cfg = tiny_config.replace(out=str(tmp_path))
    plan = SweepPlan.default(cfg, families=("delta",))
    res = run_sweep(cfg, plan, sims=tiny_sims, baselines=True)
    rows = tio.read_csv(tmp_path / "sweep.csv")
    assert list(rows[0].keys()) == list(SWEEP_COLUMNS)
    assert len(rows) == 5 and res.n_executions == 5
    for row, case in zip(rows, plan.cases):
        assert params_from_row(row) == case.params
    base = {r["case"]: r for r in tio.read_csv(tmp_path / "baselines.csv")}
    assert set(base) == set(BASELINES)
    assert params_from_row(base["DAS"]).method == "DAS"
    # delta = 0 row equals the MV baseline row in every metric field
    for k in ("mean_fwhm_mm", "mean_cr_db", "mean_cnr", "mean_radius_err_mm"):
        assert rows[0][k] == base["MV"][k]
    summary = tio.read_csv(tmp_path / "compare.csv")
    assert [r["baseline"] for r in summary] == ["DAS", "MV", "EIBMV_stan"]
    timing = tio.read_csv(tmp_path / "sweep_timing.csv")
    assert len(timing) == len({*plan.unique_params(), *plan.baseline_params().values()})


def _row(case, cr, cnr):
    return {"case": case, "mean_cr_db": repr(cr), "mean_cnr": repr(cnr)}


def test_compare_self_is_zero():
    best = _row("EIBMV_best", 17.3, 1.9)
    assert contrast_gains(best, best) == (0.0, 0.0)


def test_compare_hand_arithmetic():
    rows = [_row("DAS", 9.16, 1.70), _row("MV", 12.8, 2.28), _row("EIBMV_stan", 16.5, 1.64), _row("EIBMV_best", 16.88, 1.77)]
    out = compare_report(rows)
    for line, base in zip(out, rows[:3]):
        assert line[3] == pytest.approx(16.88 - float(base["mean_cr_db"]), abs=1e-12)
        assert line[6] == pytest.approx(100 * (1.77 - float(base["mean_cnr"])) / float(base["mean_cnr"]), abs=1e-12)
    assert [line[7] for line in out] == [10.6, 9.2, 0.4]
    assert [line[8] for line in out] == [78.0, 62.0, 32.0]


def test_compare_standard_from_sweep_and_missing():
    rows = [_row("DAS", 9.0, 1.0), _row("MV", 12.0, 2.0), _row("EIBMV_best", 16.0, 1.5)]
    out = compare_report(rows, [_row("K4", 15.0, 1.2)])
    assert out[2][2] == 15.0
    with pytest.raises(InvalidArgument, match="EIBMV_stan"):
        compare_report(rows)


def test_threads_validation(tiny_config):
    with pytest.raises(InvalidArgument):
        run_sweep(tiny_config, threads=0)

import json
import math

import numpy as np
import pytest

from sspdmatrix.chipmatrix import dump_chip_config, load_reference_chip
from sspdmatrix.circuit import RingResonator
from sspdmatrix.cli import main
from sspdmatrix.detector import BiasPoint, on_chip_efficiency
from sspdmatrix.experiments import ExperimentConfig, ExperimentError, run_experiment
from sspdmatrix.fit import FitError
from sspdmatrix.presets import EFFICIENCY_CELL, OVERCOUPLED_CELL

CSV_OUTPUTS = {
    "jitter": ["histogram.csv"],
    "ringdown": ["histogram.csv", "pulse_train.csv", "peaks.csv"],
    "efficiency_sweep": ["efficiency.csv"],
    "darkcount_sweep": ["darkcounts.csv"],
    "spectrum": ["spectrum.csv"],
    "survey": ["survey.csv"],
}
SMALL = {
    "jitter": dict(syncs=20_000, clicks_per_sync=0.2),
    "ringdown": dict(device=OVERCOUPLED_CELL, syncs=200_000, clicks_per_sync=0.05, chunk_syncs=70_000),
    "efficiency_sweep": dict(trials=20_000, biases=(0.5, 0.99), temperatures=(1.4,)),
    "darkcount_sweep": dict(dark_window_s=1.0, biases=(0.99,), temperatures=(1.4,)),
    "spectrum": dict(device=OVERCOUPLED_CELL, points=1501),
    "survey": dict(),
}


def run(tmp_path, name, experiment, seed=1, **kwargs):
    config = ExperimentConfig(experiment=experiment, seed=seed, out_dir=str(tmp_path / name), **kwargs)
    return run_experiment(config), tmp_path / name


@pytest.mark.parametrize("experiment", sorted(CSV_OUTPUTS))
def test_identical_seeds_give_identical_csv(tmp_path, experiment):
    _, a = run(tmp_path, "a", experiment, **SMALL[experiment])
    _, b = run(tmp_path, "b", experiment, **SMALL[experiment])
    for name in CSV_OUTPUTS[experiment]:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_different_seeds_differ(tmp_path):
    _, a = run(tmp_path, "a", "jitter", seed=1, **SMALL["jitter"])
    _, b = run(tmp_path, "b", "jitter", seed=2, **SMALL["jitter"])
    assert (a / "histogram.csv").read_bytes() != (b / "histogram.csv").read_bytes()


def test_report_lists_relative_files(tmp_path):
    report, out = run(tmp_path, "r", "jitter", **SMALL["jitter"])
    data = json.loads((out / "report.json").read_text())
    assert data["config"] == "config.json"
    for path in data["files"].values():
        assert not path.startswith("/") and (out / path).exists()
    assert ExperimentConfig.from_dict(json.loads((out / "config.json").read_text())).seed == 1
    assert report.files == data["files"]


def test_stochastic_experiments_need_seed():
    with pytest.raises(ValueError, match="seed"):
        ExperimentConfig(experiment="jitter")
    with pytest.raises(ValueError):
        ExperimentConfig(experiment="efficiency_sweep", seed=1, biases=(0.9, 0.5))
    ExperimentConfig(experiment="spectrum")


def test_instrument_jitter_adds_in_quadrature(tmp_path):
    report, _ = run(tmp_path, "j", "jitter", syncs=100_000, clicks_per_sync=0.25, instrument_jitter_ps=10.0)
    assert report.results["configured_fwhm_ps"] == pytest.approx(math.hypot(18.4, 10.0))
    assert report.results["fwhm_ps"] == pytest.approx(20.9, abs=0.5)


def test_zero_jitter_is_a_degenerate_fit(tmp_path):
    with pytest.raises(FitError):
        run(tmp_path, "z", "jitter", syncs=20_000, clicks_per_sync=0.2, jitter_fwhm_ps=0.0, pulse_offset_ps=100.5)


def test_too_few_counts_is_reported(tmp_path):
    with pytest.raises(ExperimentError, match="counts"):
        run(tmp_path, "few", "jitter", syncs=1000, clicks_per_sync=0.1)


def _chip_with_ring(tmp_path, ring):
    layout = load_reference_chip()
    layout = type(layout)(layout.designs, layout.couplers, layout.cells, {**layout.rings, "paper-overcoupled": ring},
                          layout.reference_couplers, layout.splitter, layout.rows, layout.columns, layout.name)
    path = tmp_path / "chip.json"
    dump_chip_config(layout, path)
    return str(path)


def test_vanishing_ring_gives_single_peak_error(tmp_path):
    ring = RingResonator(5.8, 3.7732499024137933, 1e-6, alpha=138.15510557964276)
    chip = _chip_with_ring(tmp_path, ring)
    with pytest.raises(ExperimentError, match="found 1 peak"):
        run(tmp_path, "one", "ringdown", chip=chip, device=OVERCOUPLED_CELL, syncs=100_000, clicks_per_sync=0.05)
    report = json.loads((tmp_path / "one" / "report.json").read_text())
    assert report["files"]["peaks"] == "peaks.csv"


def test_ringdown_without_ring_fails(tmp_path):
    with pytest.raises(ExperimentError, match="no ring"):
        run(tmp_path, "nr", "ringdown", device=(0, 0), syncs=1000)


def test_through_port_train_fits_tail(tmp_path):
    report, _ = run(tmp_path, "t", "ringdown", device=(11, 4), port="through", syncs=1_000_000, clicks_per_sync=0.02)
    assert report.results["n_peaks"] >= 3
    assert report.results["tau_ps"] == pytest.approx(38.0, abs=3.0)


def test_efficiency_sweep_tracks_model(tmp_path):
    report, out = run(tmp_path, "e", "efficiency_sweep", trials=200_000, biases=(0.05, 0.99), temperatures=(1.64,))
    lines = (out / "efficiency.csv").read_text().splitlines()
    assert lines[0].startswith("temperature_k,bias,ocde_model,ocde_mc,ocde_err")
    low, high = [list(map(float, line.split(",")[:5])) for line in lines[1:]]
    assert high[2] == pytest.approx(0.88, abs=1e-12)
    assert abs(high[3] - high[2]) <= 3 * high[4]
    assert low[2] < 1e-6 and abs(low[3]) <= 3 * low[4]
    assert report.results["max_abs_z"] <= 3.0


def test_efficiency_model_anchor_at_cell():
    handle_design = load_reference_chip().designs["w70-l80"]
    assert on_chip_efficiency(handle_design, BiasPoint(0.99, 1.64)) == pytest.approx(0.88, abs=1e-12)
    assert EFFICIENCY_CELL == (0, 15)


def test_darkcount_rate_and_error_scaling(tmp_path):
    kw = dict(biases=(0.99,), temperatures=(1.4,))
    _, one = run(tmp_path, "d1", "darkcount_sweep", dark_window_s=10.0, **kw)
    _, two = run(tmp_path, "d2", "darkcount_sweep", dark_window_s=20.0, **kw)
    rows = []
    for out in (one, two):
        header, line = (out / "darkcounts.csv").read_text().splitlines()
        rows.append(dict(zip(header.split(","), map(float, line.split(",")))))
    assert rows[0]["rate_model_hz"] == pytest.approx(450.0, rel=1e-12)
    assert rows[0]["rate_mc_hz"] == pytest.approx(450.0, abs=3 * math.sqrt(450.0 / 10))
    assert 0.9 <= rows[0]["dispersion"] <= 1.1
    rel = [r["rate_err_hz"] / r["rate_mc_hz"] for r in rows]
    assert rel[1] / rel[0] == pytest.approx(1 / math.sqrt(2), rel=0.02)


def test_darkcounts_refuse_light(tmp_path):
    with pytest.raises(ExperimentError):
        run(tmp_path, "dl", "darkcount_sweep", mean_photons=0.1)


def test_spectrum_reports_both_q_values(tmp_path):
    report, _ = run(tmp_path, "s", "spectrum", device=(11, 4))
    res = report.results
    assert res["fsr_nm"] == pytest.approx(res["fsr_analytic_nm"], rel=1e-3)
    # spectral linewidth Q exceeds the decay-time Q by the factor pinned in the circuit tests
    assert res["q_ratio"] == pytest.approx(2.112, abs=0.01)


def test_survey_empty_layout(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text(json.dumps({"designs": {}, "couplers": {}, "cells": []}))
    report, out = run(tmp_path, "sv", "survey", chip=str(path))
    assert report.warnings and (out / "survey.csv").read_text() == "row,col,width_nm,length_um,Ic_uA\n"


def test_survey_reference_chip(tmp_path):
    report, _ = run(tmp_path, "sv", "survey")
    assert report.results["rows"] == 228 and len(report.results["screened_out"]) == 12


# --- CLI ------------------------------------------------------------------------------------


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["jitter", "--out", str(tmp_path / "x")]) == 2
    assert main(["ringdown", "--seed", "1", "--device", "0,0", "--syncs", "1000", "--out", str(tmp_path / "y")]) == 1
    assert "no ring" in capsys.readouterr().err
    assert main(["survey", "--out", str(tmp_path / "z")]) == 0
    out = capsys.readouterr().out
    assert "report.json" in out


def test_cli_bad_chip_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"cells": [{"row": 12, "col": 0, "design": "x", "coupler": "y"}]}')
    assert main(["survey", "--chip", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "bad.json" in capsys.readouterr().err


def test_cli_no_plot_and_timestamp(tmp_path):
    args = ["jitter", "--seed", "3", "--syncs", "20000", "--clicks-per-sync", "0.2"]
    assert main(args + ["--no-plot", "--out", str(tmp_path / "np")]) == 0
    assert not list((tmp_path / "np").glob("*.svg"))
    assert main(args + ["--no-timestamp", "--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--no-timestamp", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "jitter.svg").read_bytes() == (tmp_path / "b" / "jitter.svg").read_bytes()


def test_cli_sweep_ranges(tmp_path):
    assert main(["efficiency", "--seed", "1", "--trials", "1000", "--biases", "0.5:0.9:3", "--temperatures", "1.4",
                 "--out", str(tmp_path / "e")]) == 0
    biases = [float(line.split(",")[1]) for line in (tmp_path / "e" / "efficiency.csv").read_text().splitlines()[1:]]
    np.testing.assert_allclose(biases, [0.5, 0.7, 0.9])


def test_cli_out_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SSPD_OUT_DIR", str(tmp_path / "env"))
    assert main(["spectrum", "--device", "11,3", "--no-plot"]) == 0
    assert (tmp_path / "env" / "spectrum.csv").exists()

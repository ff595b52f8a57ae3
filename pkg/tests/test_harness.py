import json

import jsonschema
import numpy as np
import pytest

from cfidd import cli, harness
from cfidd.errors import ConfigurationError

TINY = {
    "network": {"L": 4, "N": 2, "K": 2, "M": 1},
    "code": {"n": 96, "k": 48, "seed": 0},
    "tau_p": 6, "tau_u": 48, "trials": 4, "snr_grid_db": [0, 10],
    "modes": ["linear_icl_ocl", "modified_pic_icl_ocl"],
    "idd": {"idd_iterations": 2},
}


@pytest.fixture(scope="module")
def tiny_result():
    return harness.run_sweep(TINY)


def test_defaults_resolve_and_validate():
    cfg = harness.resolve_config()
    jsonschema.validate(cfg, harness.CONFIG_SCHEMA)
    assert cfg["network"] == {"L": 32, "N": 4, "K": 8, "M": 4, "D": 1.0, "pathloss_offset_db": -30.5,
                              "pathloss_exponent_coeff": 36.7, "shadow_std_db": 4.0,
                              "ocl_placement": "surrounding_ring"}
    assert (cfg["tau_p"], cfg["tau_u"], cfg["code"]["n"], cfg["code"]["k"]) == (10, 190, 512, 256)
    assert cfg["idd"]["decoder_iters"] == 10 and cfg["trials"] == 10000


@pytest.mark.parametrize("bad", [{"trials": 0}, {"snr_grid_db": []}, {"modulation": "bpsk"},
                                 {"unknown": 1}, {"network": {"K": 0}}, {"tau_p": 4}])
def test_invalid_configs(bad):
    with pytest.raises(ConfigurationError):
        harness.resolve_config(bad)


def test_overrides():
    cfg = harness.resolve_config({}, ["network.M=2", "modulation=qam16", "snr_grid_db=[1, 2]"])
    assert cfg["network"]["M"] == 2 and cfg["modulation"] == "qam16" and cfg["snr_grid_db"] == [1, 2]
    with pytest.raises(ConfigurationError):
        harness.resolve_config({}, ["novalue"])


def test_sweep_shape(tiny_result):
    assert len(tiny_result.rows) == 2 * 2 * 2
    for row in tiny_result.rows:
        assert 0 <= row.ber <= 1 and 0 <= row.fer <= 1
        assert row.ci_low <= row.ber <= row.ci_high
        assert row.trials == 4
    assert tiny_result.wall_time > 0


def test_sweep_is_deterministic(tiny_result):
    again = harness.run_sweep(TINY)
    assert harness.results_csv(again) == harness.results_csv(tiny_result)


def test_worker_count_does_not_change_results(tiny_result):
    parallel = harness.run_sweep(TINY, workers=2, chunk=1)
    assert harness.results_csv(parallel) == harness.results_csv(tiny_result)


def test_noiseless_interference_free_sweep_has_no_errors():
    cfg = dict(TINY, network={"L": 4, "N": 2, "K": 2, "M": 0}, trials=1, snr_grid_db=[150])
    res = harness.run_sweep(cfg)
    assert all(r.ber == 0 for r in res.rows)


def test_emit_and_parse_back(tmp_path, tiny_result):
    csv_path, json_path = harness.emit_results(tiny_result, tmp_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == ",".join(harness.CSV_HEADER)
    back = harness.read_results(csv_path)
    for a, b in zip(back.rows, tiny_result.rows):
        for key in harness.CSV_HEADER:
            va, vb = getattr(a, key), getattr(b, key)
            assert va == vb or (isinstance(va, float) and np.isnan(va) and np.isnan(vb))
    side = json.loads(json_path.read_text())
    jsonschema.validate(side["config"], harness.CONFIG_SCHEMA)
    assert side["master_seed"] == tiny_result.config["master_seed"]


def test_empty_sweep_header_only(tmp_path):
    csv_path, _ = harness.emit_results(harness.SweepResult(config=harness.resolve_config()), tmp_path)
    assert csv_path.read_text() == ",".join(harness.CSV_HEADER) + "\n"


def test_unwritable_output(tmp_path, tiny_result):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        harness.emit_results(tiny_result, blocker / "sub")


def test_confidence_interval_shrinks_with_trials():
    rng = np.random.default_rng(0)
    widths = []
    for n in (1000, 4000, 16000):
        errs = int((rng.random(n) < 0.1).sum())
        lo, hi = harness.binomial_ci(errs, n)
        widths.append(hi - lo)
    assert widths[0] / widths[1] == pytest.approx(2.0, rel=0.1)
    assert widths[1] / widths[2] == pytest.approx(2.0, rel=0.1)


def test_nmse_study_small():
    rows = harness.run_nmse({"network": {"L": 4, "N": 2, "K": 2, "M": 1}, "tau_p": 4,
                             "trials": 30, "snr_grid_db": [0, 20]})
    assert rows[1]["nmse_ch_db"] < rows[0]["nmse_ch_db"]


def test_ldpc_bench_small():
    rows = harness.ldpc_bench([1.0, 3.0], frames=50, n=96, k=48)
    assert rows[1]["ber"] <= rows[0]["ber"]


def test_cli_simulate(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(TINY))
    rc = cli.main(["simulate", "--config", str(cfg_path), "--override", "trials=2",
                   "--out", str(tmp_path / "out")])
    assert rc == 0
    assert (tmp_path / "out" / "sweep.csv").exists()
    assert (tmp_path / "out" / "sweep.json").exists()


def test_cli_config_error(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"trials": -1}))
    assert cli.main(["simulate", "--config", str(cfg_path)]) != 0
    assert "configuration error" in capsys.readouterr().err
    cfg_path.write_text("{not json")
    assert cli.main(["estimate-nmse", "--config", str(cfg_path)]) != 0


def test_cli_ldpc_bench(capsys):
    assert cli.main(["ldpc-bench", "--ebn0", "2", "--frames", "20", "-n", "96", "-k", "48"]) == 0
    assert capsys.readouterr().out.startswith("ebn0_db,ber")

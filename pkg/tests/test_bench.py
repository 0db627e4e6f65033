import csv
import io
import json

import numpy as np
import pytest

from avfce.bench import (
    REPORT_COLUMNS,
    SWEEP_COLUMNS,
    EvalReport,
    Harness,
    bench_latency,
    cell_seed,
    nfe_trend_checks,
)
from avfce.channels import make_dataset
from avfce.network import BackboneConfig, VelocityNet

GOLDEN_HEADER = "method,snr_db,nfe,nmse_db,latency_ms_median,latency_ms_p90,n_samples,seed\n"


@pytest.fixture(scope="module")
def harness():
    H = make_dataset("gaussian", 2000, 3, 4, 4).samples
    net = VelocityNet(BackboneConfig(hidden_planes=4))
    return Harness(H, {"avf": (net, "angular")}, seed=11)


def test_golden_csv_schema():
    r = EvalReport()
    r.add(method="ls", snr_db=10.0, nfe=1, nmse_db=-10.0123456, n_samples=5, seed=3)
    r.add(method="avf", snr_db=30.0, nfe=2, nmse_db=float("-inf"), latency_ms_median=0.5,
          latency_ms_p90=0.75, n_samples=100, seed=0)
    assert r.to_csv() == GOLDEN_HEADER + "ls,10,1,-10.0123,,,5,3\navf,30,2,-inf,0.5,0.75,100,0\n"
    assert tuple(REPORT_COLUMNS) == tuple(GOLDEN_HEADER.strip().split(","))


def test_json_mirrors_csv(harness):
    report = harness.evaluate([0, 10], [1, 2])
    doc = json.loads(report.to_json())
    rows = list(csv.DictReader(io.StringIO(report.to_csv())))
    assert doc["columns"] == list(REPORT_COLUMNS)
    assert len(rows) == len(doc["rows"])
    for c_row, j_row in zip(rows, doc["rows"]):
        for col in REPORT_COLUMNS:
            j = j_row[col]
            if j is None:
                assert c_row[col] == ""
            elif isinstance(j, str):
                assert c_row[col] == j
            else:
                assert float(c_row[col]) == j


def test_ls_rows_follow_snr(harness):
    report = harness.evaluate([-10, 0, 10, 20, 30], methods=["ls"])
    for row in report.rows:
        assert row["nmse_db"] == pytest.approx(-row["snr_db"], abs=0.2)


def test_nfe_only_applies_to_learned_methods(harness):
    report = harness.evaluate([10], [1, 2, 4])
    by_method = {}
    for row in report.rows:
        by_method.setdefault(row["method"], []).append(row["nfe"])
    assert by_method["ls"] == [1] and by_method["lmmse"] == [1] and by_method["lmmse-identity"] == [1]
    assert by_method["avf"] == [1, 2, 4]


def test_evaluate_is_deterministic(harness):
    assert harness.evaluate([0, 20], [1, 2]).to_csv() == harness.evaluate([0, 20], [1, 2]).to_csv()


def test_cells_draw_independent_noise():
    a = cell_seed(0, "ls", 10.0, 1).generate_state(2)
    assert not np.array_equal(a, cell_seed(0, "lmmse", 10.0, 1).generate_state(2))
    assert not np.array_equal(a, cell_seed(0, "ls", 10.0, 2).generate_state(2))
    assert not np.array_equal(a, cell_seed(1, "ls", 10.0, 1).generate_state(2))


def test_unknown_method_lists_valid_ones(harness):
    with pytest.raises(ValueError, match="valid methods: ls, lmmse, lmmse-identity, avf"):
        harness.evaluate([10], methods=["gmm"])


def test_min_samples_enforced():
    with pytest.raises(ValueError, match="at least 10"):
        Harness(np.zeros((3, 2, 2)), min_samples=10)


def test_lmmse_rows(harness):
    row = harness.evaluate([10], methods=["lmmse-identity"]).rows[0]
    assert row["nmse_db"] == pytest.approx(-10.41, abs=0.2)


def test_sweep_columns_and_zero_gain_at_one(harness):
    report = harness.sweep_nfe([-10, 30], [2, 4, 20])
    assert report.columns == SWEEP_COLUMNS
    assert [r["nfe"] for r in report.rows[:4]] == [1, 2, 4, 20]
    for r in report.rows:
        if r["nfe"] == 1:
            assert r["gain_db"] == 0.0
    # zero-init net: every NFE gives the LS answer on paired noise
    assert all(abs(r["gain_db"]) < 1e-9 for r in report.rows)
    assert {c["check"] for c in report.checks} == {"multi_step_refines_high_snr", "one_step_robust_low_snr"}
    assert all(c["passed"] for c in report.checks)
    assert "checks" in json.loads(report.to_json())


def test_trend_checks_flag_failures():
    r = EvalReport(columns=SWEEP_COLUMNS)
    for snr, nfe, nm in [(-10, 1, -1.0), (-10, 20, -3.0), (30, 1, -20.0), (30, 4, -19.0)]:
        r.add(method="m", snr_db=snr, nfe=nfe, nmse_db=nm, gain_db=0.0, n_samples=1, seed=0)
    checks = {c["check"]: c["passed"] for c in nfe_trend_checks(r, 0.2)}
    assert checks == {"multi_step_refines_high_snr": False, "one_step_robust_low_snr": False}


def test_latency_requires_repetitions():
    net = VelocityNet(BackboneConfig(hidden_planes=4))
    with pytest.raises(ValueError, match="repetitions"):
        bench_latency(net, 4, 4, repetitions=99)


def test_latency_rows():
    net = VelocityNet(BackboneConfig(hidden_planes=4))
    report = bench_latency(net, 4, 4, nfes=(1, 2), repetitions=100, end_to_end=True)
    assert [r["nfe"] for r in report.rows] == [1, 2]
    for r in report.rows:
        assert 0 < r["latency_ms_median"] <= r["latency_ms_p90"]
        assert r["n_samples"] == 100 and r["nmse_db"] is None


def test_latency_scales_linearly_with_nfe():
    net = VelocityNet(BackboneConfig(), seed=0)
    report = bench_latency(net, 16, 64, nfes=(1, 2, 4, 8), repetitions=100)
    base = report.lookup("avf", 10.0, 1)["latency_ms_median"]
    for k in (2, 4, 8):
        ratio = report.lookup("avf", 10.0, k)["latency_ms_median"] / base
        assert 0.8 * k <= ratio <= 1.3 * k, (k, ratio)

import numpy as np
import pytest

from src.processors.kpi import (
    PredictionRecord,
    acc_1db,
    design_guidelines,
    kpi_table_rows,
    mor,
    per_ue_throughput,
    percentiles,
    position_kpi_grid,
    rsrp_error,
    rsrp_error_cdf,
    sinr_linear,
    summarize,
    throughput_proxy,
    throughput_ratio,
    top_k_accuracy,
)
from src.schema.contracts import UseCase


def _record(top_k=(3, 1, 2), genie=3, served=None, genie_rsrp=-60.0, served_rsrp=None, ue=0, drop=0,
            throughput=50.0, position=(5.0, 5.0), policy="model"):
    served = top_k[0] if served is None else served
    return PredictionRecord(policy=policy, drop_id=drop, ue_id=ue, sector_id=0, t=0.08, predicted_top_k=tuple(top_k),
                            served_index=served, genie_index=genie, genie_rsrp_dbm=genie_rsrp,
                            predicted_rsrp_dbm=genie_rsrp if served_rsrp is None else served_rsrp,
                            genie_t=0.08, predicted_t=0.08, throughput_mbps=throughput, position=position)


@pytest.mark.parametrize("n_b,expected", [(8, 0.875), (16, 0.75), (32, 0.5)])
def test_mor_narrow_to_narrow(n_b, expected):
    assert mor(UseCase.SBP2, n_b, 64) == pytest.approx(expected)


@pytest.mark.parametrize("n_b,expected", [(32, 0.1667), (16, 0.5833), (8, 0.7917)])
def test_mor_temporal(n_b, expected):
    assert mor(UseCase.TBP, n_b, 32, l_o=5, l_p=1) == pytest.approx(expected, abs=1e-4)


def test_mor_wide_to_narrow_reuses_ssb_sweep():
    assert mor(UseCase.SBP1, 16, 64) == 1.0


def test_mor_rejects_oversized_set_b():
    with pytest.raises(ValueError):
        mor(UseCase.SBP2, 65, 64)


def test_top_k_accuracy_through_summary():
    records = [_record(), _record(top_k=(1, 3, 2), served_rsrp=-62.0), _record(top_k=(1, 2, 0), served_rsrp=-70.0)]
    kpi = summarize(records, "model", 0.75, k_max=3)
    assert kpi.top_k_accuracy[1] == pytest.approx(1 / 3)
    assert kpi.top_k_accuracy[2] == pytest.approx(2 / 3)
    assert kpi.top_k_accuracy[3] == pytest.approx(2 / 3)
    assert kpi.mor == 0.75
    assert kpi.n_records == 3
    assert kpi.mean_rsrp_error_db == pytest.approx(4.0)


def test_top_k_accuracy_never_decreases():
    rng = np.random.default_rng(0)
    records = [_record(top_k=tuple(rng.permutation(6)), genie=int(rng.integers(6))) for _ in range(50)]
    accuracies = list(summarize(records, "model", 0.0, k_max=6).top_k_accuracy.values())
    assert accuracies == sorted(accuracies)
    assert accuracies[-1] == 1.0


def test_acc_1db_is_strict():
    records = [_record(served_rsrp=-61.0), _record(served_rsrp=-60.5), _record()]
    assert acc_1db(records) == pytest.approx(2 / 3)


def test_rsrp_error_needs_same_instant():
    record = _record()
    assert rsrp_error(record) == 0.0
    shifted = PredictionRecord(**{**record.to_dict(), "predicted_t": 0.16})
    with pytest.raises(ValueError):
        rsrp_error(shifted)


def test_throughput_proxy():
    assert float(throughput_proxy(1.0, 80e6)) == pytest.approx(56.0)
    assert float(throughput_proxy(1.0, 80e6, n_coscheduled=2)) == pytest.approx(28.0)
    assert float(throughput_proxy(1e6, 80e6)) == pytest.approx(56.0 * 7.4)
    with pytest.raises(ValueError):
        throughput_proxy(-1.0, 80e6)


def test_sinr_linear():
    assert float(sinr_linear(-80.0, -90.0, -90.0)) == pytest.approx(5.0)


def test_percentiles():
    values = percentiles(np.arange(1, 101))
    assert values["p50"] == pytest.approx(50.5)
    assert set(values) == {"p5", "p50", "p95"}
    with pytest.raises(ValueError):
        percentiles([])


def test_per_ue_throughput_averages_each_ue():
    records = [_record(ue=0, throughput=10.0), _record(ue=0, throughput=30.0), _record(ue=1, throughput=5.0)]
    np.testing.assert_allclose(per_ue_throughput(records), [20.0, 5.0])


def test_rsrp_error_cdf():
    errors, cdf = rsrp_error_cdf([_record(served_rsrp=-63.0), _record(), _record(served_rsrp=-61.0)])
    np.testing.assert_allclose(errors, [0.0, 1.0, 3.0])
    np.testing.assert_allclose(cdf, [1 / 3, 2 / 3, 1.0])


def test_guidelines_and_ratio():
    model = summarize([_record(throughput=95.0)], "model", 0.75, 3)
    legacy = summarize([_record(throughput=100.0, policy="strongest-set-b")], "strongest-set-b", 0.75, 3)
    guidelines = design_guidelines([model, legacy])
    assert guidelines["p50"]["best_baseline"] == "strongest-set-b"
    assert guidelines["p50"]["recommended"]
    assert throughput_ratio(model, legacy)["p5"] == pytest.approx(0.95)
    with pytest.raises(ValueError):
        design_guidelines([legacy])


def test_position_grid():
    records = [_record(position=(5.0, 5.0)), _record(top_k=(1, 3, 2), position=(6.0, 4.0)),
               _record(top_k=(0, 1, 2), position=(45.0, 5.0))]
    rows = position_kpi_grid(records, bin_m=20.0)
    assert [(r["x_m"], r["y_m"]) for r in rows] == [(10.0, 10.0), (50.0, 10.0)]
    assert rows[0]["min_k_full_accuracy"] == 2
    assert rows[1]["min_k_full_accuracy"] is None


def test_kpi_table_rows():
    kpi = summarize([_record()], "model", 0.5, 2)
    rows = kpi_table_rows([kpi], "SBP2_16_64")
    metrics = {r["metric"] for r in rows}
    assert metrics == {"top_k_accuracy", "acc_1db", "mor", "rsrp_error_db", "throughput_mbps"}
    assert all(r["experiment"] == "SBP2_16_64" for r in rows)


def test_record_dict_round_trip():
    record = _record()
    assert PredictionRecord.from_dict(record.to_dict()) == record


def test_random_predictor_hits_at_chance():
    rng = np.random.default_rng(21)
    n, n_set_a = 10_000, 64
    records = [_record(top_k=tuple(int(b) for b in rng.permutation(n_set_a)), genie=int(rng.integers(n_set_a)))
               for _ in range(n)]
    for k in (1, 4):
        p = k / n_set_a
        sigma = np.sqrt(p * (1.0 - p) / n)
        assert abs(top_k_accuracy(records, k) - p) < 3.0 * sigma

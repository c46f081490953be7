import numpy as np
import pytest

from src.core.errors import ConfigError, SchemaMismatchError
from src.core.service import (
    BeamManagementService,
    MatrixCell,
    SectorMonitor,
    TbpBuffer,
    default_policies,
    monitor_and_fallback,
)
from src.processors.codebook import SetBPattern
from src.processors.kpi import PredictionRecord, rsrp_error
from src.processors.measurement import RsrpVector, build_report
from src.schema.contracts import ExperimentResultDocument, MonitorDecision, PatternMode, PolicyKind, UseCase

GENIE_ONLY = [PolicyKind.EXHAUSTIVE_GENIE]
BASELINES = [PolicyKind.STRONGEST_SET_B, PolicyKind.SAMPLE_AND_HOLD, PolicyKind.EXHAUSTIVE_GENIE]


def _report(t):
    pattern = SetBPattern(PatternMode.SUBSET, 4, (0, 1, 2, 3))
    return build_report(RsrpVector(np.array([-60.0, -70.0, -65.0, -80.0]), "csirs", t), pattern, 4)


def _shadow(error_db, t=0.0):
    return PredictionRecord(policy="model", drop_id=0, ue_id=0, sector_id=0, t=t, predicted_top_k=(1,),
                            served_index=1, genie_index=0, genie_rsrp_dbm=-60.0, predicted_rsrp_dbm=-60.0 - error_db,
                            genie_t=t, predicted_t=t)


@pytest.fixture
def service(repository):
    return BeamManagementService(repository=repository)


@pytest.fixture
def trained(service, small_config):
    dataset = service.run_data_collection(small_config)
    return service.train_model(small_config, dataset)


# ---------------------------------------------------
# Buffering and monitoring
# ---------------------------------------------------

def test_tbp_buffer_window_and_horizon():
    buffer = TbpBuffer(l_o=2, l_p=1)
    buffer.push("ue", _report(0.0))
    assert not buffer.ready("ue")
    with pytest.raises(ValueError):
        buffer.window("ue")
    buffer.push("ue", _report(0.08))
    buffer.push("ue", _report(0.16))
    assert [r.timestamp for r in buffer.window("ue")] == [0.08, 0.16]

    assert buffer.store("ue", made_at=2, prediction="p2") == 3
    assert buffer.due("ue", 2) is None
    assert buffer.due("ue", 3) == "p2"
    assert buffer.due("ue", 3) is None


def test_tbp_buffer_drops_stale_predictions():
    buffer = TbpBuffer(l_o=1, l_p=1)
    buffer.store("ue", 0, "old")
    buffer.store("ue", 1, "new")
    assert buffer.due("ue", 2) == "new"
    buffer.reset()
    assert buffer.due("ue", 3) is None


def test_tbp_buffer_arguments():
    with pytest.raises(ValueError):
        TbpBuffer(l_o=0, l_p=1)
    with pytest.raises(ValueError):
        TbpBuffer(l_o=1, l_p=-1)


def test_monitor_and_fallback_threshold():
    window = [_shadow(0.0)] * 3 + [_shadow(2.0)]
    assert monitor_and_fallback(window, 0.8) == MonitorDecision.FALLBACK_LEGACY
    assert monitor_and_fallback(window, 0.75) == MonitorDecision.KEEP_MODEL
    with pytest.raises(ValueError):
        monitor_and_fallback([], 0.8)


def test_sector_monitor_falls_back_and_recovers():
    monitor = SectorMonitor(sector_id=2, window=2, threshold=0.8)
    assert monitor.observe(_shadow(3.0, t=0.08)) is None
    event = monitor.observe(_shadow(3.0, t=0.16))
    assert event.decision == MonitorDecision.FALLBACK_LEGACY
    assert (event.sector_id, event.t, event.acc_1db) == (2, 0.16, 0.0)
    assert monitor.fallback
    assert monitor.observe(_shadow(0.0, t=0.24)) is None
    recovered = monitor.observe(_shadow(0.0, t=0.32))
    assert recovered.decision == MonitorDecision.KEEP_MODEL
    assert not monitor.fallback


# ---------------------------------------------------
# Policies and overhead
# ---------------------------------------------------

def test_default_policies():
    assert default_policies(UseCase.SBP2) == [PolicyKind.MODEL] + BASELINES
    assert default_policies(UseCase.SBP1, with_model=False) == GENIE_ONLY


def test_resolve_policies(small_config, sbp1_config):
    with pytest.raises(ConfigError):
        BeamManagementService.resolve_policies(small_config, [], has_weights=False)
    with pytest.raises(ConfigError):
        BeamManagementService.resolve_policies(sbp1_config, [PolicyKind.STRONGEST_SET_B], has_weights=False)
    assert BeamManagementService.resolve_policies(small_config, None, has_weights=False) == BASELINES


def test_policy_mor(small_config, tbp_config):
    mor = BeamManagementService.policy_mor
    assert mor(small_config, PolicyKind.MODEL) == pytest.approx(0.5)
    assert mor(small_config, PolicyKind.SAMPLE_AND_HOLD) == pytest.approx(0.5)
    assert mor(small_config, PolicyKind.EXHAUSTIVE_GENIE) == 0.0
    assert mor(tbp_config, PolicyKind.MODEL) == pytest.approx(1.0 - 2 * 4 / (3 * 8))
    assert mor(tbp_config, PolicyKind.SAMPLE_AND_HOLD) == pytest.approx(0.75)
    refined = small_config.replace(inference__refine_top_k=2)
    assert mor(refined, PolicyKind.MODEL) == pytest.approx(0.25)


# ---------------------------------------------------
# Campaigns
# ---------------------------------------------------

def test_genie_campaign_is_exact(service, small_config):
    run = service.run_campaign(small_config, policies=GENIE_ONLY)
    kpi = run.result.kpis[0]
    assert kpi.policy == "exhaustive-genie"
    assert kpi.top_k_accuracy[1] == 1.0
    assert kpi.acc_1db == 1.0
    assert kpi.mean_rsrp_error_db == 0.0
    assert kpi.mor == 0.0
    # SBP decisions start at the second instant
    assert run.result.sample_counts == {"exhaustive-genie": 6 * 7, "drops": 1}
    assert all(r.throughput_mbps >= 0 for r in run.records["exhaustive-genie"])


def test_baseline_campaign_is_deterministic(service, small_config):
    first = service.run_campaign(small_config, policies=BASELINES).result
    second = service.run_campaign(small_config, policies=BASELINES).result
    assert first.result_hash == second.result_hash
    assert first.stream_hash == second.stream_hash
    assert first.test_config_hash == second.test_config_hash
    assert [k.policy for k in first.kpis] == [p.value for p in BASELINES]


def test_baselines_never_beat_genie(service, small_config):
    run = service.run_campaign(small_config, policies=BASELINES)
    genie = {(r.ue_id, r.t): r.genie_rsrp_dbm for r in run.records["exhaustive-genie"]}
    for kind in ("strongest-set-b", "sample-and-hold"):
        for record in run.records[kind]:
            assert record.predicted_rsrp_dbm <= genie[(record.ue_id, record.t)]


def test_top1_share_equals_zero_error_share(service, small_config, trained):
    _, document = trained
    unmonitored = small_config.replace(monitoring__enabled=False)
    run = service.run_campaign(unmonitored, weights=document)
    for policy, records in run.records.items():
        kpi = next(k for k in run.result.kpis if k.policy == policy)
        exact = np.mean([rsrp_error(r) == 0.0 for r in records])
        assert kpi.top_k_accuracy[1] == pytest.approx(exact, abs=1e-12), policy


def test_temporal_campaign_counts(service, tbp_config):
    run = service.run_campaign(tbp_config, policies=BASELINES, name="tbp")
    assert run.result.name == "tbp"
    # windows complete at t = 1 and predictions target t + 1 <= 7
    assert run.result.sample_counts["strongest-set-b"] == 6 * 6
    assert run.result.kpis[-1].top_k_accuracy[1] == 1.0


def test_wide_to_narrow_genie_campaign(service, sbp1_config):
    run = service.run_campaign(sbp1_config)
    assert [k.policy for k in run.result.kpis] == ["exhaustive-genie"]


def test_model_policy_needs_weights(service, small_config):
    with pytest.raises(ConfigError):
        service.run_campaign(small_config, policies=[PolicyKind.MODEL])


def test_trained_model_campaign(service, small_config, trained, repository):
    predictor, document = trained
    assert predictor.config.hidden == 16
    assert "config_hash" in document.config
    run = service.run_campaign(small_config, weights=document)
    assert [k.policy for k in run.result.kpis] == [PolicyKind.MODEL.value] + [p.value for p in BASELINES]
    model = run.result.kpis[0]
    assert sorted(model.top_k_accuracy) == [1, 2, 3, 4]
    assert model.mor == pytest.approx(0.5)
    assert run.result.train_config_hash == document.config["config_hash"]

    written = service.write_campaign(run, "results")
    loaded = repository.read_json(written["result"], ExperimentResultDocument)
    assert loaded.result_hash == run.result.result_hash
    assert len(list(repository.read_jsonl(written["records"]))) == 4 * 6 * 7


def test_weights_reload_through_repository(service, small_config, trained):
    _, document = trained
    service.repository.write_json("weights.json", document)
    reloaded = service.load_weights("weights.json")
    first = service.run_campaign(small_config, weights=document, policies=[PolicyKind.MODEL]).result
    second = service.run_campaign(small_config, weights=reloaded, policies=[PolicyKind.MODEL]).result
    assert first.result_hash == second.result_hash


def test_monitoring_serves_legacy_after_fallback(service, small_config, trained):
    _, document = trained
    strict = small_config.replace(monitoring__threshold=1.0, monitoring__window=1)
    run = service.run_campaign(strict, weights=document, policies=[PolicyKind.MODEL])
    records = run.records["model"]
    if run.result.fallback_events:
        assert any(r.fallback for r in records)
        assert all(r.served_index == r.genie_index for r in records if r.fallback)
    assert all(e.decision in (MonitorDecision.FALLBACK_LEGACY, MonitorDecision.KEEP_MODEL)
               for e in run.result.fallback_events)


def test_training_rejects_other_dataset(service, small_config):
    dataset = service.run_data_collection(small_config)
    with pytest.raises(SchemaMismatchError):
        service.train_model(small_config.replace(codebook__set_b_size=2), dataset)


def test_weights_for_other_configuration(service, small_config, trained):
    _, document = trained
    with pytest.raises(SchemaMismatchError):
        service.run_campaign(small_config.replace(codebook__set_b_size=2), weights=document)


def test_data_collection_writes_dataset(service, small_config, repository):
    dataset = service.run_data_collection(small_config, "datasets/small.jsonl")
    loaded = service.load_dataset(repository.resolve("datasets/small.jsonl"), small_config)
    assert len(loaded) == len(dataset) == 6 * 8


def test_mixed_antenna_collection(service, small_config):
    mixed = small_config.replace(dataset__mixed_antenna_configs=[[2, 4], [2, 2]])
    dataset = service.run_data_collection(mixed)
    assert {s.meta.antenna_config for s in dataset.samples} == {"2x4", "2x2"}
    assert len({s.meta.drop_id for s in dataset.samples}) == 2


def test_export_drop(service, small_config, repository):
    written = service.export_drop(small_config, 3, "drops")
    assert set(written) == {"set_a", "ssb", "layout", "reports"}
    assert all(path.exists() for path in written.values())
    layout = repository.read_json(written["layout"])
    assert len(layout["sectors"]) == 3


# ---------------------------------------------------
# Experiment matrix
# ---------------------------------------------------

@pytest.mark.asyncio
async def test_empty_matrix(service):
    assert await service.run_experiment_matrix([]) == []
    with pytest.raises(ValueError):
        await service.run_experiment_matrix([], max_concurrency=0)


@pytest.mark.asyncio
async def test_failing_cell_does_not_stop_matrix(service, small_config):
    over_budget = small_config.replace(training__enforce_budget=True)
    cells = [MatrixCell("bad", over_budget), MatrixCell("genie", small_config, policies=(PolicyKind.EXHAUSTIVE_GENIE,))]
    bad, good = await service.run_experiment_matrix(cells, max_concurrency=2)
    assert bad.name == "bad" and bad.status == "failed"
    assert bad.error.startswith("ConfigError")
    assert good.status == "ok"
    assert good.kpis[0].top_k_accuracy[1] == 1.0


@pytest.mark.asyncio
async def test_matrix_trains_once_per_training_config(service, small_config):
    faster = small_config.replace(ue_speed_kmph=60.0)
    cells = [MatrixCell("base", small_config), MatrixCell("base@60kmph", small_config, faster)]
    results = await service.run_experiment_matrix(cells, max_concurrency=2)
    assert [r.status for r in results] == ["ok", "ok"]
    assert results[0].train_config_hash == results[1].train_config_hash
    assert results[0].test_config_hash != results[1].test_config_hash
    assert service.metrics.get_metrics()["counters"]["drops"] == small_config.dataset.n_drops

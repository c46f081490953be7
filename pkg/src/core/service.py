import asyncio
import time
from collections import deque
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Deque, Dict, Hashable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from database.repository import ArtifactRepository, dumps
from src.core.config import SimConfig, logger
from src.core.errors import ConfigError, SchemaMismatchError
from src.core.interfaces import ArtifactStoreInterface, BeamPolicyInterface, MetricsInterface
from src.models.networks import MAX_WEIGHTS_BYTES, BeamPredictor, model_config_for, weights_from_document, weights_to_document
from src.models.training import accuracy, train
from src.processors.baselines import ModelPolicy, Observation, exhaustive_genie, make_policy, rank_by_value
from src.processors.codebook import codebook_to_document
from src.processors.dataset import (
    Dataset,
    DatasetSchema,
    collect_samples,
    encode_input,
    load_dataset,
    save_dataset,
    split_dataset,
    trace_reports,
)
from src.processors.kpi import PredictionRecord, acc_1db, mor, sinr_linear, summarize, throughput_proxy
from src.processors.measurement import MeasurementReport
from src.processors.simulation import BeamContext, DropTrace, build_context, simulate_drop
from src.schema.contracts import (
    ExperimentResultDocument,
    FallbackEventModel,
    MonitorDecision,
    PolicyKind,
    Split,
    UseCase,
    WeightsDocument,
)
from src.utils.fingerprint import array_hash, config_hash, document_hash
from src.utils.metrics import RunMetrics

PathLike = Union[str, Path]
WeightsLike = Union[WeightsDocument, BeamPredictor]

# ---------------------------------------------------
# TBP buffering
# ---------------------------------------------------


class TbpBuffer:
    """
    Per-UE ring of the last ``l_o`` reports, plus predictions waiting for
    their target instant.

    A prediction made at instant t is consumed at t + l_p; older ones are
    dropped. SBP uses the degenerate buffer l_o = 1, l_p = 0.
    """

    def __init__(self, l_o: int, l_p: int):
        if l_o < 1 or l_p < 0:
            raise ValueError(f"Buffer needs l_o >= 1 and l_p >= 0, got ({l_o}, {l_p})")
        self.l_o = l_o
        self.l_p = l_p
        self._reports: Dict[Hashable, Deque[MeasurementReport]] = {}
        self._pending: Dict[Hashable, Deque[Tuple[int, Any]]] = {}

    def push(self, key: Hashable, report: MeasurementReport) -> None:
        self._reports.setdefault(key, deque(maxlen=self.l_o)).append(report)

    def ready(self, key: Hashable) -> bool:
        return len(self._reports.get(key, ())) == self.l_o

    def window(self, key: Hashable) -> List[MeasurementReport]:
        """Buffered reports, oldest first."""
        if not self.ready(key):
            raise ValueError(f"Buffer of {key} holds {len(self._reports.get(key, ()))} of {self.l_o} reports")
        return list(self._reports[key])

    def store(self, key: Hashable, made_at: int, prediction: Any) -> int:
        """Keep a prediction until its target instant, which is returned."""
        self._pending.setdefault(key, deque()).append((made_at, prediction))
        return made_at + self.l_p

    def due(self, key: Hashable, now: int) -> Optional[Any]:
        """The prediction targeting ``now``, if one was made l_p instants ago."""
        pending = self._pending.get(key)
        while pending and pending[0][0] + self.l_p < now:
            pending.popleft()
        if pending and pending[0][0] + self.l_p == now:
            return pending.popleft()[1]
        return None

    def reset(self) -> None:
        self._reports.clear()
        self._pending.clear()


# ---------------------------------------------------
# Monitoring
# ---------------------------------------------------

def monitor_and_fallback(window: Sequence[PredictionRecord], threshold: float) -> MonitorDecision:
    """Fall back to the legacy sweep iff the windowed 1 dB-margin accuracy is below ``threshold``."""
    if not window:
        raise ValueError("Monitoring window is empty")
    value = acc_1db(window)
    decision = MonitorDecision.FALLBACK_LEGACY if value < threshold else MonitorDecision.KEEP_MODEL
    logger.debug(f"Monitor: acc_1db={value:.3f} threshold={threshold} -> {decision.value}")
    return decision


class SectorMonitor:
    """Windowed model supervision of one sector; the model keeps predicting in shadow after a fallback."""

    def __init__(self, sector_id: int, window: int, threshold: float):
        self.sector_id = sector_id
        self.threshold = threshold
        self.records: Deque[PredictionRecord] = deque(maxlen=window)
        self.fallback = False

    def observe(self, shadow: PredictionRecord) -> Optional[FallbackEventModel]:
        self.records.append(shadow)
        if len(self.records) < self.records.maxlen:
            return None
        decision = monitor_and_fallback(self.records, self.threshold)
        fallback = decision == MonitorDecision.FALLBACK_LEGACY
        if fallback == self.fallback:
            return None
        self.fallback = fallback
        value = acc_1db(self.records)
        if fallback:
            logger.warning(f"Sector {self.sector_id}: acc_1db={value:.3f} < {self.threshold} at t={shadow.t:.2f}s, "
                           f"falling back to the legacy beam sweep")
        else:
            logger.info(f"Sector {self.sector_id}: acc_1db={value:.3f} recovered at t={shadow.t:.2f}s, "
                        f"re-activating the model")
        return FallbackEventModel(sector_id=self.sector_id, t=shadow.t, decision=decision, acc_1db=value)


# ---------------------------------------------------
# Results
# ---------------------------------------------------

@dataclass(eq=False)
class CampaignRun:
    result: ExperimentResultDocument
    records: Dict[str, List[PredictionRecord]] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class MatrixCell:
    """One experiment: weights trained on ``train``, evaluated on ``test`` (``train`` when omitted)."""

    name: str
    train: SimConfig
    test: Optional[SimConfig] = None
    policies: Optional[Tuple[PolicyKind, ...]] = None

    @property
    def test_config(self) -> SimConfig:
        return self.test or self.train

    @property
    def needs_model(self) -> bool:
        policies = self.policies if self.policies is not None else self.test_config.inference.policies
        return policies is None or PolicyKind.MODEL in policies


def dataset_hash(dataset: Dataset) -> str:
    inputs, labels = dataset.arrays()
    return array_hash([inputs, labels, np.array([s.value for s in dataset.splits])])


def default_policies(use_case: UseCase, with_model: bool = True) -> List[PolicyKind]:
    policies = [PolicyKind.MODEL] if with_model else []
    if use_case != UseCase.SBP1:
        policies += [PolicyKind.STRONGEST_SET_B, PolicyKind.SAMPLE_AND_HOLD]
    return policies + [PolicyKind.EXHAUSTIVE_GENIE]


# ---------------------------------------------------
# Main Service Class with Composition
# ---------------------------------------------------

class BeamManagementService:
    """Closed-loop beam management: collect, train, infer, monitor."""

    def __init__(self,
                 repository: Optional[ArtifactStoreInterface] = None,
                 metrics: Optional[MetricsInterface] = None):
        self.repository = repository or ArtifactRepository()
        self.metrics = metrics or RunMetrics()
        self._weights_cache: Dict[str, WeightsDocument] = {}
        self._weights_locks: Dict[str, asyncio.Lock] = {}

    @contextmanager
    def _stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.metrics.record_stage(name, time.perf_counter() - start)

    # ---- data collection --------------------------------------------------

    @staticmethod
    def collection_configs(config: SimConfig) -> List[SimConfig]:
        mixed = config.dataset.mixed_antenna_configs
        if not mixed:
            return [config]
        return [config.replace(antenna__gnb_m=m, antenna__gnb_n=n) for m, n in mixed]

    def run_data_collection(self, config: SimConfig, output: Optional[PathLike] = None) -> Dataset:
        """
        Simulate ``n_drops`` drops per antenna configuration and build a UE-split dataset.

        Args:
            config: Simulator configuration
            output: Dataset file to write, if any

        Returns:
            The split dataset
        """
        schema = DatasetSchema.from_config(config)
        n_drops = config.dataset.n_drops
        samples = []
        with self._stage("collect"):
            for i, cfg in enumerate(self.collection_configs(config)):
                context = build_context(cfg)
                for d in range(n_drops):
                    trace = simulate_drop(cfg, i * n_drops + d, context)
                    samples.extend(collect_samples([trace], cfg.use_case, context.pattern, schema.l_o, schema.l_p,
                                                   cfg.n_reported, cfg.dataset.input_scale_db))
                    self.metrics.increment("drops")
        dataset = split_dataset(samples, config.dataset.split_ratios, config.seeds.split, schema)
        self.metrics.increment("samples", len(dataset))
        logger.info(f"Dataset {dataset_hash(dataset)[:12]}: {len(dataset)} samples, "
                    f"splits {dataset.split_counts()}")
        if output is not None:
            save_dataset(dataset, output, self.repository)
        return dataset

    def load_dataset(self, path: PathLike, config: SimConfig) -> Dataset:
        return load_dataset(path, DatasetSchema.from_config(config), self.repository)

    # ---- training ---------------------------------------------------------

    def train_model(self, config: SimConfig, dataset: Dataset,
                    output: Optional[PathLike] = None) -> Tuple[BeamPredictor, WeightsDocument]:
        """
        Train the use case's network on ``dataset`` and package its weights.

        Raises:
            SchemaMismatchError: the dataset was built for another configuration
            ConfigError: the model exceeds its complexity or size budget
            NumericalError: training diverged
        """
        schema = DatasetSchema.from_config(config)
        if dataset.schema != schema:
            logger.error(f"Dataset schema {dataset.schema} does not match configuration {schema}")
            raise SchemaMismatchError(f"Dataset schema {dataset.schema} does not match configuration {schema}")
        hyper = config.training
        model_config = model_config_for(schema, hyper.hidden, hyper.enforce_budget)
        with self._stage("train"):
            predictor, _ = train(model_config, dataset, hyper, config.seeds.model)

        document = weights_to_document(predictor, extra_config={
            "config_hash": config_hash(config),
            "dataset_schema": schema.to_model().model_dump(mode="json"),
        })
        size = len(dumps(document))
        if size > MAX_WEIGHTS_BYTES:
            if hyper.enforce_budget:
                raise ConfigError(f"Serialized weights take {size} bytes, budget is {MAX_WEIGHTS_BYTES}")
            logger.warning(f"Serialized weights take {size} bytes, over the {MAX_WEIGHTS_BYTES} byte budget")

        x_test, y_test = dataset.arrays(Split.TEST)
        logger.info(f"✅ Trained {predictor!r}: {size} bytes, test Top-1 accuracy "
                    f"{accuracy(predictor, x_test, y_test):.3f} on {len(y_test)} samples")
        if output is not None:
            self.repository.write_json(output, document)
        return predictor, document

    def load_weights(self, path: PathLike) -> WeightsDocument:
        return self.repository.read_json(path, WeightsDocument)

    # ---- inference campaign -----------------------------------------------

    @staticmethod
    def resolve_policies(config: SimConfig, policies: Optional[Sequence[PolicyKind]],
                         has_weights: bool) -> List[PolicyKind]:
        if policies is None:
            policies = config.inference.policies
        if policies is None:
            policies = default_policies(config.use_case, has_weights)
        kinds = list(dict.fromkeys(PolicyKind(p) for p in policies))
        if not kinds:
            raise ConfigError("Policy list is empty")
        if config.use_case == UseCase.SBP1 and \
                {PolicyKind.STRONGEST_SET_B, PolicyKind.SAMPLE_AND_HOLD} & set(kinds):
            raise ConfigError("Set B baselines are undefined for wide-to-narrow prediction")
        return kinds

    @staticmethod
    def _predictor(weights: Optional[WeightsLike], schema: DatasetSchema) -> BeamPredictor:
        if weights is None:
            raise ConfigError("The model policy needs trained weights")
        if isinstance(weights, BeamPredictor):
            cfg = weights.config
            if (cfg.input_dim, cfg.output_dim) != (schema.input_dim, schema.n_set_a):
                raise SchemaMismatchError(f"Predictor {cfg.input_dim}->{cfg.output_dim} does not match schema {schema}")
            return weights
        return weights_from_document(weights, schema)

    @staticmethod
    def policy_mor(config: SimConfig, kind: PolicyKind) -> float:
        """Measurement overhead reduction of a policy, including second-round refinement."""
        use_case, n_b, n_a = config.use_case, config.n_set_b, config.n_set_a
        if kind == PolicyKind.EXHAUSTIVE_GENIE:
            return 0.0
        if kind == PolicyKind.MODEL:
            value = mor(use_case, n_b, n_a, config.l_o, config.l_p)
        elif kind == PolicyKind.SAMPLE_AND_HOLD and use_case == UseCase.TBP:
            value = mor(use_case, n_b, n_a, 1, config.l_p)
        else:
            value = mor(UseCase.SBP2, n_b, n_a)
        refine = config.inference.refine_top_k
        if refine:
            share = config.l_p / (config.l_o + config.l_p) if use_case == UseCase.TBP else 1.0
            value -= share * refine / n_a
        return value

    def _record(self, config: SimConfig, trace: DropTrace, kind: PolicyKind, u: int, t: int,
                ranking: np.ndarray, loads: Dict[int, int], fallback: bool = False) -> PredictionRecord:
        genie = trace.set_a_genie_dbm[u, t]
        genie_index = exhaustive_genie(genie)
        served = int(ranking[0])
        refine = config.inference.refine_top_k
        if refine and kind != PolicyKind.EXHAUSTIVE_GENIE and not fallback:
            candidates = np.asarray(ranking[:refine])
            served = int(candidates[np.argmax(trace.set_a_label_dbm[u, t, candidates])])

        rx = trace.best_rx[u, t, served]
        sinr = float(sinr_linear(trace.serving_rsrp_dbm[u, t, served], trace.interference_dbm[u, t, rx],
                                 trace.noise_dbm))
        sector = int(trace.serving_sector[u])
        link = config.link
        throughput = float(throughput_proxy(sinr, link.bandwidth_hz, link.overhead, loads[sector],
                                            link.max_spectral_efficiency))
        k_max = min(config.inference.k_max, len(genie))
        at = float(trace.times[t])
        return PredictionRecord(
            policy=kind.value, drop_id=trace.drop_id, ue_id=int(trace.ue_ids[u]), sector_id=sector, t=at,
            predicted_top_k=tuple(int(b) for b in ranking[:k_max]), served_index=served,
            genie_index=genie_index, genie_rsrp_dbm=float(genie[genie_index]),
            predicted_rsrp_dbm=float(genie[served]), genie_t=at, predicted_t=at,
            sinr_linear=sinr, throughput_mbps=throughput,
            position=(float(trace.positions[u, t, 0]), float(trace.positions[u, t, 1])), fallback=fallback,
        )

    def _evaluate_trace(self, config: SimConfig, context: BeamContext, trace: DropTrace,
                        policies: Dict[PolicyKind, BeamPolicyInterface],
                        records: Dict[str, List[PredictionRecord]]) -> List[FallbackEventModel]:
        """
        Run the per-instant loop on one drop: report, buffer, predict, serve, monitor.

        Every policy decides on the same reports; the model policy is
        batched over the UEs deciding at one instant.
        """
        use_case = config.use_case
        tbp = use_case == UseCase.TBP
        l_o, l_p = (config.l_o, config.l_p) if tbp else (1, 0)
        scale = config.dataset.input_scale_db
        reports = trace_reports(trace, context.pattern, config.n_reported, context.input_codebook.kind.value)
        loads = trace.sector_loads()
        buffer = TbpBuffer(l_o, l_p)
        model = policies.get(PolicyKind.MODEL)
        monitoring = config.monitoring.enabled and model is not None
        monitors: Dict[int, SectorMonitor] = {}
        events: List[FallbackEventModel] = []

        for t in range(trace.n_instants):
            decisions = []
            for u in range(trace.n_ues):
                buffer.push(u, reports[u][t])
                # SBP starts at t = 1 so sample-and-hold has a report to hold
                if not buffer.ready(u) or t + l_p >= trace.n_instants or (not tbp and t < 1):
                    continue
                held = reports[u][t] if tbp else reports[u][t - 1]
                decisions.append((u, held, encode_input(use_case, buffer.window(u), context.pattern, scale)))

            if decisions:
                model_ranks = model.rank_batch(np.stack([x for _, _, x in decisions])) \
                    if isinstance(model, ModelPolicy) else None
                for i, (u, held, x) in enumerate(decisions):
                    target = t + l_p
                    observation = Observation(current_report=reports[u][target], held_report=held, model_input=x,
                                              genie_dbm=trace.set_a_genie_dbm[u, target])
                    rankings = {kind: model_ranks[i] if kind == PolicyKind.MODEL else policy.rank(observation)
                                for kind, policy in policies.items()}
                    buffer.store(u, t, rankings)

            for u in range(trace.n_ues):
                rankings = buffer.due(u, t)
                if rankings is None:
                    continue
                for kind, ranking in rankings.items():
                    record = self._record(config, trace, kind, u, t, ranking, loads)
                    if kind == PolicyKind.MODEL and monitoring:
                        sector = int(trace.serving_sector[u])
                        monitor = monitors.setdefault(
                            sector, SectorMonitor(sector, config.monitoring.window, config.monitoring.threshold))
                        if monitor.fallback:
                            legacy = rank_by_value(trace.set_a_genie_dbm[u, t])
                            served = self._record(config, trace, kind, u, t, legacy, loads, fallback=True)
                        else:
                            served = record
                        event = monitor.observe(record)
                        if event is not None:
                            events.append(event)
                        record = served
                    records[kind.value].append(record)
        return events

    def run_campaign(self, config: SimConfig, weights: Optional[WeightsLike] = None,
                     policies: Optional[Sequence[PolicyKind]] = None, name: Optional[str] = None) -> CampaignRun:
        """
        Evaluate policies on ``n_eval_drops`` fresh drops and keep the raw prediction records.

        Raises:
            ConfigError: empty policy list, or a model policy without weights
            SchemaMismatchError: weights built for another configuration
        """
        kinds = self.resolve_policies(config, policies, weights is not None)
        schema = DatasetSchema.from_config(config)
        predictor = self._predictor(weights, schema) if PolicyKind.MODEL in kinds else None
        policy_map = {kind: make_policy(kind, predictor) for kind in kinds}
        name = name or f"{config.use_case.value.upper()}_{config.n_set_b}_{config.n_set_a}"
        run_metrics = RunMetrics()
        context = build_context(config)
        records: Dict[str, List[PredictionRecord]] = {kind.value: [] for kind in kinds}
        events: List[FallbackEventModel] = []
        stream: List[np.ndarray] = []

        logger.info(f"Campaign {name}: {[k.value for k in kinds]} on {config.inference.n_eval_drops} drops")
        with self._stage("evaluate"):
            for d in range(config.inference.n_eval_drops):
                with run_metrics.stage("simulate"):
                    trace = simulate_drop(config, d, context, seed=config.seeds.eval)
                stream.extend([trace.input_dbm, trace.set_a_genie_dbm, trace.serving_rsrp_dbm, trace.interference_dbm])
                with run_metrics.stage("serve"):
                    events.extend(self._evaluate_trace(config, context, trace, policy_map, records))
                run_metrics.increment("drops")

        kpis = [summarize(records[k.value], k.value, self.policy_mor(config, k), config.inference.k_max)
                for k in kinds]
        sample_counts = {k: len(v) for k, v in records.items()}
        sample_counts["drops"] = config.inference.n_eval_drops
        stream_hash = array_hash(stream)
        result_hash = document_hash({
            "kpis": [k.model_dump(mode="json") for k in kpis],
            "fallback_events": [e.model_dump(mode="json") for e in events],
            "sample_counts": sample_counts,
            "stream_hash": stream_hash,
        })
        train_hash = weights.config.get("config_hash") if isinstance(weights, WeightsDocument) else None
        result = ExperimentResultDocument(
            name=name, train_config_hash=train_hash, test_config_hash=config_hash(config),
            stream_hash=stream_hash, result_hash=result_hash, kpis=kpis, sample_counts=sample_counts,
            fallback_events=events, run_metrics=run_metrics.summary(),
        )
        for kpi in kpis:
            logger.info(f"[{name}] {kpi.policy}: Top-1={kpi.top_k_accuracy[1]:.3f} acc_1dB={kpi.acc_1db:.3f} "
                        f"MOR={kpi.mor:.4f} tput p5/p50/p95={kpi.throughput_percentiles.p5:.1f}/"
                        f"{kpi.throughput_percentiles.p50:.1f}/{kpi.throughput_percentiles.p95:.1f} Mbps")
        if events:
            logger.info(f"[{name}] {len(events)} monitoring events")
        logger.debug(f"[{name}] slowest stages: {run_metrics.slowest_stages()}")
        return CampaignRun(result=result, records=records)

    def run_inference_campaign(self, config: SimConfig, weights: Optional[WeightsLike] = None,
                               policies: Optional[Sequence[PolicyKind]] = None,
                               name: Optional[str] = None) -> ExperimentResultDocument:
        return self.run_campaign(config, weights, policies, name).result

    def write_campaign(self, run: CampaignRun, out_dir: PathLike) -> Dict[str, Path]:
        out = Path(out_dir)
        records = (r.to_dict() for rs in run.records.values() for r in rs)
        return {
            "result": self.repository.write_json(out / f"{run.result.name}.result.json", run.result),
            "records": self.repository.write_jsonl(out / f"{run.result.name}.records.jsonl", records),
        }

    # ---- single drop export -----------------------------------------------

    def export_drop(self, config: SimConfig, drop_id: int, out_dir: PathLike) -> Dict[str, Path]:
        """Simulate one drop and write its codebooks, layout and measurement reports."""
        context = build_context(config)
        trace = simulate_drop(config, drop_id, context)
        out = Path(out_dir)
        return {
            "set_a": self.repository.write_json(out / "set_a_codebook.json", codebook_to_document(context.set_a)),
            "ssb": self.repository.write_json(out / "ssb_codebook.json", codebook_to_document(context.ssb)),
            "layout": self.repository.write_json(out / f"drop_{drop_id}_layout.json", trace.to_layout_document()),
            "reports": self.repository.write_jsonl(out / f"drop_{drop_id}_reports.jsonl",
                                                   trace.reports(context, config.n_reported)),
        }

    # ---- experiment matrix ------------------------------------------------

    def _collect_and_train(self, config: SimConfig) -> WeightsDocument:
        dataset = self.run_data_collection(config)
        return self.train_model(config, dataset)[1]

    async def _cell_weights(self, train_config: SimConfig) -> WeightsDocument:
        """Weights for a training configuration, trained once and shared by every cell using it."""
        key = config_hash(train_config)
        lock = self._weights_locks.setdefault(key, asyncio.Lock())
        async with lock:
            if key not in self._weights_cache:
                self._weights_cache[key] = await asyncio.to_thread(self._collect_and_train, train_config)
            return self._weights_cache[key]

    async def run_experiment_matrix(self, cells: Sequence[MatrixCell],
                                    max_concurrency: int = 2) -> List[ExperimentResultDocument]:
        """
        Run matrix cells concurrently; results come back in cell order.

        A failing cell yields a result with ``status="failed"`` and does not
        stop the others.
        """
        if max_concurrency < 1:
            raise ValueError(f"max_concurrency must be >= 1, got {max_concurrency}")
        if not cells:
            return []
        semaphore = asyncio.Semaphore(max_concurrency)

        async def run_cell(cell: MatrixCell) -> ExperimentResultDocument:
            train_hash = config_hash(cell.train)
            async with semaphore:
                try:
                    weights = await self._cell_weights(cell.train) if cell.needs_model else None
                    result = await asyncio.to_thread(self.run_inference_campaign, cell.test_config, weights,
                                                     cell.policies, cell.name)
                    self.metrics.increment("cells_ok")
                    return result.model_copy(update={"train_config_hash": train_hash})
                except Exception as e:
                    logger.error(f"❌ Cell {cell.name} failed: {e}")
                    self.metrics.increment("cells_failed")
                    return ExperimentResultDocument(name=cell.name, status="failed", error=f"{type(e).__name__}: {e}",
                                                    train_config_hash=train_hash,
                                                    test_config_hash=config_hash(cell.test_config))

        logger.info(f"Running {len(cells)} matrix cells, {max_concurrency} at a time")
        results = await asyncio.gather(*(run_cell(cell) for cell in cells))
        failed = [r.name for r in results if r.status != "ok"]
        if failed:
            logger.warning(f"{len(failed)} of {len(results)} cells failed: {failed}")
        return list(results)

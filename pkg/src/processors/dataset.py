"""
Training-sample construction, input normalization, UE-disjoint splitting
and dataset persistence.

Model inputs per use case:
    sbp2  Set B RSRPs in pattern order, max-referenced and scaled
    sbp1  reported SSB RSRPs in report order followed by their idx / N_ssb
    tbp   l_o consecutive Set B vectors, flattened oldest first and
          normalized against the window maximum
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from database.repository import ArtifactRepository
from src.core.config import INPUT_SCALE_DB, SPLIT_RATIOS, SimConfig, logger
from src.core.errors import ArtifactIOError, SchemaMismatchError
from src.processors.codebook import SetBPattern
from src.processors.measurement import MeasurementReport, RsrpVector, build_report
from src.processors.simulation import DropTrace
from src.schema.contracts import DatasetHeader, DatasetSchemaModel, SampleMeta, SampleRecord, Split, UseCase

PathLike = Union[str, Path]


@dataclass(frozen=True)
class DatasetSchema:
    use_case: UseCase
    n_set_b: int
    n_set_a: int
    l_o: int = 1
    l_p: int = 0

    @classmethod
    def from_config(cls, config: SimConfig) -> "DatasetSchema":
        if config.use_case == UseCase.TBP:
            return cls(UseCase.TBP, config.n_set_b, config.n_set_a, config.l_o, config.l_p)
        return cls(config.use_case, config.n_set_b, config.n_set_a)

    @property
    def input_dim(self) -> int:
        if self.use_case == UseCase.SBP1:
            return 2 * self.n_set_b
        if self.use_case == UseCase.TBP:
            return self.l_o * self.n_set_b
        return self.n_set_b

    def to_model(self) -> DatasetSchemaModel:
        return DatasetSchemaModel(use_case=self.use_case, n_set_b=self.n_set_b, n_set_a=self.n_set_a,
                                  l_o=self.l_o, l_p=self.l_p)

    @classmethod
    def from_model(cls, model: DatasetSchemaModel) -> "DatasetSchema":
        return cls(model.use_case, model.n_set_b, model.n_set_a, model.l_o, model.l_p)


@dataclass(frozen=True, eq=False)
class TrainingSample:
    input: np.ndarray
    label: int
    meta: SampleMeta
    genie_rsrp_dbm: Optional[np.ndarray] = None

    @property
    def ue_key(self) -> Tuple[int, int]:
        """UE identity across drops."""
        return self.meta.drop_id, self.meta.ue_id


@dataclass(eq=False)
class Dataset:
    samples: List[TrainingSample]
    splits: List[Split]
    schema: DatasetSchema

    def __post_init__(self):
        if len(self.samples) != len(self.splits):
            raise ValueError(f"{len(self.samples)} samples but {len(self.splits)} split tags")

    def __len__(self) -> int:
        return len(self.samples)

    def indices(self, split: Split) -> List[int]:
        return [i for i, s in enumerate(self.splits) if s == split]

    def arrays(self, split: Optional[Split] = None) -> Tuple[np.ndarray, np.ndarray]:
        """(inputs, labels) of one split, or of every sample."""
        chosen = range(len(self.samples)) if split is None else self.indices(split)
        inputs = np.array([self.samples[i].input for i in chosen], dtype=float).reshape(-1, self.schema.input_dim)
        labels = np.array([self.samples[i].label for i in chosen], dtype=int)
        return inputs, labels

    def split_counts(self) -> Dict[str, int]:
        return {split.value: self.splits.count(split) for split in Split}

    def ue_keys(self, split: Split) -> set:
        return {self.samples[i].ue_key for i in self.indices(split)}


# ---------------------------------------------------
# Input encoding
# ---------------------------------------------------

def normalize_input(raw_dbm: np.ndarray, scale_db: float = INPUT_SCALE_DB) -> np.ndarray:
    """Max-referenced scaling (x - max) / scale; the maximum maps to 0."""
    raw = np.asarray(raw_dbm, dtype=float)
    return (raw - raw.max()) / scale_db


def fill_report(report: MeasurementReport, pattern: SetBPattern) -> np.ndarray:
    """
    Set B vector in pattern order.

    Beams left out of a partial report take the weakest reported value.
    """
    ids = list(pattern.indices) if pattern.is_subset else list(range(len(pattern)))
    values = np.full(len(ids), report.values_dbm.min())
    position = {beam_id: i for i, beam_id in enumerate(ids)}
    for beam_id, value in report.entries:
        values[position[beam_id]] = value
    return values


def sbp1_features(report: MeasurementReport, n_ssb: int, scale_db: float = INPUT_SCALE_DB) -> np.ndarray:
    """Report-order SSB values followed by idx / N_ssb; unreported beams are appended in ascending order."""
    reported = report.beam_ids
    seen = set(reported)
    missing = [b for b in range(n_ssb) if b not in seen]
    floor = report.values_dbm.min()
    values = np.concatenate([report.values_dbm, np.full(len(missing), floor)])
    ids = np.array(reported + missing, dtype=float)
    return np.concatenate([normalize_input(values, scale_db), ids / n_ssb])


def encode_input(use_case: UseCase, reports: Sequence[MeasurementReport], pattern: SetBPattern,
                 scale_db: float = INPUT_SCALE_DB) -> np.ndarray:
    """Model input from the latest report (SBP) or an oldest-first report window (TBP)."""
    if not reports:
        raise ValueError("At least one report is needed to build a model input")
    if use_case == UseCase.SBP1:
        return sbp1_features(reports[-1], len(pattern), scale_db)
    if use_case == UseCase.SBP2:
        return normalize_input(fill_report(reports[-1], pattern), scale_db)
    window = np.stack([fill_report(r, pattern) for r in reports])
    return normalize_input(window, scale_db).ravel()


def trace_reports(trace: DropTrace, pattern: SetBPattern, n_s: int, codebook_ref: str) -> List[List[MeasurementReport]]:
    """Reports of every UE and instant, indexed [ue][t]."""
    return [[build_report(RsrpVector(trace.input_dbm[u, t], codebook_ref, float(trace.times[t])), pattern, n_s)
             for t in range(trace.n_instants)]
            for u in range(trace.n_ues)]


# ---------------------------------------------------
# Collection and splitting
# ---------------------------------------------------

def collect_samples(traces: Iterable[DropTrace], use_case: UseCase, pattern: SetBPattern, l_o: int = 1,
                    l_p: int = 0, n_s: Optional[int] = None,
                    scale_db: float = INPUT_SCALE_DB) -> List[TrainingSample]:
    """
    Build labeled samples from simulated drops.

    SBP yields one sample per (UE, instant). TBP yields one per instant t
    with a full window [t - l_o + 1, t] and a label at t + l_p; instants
    without both are skipped and counted. T instants give T - l_o - l_p + 1
    samples per UE: 45 for T = 50, l_o = 5, l_p = 1 (t = 4..48). Counting
    only t = 5..48 would give 44, which drops the first full window.
    """
    if use_case == UseCase.TBP and (l_o < 1 or l_p < 1):
        raise ValueError(f"TBP needs l_o >= 1 and l_p >= 1, got ({l_o}, {l_p})")
    if use_case != UseCase.TBP:
        l_o, l_p = 1, 0
    n_s = n_s or len(pattern)
    codebook_ref = "csirs" if pattern.is_subset else "ssb"
    samples: List[TrainingSample] = []
    skipped = 0
    for trace in traces:
        reports = trace_reports(trace, pattern, n_s, codebook_ref)
        for u in range(trace.n_ues):
            for t in range(trace.n_instants):
                target = t + l_p
                if t < l_o - 1 or target > trace.n_instants - 1:
                    skipped += 1
                    continue
                meta = SampleMeta(ue_id=int(trace.ue_ids[u]), drop_id=trace.drop_id, t=float(trace.times[t]),
                                  speed_kmph=trace.speed_kmph, antenna_config=trace.antenna_label,
                                  label_t=float(trace.times[target]))
                samples.append(TrainingSample(
                    input=encode_input(use_case, reports[u][t - l_o + 1:t + 1], pattern, scale_db),
                    label=int(np.argmax(trace.set_a_label_dbm[u, target])),
                    meta=meta,
                    genie_rsrp_dbm=trace.set_a_genie_dbm[u, target].copy(),
                ))
    if skipped and use_case == UseCase.TBP:
        logger.warning(f"Skipped {skipped} instants without a full observation window or label")
    logger.info(f"Collected {len(samples)} {use_case.value} samples")
    return samples


def split_dataset(samples: Sequence[TrainingSample], ratios: Tuple[float, float, float] = SPLIT_RATIOS,
                  seed: int = 0, schema: Optional[DatasetSchema] = None) -> Dataset:
    """
    Assign train/val/test by UE so that no UE appears in two splits.

    Every split with a positive ratio gets at least one UE.
    """
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"Split ratios must be non-negative and sum to 1, got {ratios}")
    if schema is None:
        raise ValueError("A dataset schema is required")
    keys = sorted({s.ue_key for s in samples})
    if len(keys) < 3:
        raise ValueError(f"Splitting needs at least 3 UEs, got {len(keys)}")
    order = np.random.default_rng(seed).permutation(len(keys))
    n_val = max(int(ratios[1] > 0), int(round(ratios[1] * len(keys))))
    n_test = max(int(ratios[2] > 0), int(round(ratios[2] * len(keys))))
    n_train = len(keys) - n_val - n_test
    assignment: Dict[Tuple[int, int], Split] = {}
    for rank, idx in enumerate(order):
        if rank < n_train:
            assignment[keys[idx]] = Split.TRAIN
        elif rank < n_train + n_val:
            assignment[keys[idx]] = Split.VAL
        else:
            assignment[keys[idx]] = Split.TEST
    dataset = Dataset(samples=list(samples), splits=[assignment[s.ue_key] for s in samples], schema=schema)
    logger.info(f"Split {len(keys)} UEs into {n_train}/{n_val}/{n_test}: samples {dataset.split_counts()}")
    return dataset


# ---------------------------------------------------
# Persistence
# ---------------------------------------------------

def _check_schema(found: DatasetSchema, expected: Optional[DatasetSchema], source: str) -> None:
    if expected is not None and found != expected:
        logger.error(f"Dataset schema mismatch in {source}: found {found}, expected {expected}")
        raise SchemaMismatchError(f"Dataset {source} has schema {found}, expected {expected}")


def save_dataset(dataset: Dataset, path: PathLike, repository: Optional[ArtifactRepository] = None) -> Path:
    """Write a JSON-lines dataset: header record, then one record per sample."""
    repository = repository or ArtifactRepository()
    header = DatasetHeader(schema=dataset.schema.to_model(), n_samples=len(dataset))
    records = (SampleRecord(input=s.input.tolist(), label=s.label, meta=s.meta, split=split,
                            genie_rsrp_dbm=None if s.genie_rsrp_dbm is None else s.genie_rsrp_dbm.tolist())
               for s, split in zip(dataset.samples, dataset.splits))
    target = repository.write_jsonl(path, [header, *records])
    logger.info(f"✅ Saved {len(dataset)} samples to {target}")
    return target


def load_dataset(path: PathLike, expected: Optional[DatasetSchema] = None,
                 repository: Optional[ArtifactRepository] = None) -> Dataset:
    """Read a dataset file, checking it against ``expected`` when given."""
    repository = repository or ArtifactRepository()
    lines = list(repository.read_jsonl(path))
    if not lines:
        raise ArtifactIOError(f"Dataset file {path} is empty")
    try:
        header = DatasetHeader.model_validate(lines[0])
        records = [SampleRecord.model_validate(line) for line in lines[1:]]
    except ValueError as e:
        logger.error(f"Corrupt dataset file {path}: {e}")
        raise ArtifactIOError(f"Corrupt dataset file {path}: {e}") from e
    schema = DatasetSchema.from_model(header.schema_)
    _check_schema(schema, expected, str(path))
    if header.n_samples != len(records):
        raise ArtifactIOError(f"Dataset {path} declares {header.n_samples} samples but holds {len(records)}")
    samples = []
    for record in records:
        if len(record.input) != schema.input_dim or record.label >= schema.n_set_a:
            raise SchemaMismatchError(f"Sample {record.meta} does not fit schema {schema}")
        samples.append(TrainingSample(
            input=np.array(record.input, dtype=float), label=record.label, meta=record.meta,
            genie_rsrp_dbm=None if record.genie_rsrp_dbm is None else np.array(record.genie_rsrp_dbm)))
    return Dataset(samples=samples, splits=[r.split for r in records], schema=schema)


def dataset_frame(dataset: Dataset) -> pd.DataFrame:
    """One row per sample: metadata, split, label and input columns."""
    rows = []
    for sample, split in zip(dataset.samples, dataset.splits):
        row = {"drop_id": sample.meta.drop_id, "ue_id": sample.meta.ue_id, "t": sample.meta.t,
               "speed_kmph": sample.meta.speed_kmph, "antenna": sample.meta.antenna_config,
               "split": split.value, "label": sample.label}
        row.update({f"x{i}": float(v) for i, v in enumerate(sample.input)})
        rows.append(row)
    return pd.DataFrame(rows)


def export_csv(dataset: Dataset, path: PathLike, repository: Optional[ArtifactRepository] = None) -> Path:
    repository = repository or ArtifactRepository()
    return repository.write_csv(path, dataset_frame(dataset))

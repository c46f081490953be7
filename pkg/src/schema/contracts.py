"""Wire contracts for every artifact the simulator writes or reads back."""


from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field


# ENUM for the three Rel-18 sub-use cases handled by the pipeline
class UseCase(str, Enum):
    SBP1 = 'sbp1'   # wide-to-narrow: SSB beams predict the CSI-RS Set A
    SBP2 = 'sbp2'   # narrow-to-narrow: Set B is a subset of Set A
    TBP = 'tbp'     # time-domain: past Set B window predicts a future Set A beam


class ElementPattern(str, Enum):
    ISOTROPIC = 'isotropic'
    SECTORIZED_3GPP = 'sectorized-3gpp'


class CodebookKind(str, Enum):
    CSIRS = 'csirs'
    SSB = 'ssb'
    RX = 'rx'


class PatternMode(str, Enum):
    SUBSET = 'subset'
    SEPARATE_CODEBOOK = 'separate-codebook'


class PolicyKind(str, Enum):
    MODEL = 'model'
    STRONGEST_SET_B = 'strongest-set-b'
    SAMPLE_AND_HOLD = 'sample-and-hold'
    EXHAUSTIVE_GENIE = 'exhaustive-genie'


class ModelFamily(str, Enum):
    SBP1_DNN = 'sbp1-dnn'
    SBP2_CNN_DNN = 'sbp2-cnn-dnn'
    TBP_LSTM_CNN = 'tbp-lstm-cnn'


class Split(str, Enum):
    TRAIN = 'train'
    VAL = 'val'
    TEST = 'test'


class MonitorDecision(str, Enum):
    KEEP_MODEL = 'keep-model'
    FALLBACK_LEGACY = 'fallback-legacy'


# ---------------------------------------------------
# Codebook document
# ---------------------------------------------------

class GeometryModel(BaseModel):
    m_h: int = Field(..., ge=1)
    m_v: int = Field(..., ge=1)
    d_h: float = Field(..., gt=0)
    d_v: float = Field(..., gt=0)
    element_pattern: ElementPattern = ElementPattern.ISOTROPIC


class BeamModel(BaseModel):
    beam_id: int = Field(..., ge=0)
    theta_rad: float
    phi_rad: float
    coeffs: List[List[float]]  # [[re, im], ...]


class CodebookDocument(BaseModel):
    geometry: GeometryModel
    kind: CodebookKind
    n_az: int = Field(..., ge=1)
    n_el: int = Field(..., ge=1)
    beams: List[BeamModel]


# ---------------------------------------------------
# Layout / drop document
# ---------------------------------------------------

class SectorModel(BaseModel):
    sector_id: int
    site_id: int
    x: float
    y: float
    boresight_rad: float


class UETrajectoryModel(BaseModel):
    ue_id: int
    serving_sector: int
    speed_mps: float
    positions: List[Tuple[float, float]]


class LayoutDocument(BaseModel):
    n_sites: int
    sectors_per_site: int
    isd_m: float
    wrap_around: bool
    sectors: List[SectorModel]
    ues: List[UETrajectoryModel] = []


# ---------------------------------------------------
# Measurement report (one JSON line per UE and instant)
# ---------------------------------------------------

class MeasurementReportRecord(BaseModel):
    ue_id: int
    drop_id: int
    t: float
    entries: List[Tuple[int, float]]

    model_config = ConfigDict(extra="ignore")


# ---------------------------------------------------
# Dataset file (header + one record per sample)
# ---------------------------------------------------

class DatasetSchemaModel(BaseModel):
    use_case: UseCase
    n_set_b: int = Field(..., ge=1)
    n_set_a: int = Field(..., ge=1)
    l_o: int = Field(1, ge=1)
    l_p: int = Field(0, ge=0)


class DatasetHeader(BaseModel):
    kind: str = "dataset-header"
    version: int = 1
    schema_: DatasetSchemaModel = Field(..., alias="schema")
    n_samples: int = Field(..., ge=0)

    model_config = ConfigDict(populate_by_name=True)


class SampleMeta(BaseModel):
    ue_id: int
    drop_id: int
    t: float
    speed_kmph: float
    antenna_config: str
    label_t: Optional[float] = None


class SampleRecord(BaseModel):
    input: List[float]
    label: int = Field(..., ge=0)
    meta: SampleMeta
    split: Split
    genie_rsrp_dbm: Optional[List[float]] = None


# ---------------------------------------------------
# Weights file
# ---------------------------------------------------

class TensorModel(BaseModel):
    name: str
    shape: List[int]
    dtype: str = "float32"
    data_b64: str


class TrainingCurveModel(BaseModel):
    train_loss: List[float] = []
    val_loss: List[Optional[float]] = []
    learning_rate: List[float] = []


class WeightsDocument(BaseModel):
    format_version: int = 1
    config: Dict[str, Any]
    seed: int
    tensors: List[TensorModel]
    curve: TrainingCurveModel = TrainingCurveModel()


# ---------------------------------------------------
# KPI / experiment result documents
# ---------------------------------------------------

class ThroughputPercentiles(BaseModel):
    p5: float
    p50: float
    p95: float


class KpiDocument(BaseModel):
    policy: str
    n_records: int
    top_k_accuracy: Dict[int, float]
    acc_1db: float = Field(..., ge=0.0, le=1.0)
    mor: float
    mean_rsrp_error_db: float
    rsrp_error_percentiles: Dict[str, float]
    throughput_percentiles: ThroughputPercentiles


class FallbackEventModel(BaseModel):
    sector_id: int
    t: float
    decision: MonitorDecision
    acc_1db: float


class ExperimentResultDocument(BaseModel):
    name: str
    status: str = "ok"
    error: Optional[str] = None
    train_config_hash: Optional[str] = None
    test_config_hash: Optional[str] = None
    stream_hash: Optional[str] = None
    result_hash: Optional[str] = None
    kpis: List[KpiDocument] = []
    sample_counts: Dict[str, int] = {}
    fallback_events: List[FallbackEventModel] = []
    run_metrics: Dict[str, float] = {}

    model_config = ConfigDict(extra="ignore")

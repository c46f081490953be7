# ---------------------------------------------------
# Configuration file for the Beam Management System-Level Simulator
# ---------------------------------------------------
"""
Beam Management Simulator Configuration

This file contains every default parameter of the simulator and the validated
configuration object built from them. Parameters are organized into:

1. Network Layout - sites, sectors, ISD, heights, carrier
2. Link Budget - TX power, bandwidth, noise figures, overhead
3. Antennas - gNB and UE panel structures and element patterns
4. Codebooks - Set A / Set B / SSB / RX codebook sizes and angular spans
5. Channel - clustered geometric channel and shadowing
6. Measurement - periodicity, L1 filter, RX beam selection, reporting
7. Dataset - drop counts, trajectory length, split ratios
8. Training - optimizer and scheduler settings
9. Monitoring and Inference - fallback threshold, Top-K refinement

Defaults follow the 3GPP Rel-18 FR2 system-level assumptions (30 GHz, 500 m
ISD UMa) at desk scale: one site with three sectors unless the full 7-site
wrap-around layout is requested.
"""

import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import orjson
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.core.errors import ConfigError
from src.schema.contracts import ElementPattern, PolicyKind, UseCase

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger("beam-sim")

# ===================================================
# NETWORK LAYOUT
# ===================================================

# Carrier frequency (Hz), FR2
CARRIER_FREQUENCY_HZ = 30e9

# Hexagonal grid geometry
INTER_SITE_DISTANCE_M = 500.0
GNB_HEIGHT_M = 25.0
UE_HEIGHT_M = 1.5

# Desk-scale default is a single site; 7 or 19 sites for full layouts
N_SITES = 1
SUPPORTED_SITE_COUNTS = (1, 7, 19)
SECTORS_PER_SITE = 3

# UE drop density and the UMa minimum 2D distance to the site
UES_PER_SECTOR = 10
MIN_UE_DISTANCE_M = 35.0

# ===================================================
# LINK BUDGET
# ===================================================

TX_POWER_DBM = 40.0
BANDWIDTH_HZ = 80e6
THERMAL_NOISE_DBM_PER_HZ = -174.0
# Noise figure of the UE receiver; only downlink measurements are simulated
UE_NOISE_FIGURE_DB = 10.0

# Control and RS overhead (DenseUrban-eMBB) and Shannon proxy clamp
COMMON_OVERHEAD = 0.30
MAX_SPECTRAL_EFFICIENCY = 7.4

# ===================================================
# ANTENNAS
# ===================================================

# gNB array (M, N, P, Mg, Ng): M rows (vertical) by N columns (horizontal) per
# panel, P polarizations, Mg x Ng panels abutting at the element spacing
GNB_ANTENNA = (4, 8, 2, 1, 1)
GNB_ELEMENT_SPACING = (0.5, 0.5)  # (d_V, d_H) in wavelengths

# 3GPP element pattern parameters: (HPBW deg, max attenuation dB, max gain dBi)
GNB_ELEMENT_PARAMS = (65.0, 30.0, 8.0)
UE_ELEMENT_PARAMS = (90.0, 25.0, 5.0)

# UE panels (M, N, P) = (1, 4, 2); two panels, left and right
UE_PANEL = (1, 4, 2)
UE_PANELS = 2

# ===================================================
# CODEBOOKS
# ===================================================

# CSI-RS Set A grids: 16x4 = 64 beams for SBP, 8x4 = 32 beams for TBP
SBP_SET_A_GRID = (16, 4)
TBP_SET_A_GRID = (8, 4)
SET_B_SIZE = 16

# SSB beams combine 2x2 blocks of CSI-RS beams (16 wide beams from 64)
SSB_GROUP = (2, 2)

# Angular grid spans per sector (degrees): azimuth offset from boresight, zenith
AZIMUTH_SPAN_DEG = (-60.0, 60.0)
ZENITH_SPAN_DEG = (90.0, 135.0)

# UE RX beams per panel and their azimuth span
UE_BEAMS_PER_PANEL = 4

# ===================================================
# CHANNEL
# ===================================================

N_CLUSTERS = 6
LOS_K_FACTOR_DB = 10.0
LOS_ANGULAR_SPREAD_DEG = 3.0
NLOS_ANGULAR_SPREAD_DEG = 10.0

# Zenith spread relative to the azimuth spread
ZENITH_SPREAD_SCALE = 0.5

SHADOWING_LOS_DB = 4.0
SHADOWING_NLOS_DB = 6.0
SHADOWING_DECORRELATION_M = 50.0

# ===================================================
# MEASUREMENT
# ===================================================

# Measurement periodicity (s) of the CSI-RS occasions
MEASUREMENT_INTERVAL_S = 0.08

# L1 filter and RX beam selection sliding windows (samples)
L1_FILTER_WINDOW = 3
RX_SELECTION_WINDOW = 3

# Floor applied to every RSRP value (dBm)
RSRP_FLOOR_DBM = -200.0

# Temporal prediction windows
OBSERVATION_WINDOW = 5
PREDICTION_HORIZON = 1

# ===================================================
# DATASET
# ===================================================

N_DROPS = 20
N_INSTANTS = 70
SPLIT_RATIOS = (0.8, 0.1, 0.1)

# Input normalization scale (dB)
INPUT_SCALE_DB = 20.0

# ===================================================
# TRAINING
# ===================================================

LEARNING_RATE = 0.01
STEP_LR_GAMMA = 0.5
STEP_LR_EPOCHS = 20
EPOCHS = 100
BATCH_SIZE = 64
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

# ===================================================
# MONITORING AND INFERENCE
# ===================================================

MONITOR_THRESHOLD = 0.8
MONITOR_WINDOW = 50
N_EVAL_DROPS = 2
TOP_K_MAX = 10

# Design-guideline rule: recommend a model reaching this share of the best baseline
GUIDELINE_THROUGHPUT_RATIO = 0.95

# Complexity budgets per family: (min params, max params, max MACs, max bytes)
SBP_BUDGET = (50_000, 150_000, 1_200_000, 1_000_000)
TBP_BUDGET = (100_000, 200_000, 2_000_000, 1_000_000)


# ===================================================
# CONFIGURATION CLASSES
# ===================================================

class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LayoutConfig(_Section):
    n_sites: int = N_SITES
    sectors_per_site: int = SECTORS_PER_SITE
    isd_m: float = Field(INTER_SITE_DISTANCE_M, gt=0)
    gnb_height_m: float = Field(GNB_HEIGHT_M, gt=0)
    ue_height_m: float = Field(UE_HEIGHT_M, gt=0)
    carrier_hz: float = Field(CARRIER_FREQUENCY_HZ, gt=0)
    wrap_around: bool = False
    min_distance_m: float = Field(MIN_UE_DISTANCE_M, ge=0)
    ues_per_sector: int = Field(UES_PER_SECTOR, ge=1)

    @field_validator("n_sites")
    @classmethod
    def _check_sites(cls, value: int) -> int:
        if value not in SUPPORTED_SITE_COUNTS:
            raise ValueError(f"n_sites must be one of {SUPPORTED_SITE_COUNTS}, got {value}")
        return value

    @field_validator("sectors_per_site")
    @classmethod
    def _check_sectors(cls, value: int) -> int:
        if value not in (1, 3):
            raise ValueError(f"sectors_per_site must be 1 or 3, got {value}")
        return value


class LinkConfig(_Section):
    tx_power_dbm: float = TX_POWER_DBM
    bandwidth_hz: float = Field(BANDWIDTH_HZ, gt=0)
    ue_noise_figure_db: float = UE_NOISE_FIGURE_DB
    overhead: float = Field(COMMON_OVERHEAD, ge=0, lt=1)
    max_spectral_efficiency: float = Field(MAX_SPECTRAL_EFFICIENCY, gt=0)


class AntennaConfig(_Section):
    gnb_m: int = Field(GNB_ANTENNA[0], ge=1)
    gnb_n: int = Field(GNB_ANTENNA[1], ge=1)
    gnb_p: int = Field(GNB_ANTENNA[2], ge=1, le=2)
    gnb_mg: int = Field(GNB_ANTENNA[3], ge=1)
    gnb_ng: int = Field(GNB_ANTENNA[4], ge=1)
    d_v: float = Field(GNB_ELEMENT_SPACING[0], gt=0)
    d_h: float = Field(GNB_ELEMENT_SPACING[1], gt=0)
    gnb_pattern: ElementPattern = ElementPattern.SECTORIZED_3GPP
    ue_m: int = Field(UE_PANEL[0], ge=1)
    ue_n: int = Field(UE_PANEL[1], ge=1)
    ue_panels: int = Field(UE_PANELS, ge=1, le=2)
    ue_pattern: ElementPattern = ElementPattern.SECTORIZED_3GPP

    @property
    def label(self) -> str:
        """Short antenna tag used in sample metadata, e.g. '4x8' or '4x8-1x2' for a panel grid."""
        tag = f"{self.gnb_m}x{self.gnb_n}"
        return tag if self.gnb_mg * self.gnb_ng == 1 else f"{tag}-{self.gnb_mg}x{self.gnb_ng}"

    @property
    def gnb_grid(self) -> Tuple[int, int]:
        """(rows, columns) of the whole gNB array across its Mg x Ng panels."""
        return self.gnb_m * self.gnb_mg, self.gnb_n * self.gnb_ng

    @property
    def gnb_elements(self) -> int:
        rows, cols = self.gnb_grid
        return rows * cols * self.gnb_p


class CodebookConfig(_Section):
    set_a_az: int = Field(SBP_SET_A_GRID[0], ge=1)
    set_a_el: int = Field(SBP_SET_A_GRID[1], ge=1)
    set_b_size: int = Field(SET_B_SIZE, ge=1)
    ssb_group_az: int = Field(SSB_GROUP[0], ge=1)
    ssb_group_el: int = Field(SSB_GROUP[1], ge=1)
    az_span_deg: Tuple[float, float] = AZIMUTH_SPAN_DEG
    zenith_span_deg: Tuple[float, float] = ZENITH_SPAN_DEG
    ue_beams_per_panel: int = Field(UE_BEAMS_PER_PANEL, ge=1)

    @property
    def n_set_a(self) -> int:
        return self.set_a_az * self.set_a_el

    @property
    def n_ssb(self) -> int:
        return math.ceil(self.set_a_az / self.ssb_group_az) * math.ceil(self.set_a_el / self.ssb_group_el)


class ChannelConfig(_Section):
    n_clusters: int = Field(N_CLUSTERS, ge=0)
    k_factor_db: float = LOS_K_FACTOR_DB
    los_angular_spread_deg: float = Field(LOS_ANGULAR_SPREAD_DEG, ge=0)
    nlos_angular_spread_deg: float = Field(NLOS_ANGULAR_SPREAD_DEG, ge=0)
    zenith_spread_scale: float = Field(ZENITH_SPREAD_SCALE, ge=0)
    shadowing_los_db: float = Field(SHADOWING_LOS_DB, ge=0)
    shadowing_nlos_db: float = Field(SHADOWING_NLOS_DB, ge=0)
    shadowing_decorrelation_m: float = Field(SHADOWING_DECORRELATION_M, gt=0)


class MeasurementConfig(_Section):
    interval_s: float = Field(MEASUREMENT_INTERVAL_S, gt=0)
    l1_window: int = Field(L1_FILTER_WINDOW, ge=1)
    rx_window: int = Field(RX_SELECTION_WINDOW, ge=1)
    n_s: Optional[int] = Field(None, ge=1)
    noisy_inputs: bool = False
    noisy_labels: bool = False
    rsrp_floor_dbm: float = RSRP_FLOOR_DBM


class DatasetConfig(_Section):
    n_drops: int = Field(N_DROPS, ge=1)
    n_instants: int = Field(N_INSTANTS, ge=1)
    split_ratios: Tuple[float, float, float] = SPLIT_RATIOS
    input_scale_db: float = Field(INPUT_SCALE_DB, gt=0)
    # (M, N) gNB configurations mixed into one dataset; empty = configured antenna only
    mixed_antenna_configs: List[Tuple[int, int]] = []

    @field_validator("split_ratios")
    @classmethod
    def _check_ratios(cls, value: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(r < 0 for r in value) or abs(sum(value) - 1.0) > 1e-9:
            raise ValueError(f"split ratios must be non-negative and sum to 1, got {value}")
        return value


class TrainingConfig(_Section):
    lr0: float = Field(LEARNING_RATE, gt=0)
    gamma: float = Field(STEP_LR_GAMMA, gt=0, le=1)
    step_epochs: int = Field(STEP_LR_EPOCHS, ge=1)
    epochs: int = Field(EPOCHS, ge=1)
    batch_size: int = Field(BATCH_SIZE, ge=1)
    beta1: float = ADAM_BETAS[0]
    beta2: float = ADAM_BETAS[1]
    eps: float = ADAM_EPS
    log_every: int = Field(10, ge=1)
    # Fixed hidden width; None picks the width closest to the middle of the budget
    hidden: Optional[int] = Field(None, ge=1)
    enforce_budget: bool = True


class MonitoringConfig(_Section):
    enabled: bool = True
    threshold: float = Field(MONITOR_THRESHOLD, ge=0, le=1)
    window: int = Field(MONITOR_WINDOW, ge=1)


class InferenceConfig(_Section):
    n_eval_drops: int = Field(N_EVAL_DROPS, ge=1)
    k_max: int = Field(TOP_K_MAX, ge=1)
    # 0 disables the second-round measurement of the predicted Top-K beams
    refine_top_k: int = Field(0, ge=0)
    policies: Optional[List[PolicyKind]] = None


class SeedConfig(_Section):
    drop: int
    split: int
    model: int
    eval: int


class SimConfig(BaseModel):
    """
    Complete, validated simulator configuration.

    Every section has defaults except ``seeds``, which must be given.

    Usage:
        config = SimConfig(seeds={"drop": 1, "split": 2, "model": 3, "eval": 4})
        config = build_config({...}, overrides=["--use_case=tbp"])
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    use_case: UseCase = UseCase.SBP2
    ue_speed_kmph: float = Field(3.0, ge=0)
    l_o: int = Field(OBSERVATION_WINDOW, ge=1)
    l_p: int = Field(PREDICTION_HORIZON, ge=1)
    layout: LayoutConfig = LayoutConfig()
    link: LinkConfig = LinkConfig()
    antenna: AntennaConfig = AntennaConfig()
    codebook: CodebookConfig = CodebookConfig()
    channel: ChannelConfig = ChannelConfig()
    measurement: MeasurementConfig = MeasurementConfig()
    dataset: DatasetConfig = DatasetConfig()
    training: TrainingConfig = TrainingConfig()
    monitoring: MonitoringConfig = MonitoringConfig()
    inference: InferenceConfig = InferenceConfig()
    seeds: SeedConfig

    @model_validator(mode="after")
    def _check_consistency(self) -> "SimConfig":
        cb = self.codebook
        if cb.ssb_group_az > cb.set_a_az or cb.ssb_group_el > cb.set_a_el:
            raise ValueError(
                f"SSB group ({cb.ssb_group_az}, {cb.ssb_group_el}) exceeds the "
                f"CSI-RS grid ({cb.set_a_az}, {cb.set_a_el})")
        if self.use_case != UseCase.SBP1 and cb.set_b_size > cb.n_set_a:
            raise ValueError(f"Set B size {cb.set_b_size} exceeds Set A size {cb.n_set_a}")
        n_s = self.measurement.n_s
        if n_s is not None and n_s > self.n_set_b:
            raise ValueError(f"n_s={n_s} exceeds the Set B size {self.n_set_b}")
        if self.inference.refine_top_k > cb.n_set_a:
            raise ValueError(f"refine_top_k={self.inference.refine_top_k} exceeds Set A size")
        return self

    # ===================================================
    # DERIVED PROPERTIES
    # ===================================================

    @property
    def n_set_a(self) -> int:
        return self.codebook.n_set_a

    @property
    def n_set_b(self) -> int:
        """Model input beam count: SSB codebook size for SBP1, Set B size otherwise."""
        if self.use_case == UseCase.SBP1:
            return self.codebook.n_ssb
        return self.codebook.set_b_size

    @property
    def n_reported(self) -> int:
        return self.measurement.n_s or self.n_set_b

    @property
    def ue_speed_mps(self) -> float:
        return self.ue_speed_kmph / 3.6

    def to_dict(self) -> Dict[str, Any]:
        """Plain JSON-compatible dictionary of the configuration."""
        return self.model_dump(mode="json")

    def replace(self, **overrides: Any) -> "SimConfig":
        """Copy with dotted-path overrides, validated again."""
        data = self.to_dict()
        for key, value in overrides.items():
            _set_dotted(data, key.replace("__", "."), value)
        return build_config(data)

    def __repr__(self) -> str:
        return (f"SimConfig(use_case={self.use_case.value}, N_B={self.n_set_b}, N_A={self.n_set_a}, "
                f"speed={self.ue_speed_kmph} km/h, antenna={self.antenna.label})")


# ===================================================
# LOADING AND OVERRIDES
# ===================================================

def _set_dotted(data: Dict[str, Any], dotted_key: str, value: Any) -> None:
    parts = dotted_key.split(".")
    node = data
    for part in parts[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[parts[-1]] = value


def parse_override(flag: str) -> Tuple[str, Any]:
    """
    Parse one ``--key=value`` flag.

    Values are decoded as JSON when possible (numbers, booleans, lists),
    otherwise kept as raw strings.
    """
    body = flag[2:] if flag.startswith("--") else flag
    if "=" not in body:
        raise ConfigError(f"Override must look like --key=value: {flag}")
    key, raw = body.split("=", 1)
    key = key.strip().replace("-", "_")
    if not key:
        raise ConfigError(f"Empty override key: {flag}")
    try:
        value = orjson.loads(raw)
    except orjson.JSONDecodeError:
        value = raw
    return key, value


def build_config(data: Dict[str, Any], overrides: Sequence[str] = ()) -> SimConfig:
    """Validate a raw dictionary (plus overrides) into a SimConfig."""
    merged = orjson.loads(orjson.dumps(data))
    for flag in overrides:
        key, value = parse_override(flag)
        _set_dotted(merged, key, value)
    try:
        return SimConfig.model_validate(merged)
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        raise ConfigError(str(e)) from e


def load_config(path: Union[str, Path], overrides: Sequence[str] = ()) -> SimConfig:
    """Load a JSON configuration file and apply ``--key=value`` overrides."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        data = orjson.loads(path.read_bytes())
    except orjson.JSONDecodeError as e:
        raise ConfigError(f"Config file is not valid JSON: {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config root must be an object: {path}")
    config = build_config(data, overrides)
    logger.info(f"Loaded {config!r} from {path}")
    return config

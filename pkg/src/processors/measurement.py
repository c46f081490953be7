"""
Per-beam RSRP synthesis, best-RX selection, L1 filtering and Set B reports.
"""

import math
from collections import deque
from dataclasses import dataclass
from typing import Deque, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.config import RSRP_FLOOR_DBM, THERMAL_NOISE_DBM_PER_HZ, LinkConfig, logger
from src.processors.channel import ChannelRealization
from src.processors.codebook import BeamformingVector, Codebook, SetBPattern
from src.schema.contracts import MeasurementReportRecord

ChannelLike = Union[ChannelRealization, np.ndarray]
BeamLike = Union[BeamformingVector, np.ndarray]


def dbm_to_watts(dbm: np.ndarray) -> np.ndarray:
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts: np.ndarray, floor_dbm: float = RSRP_FLOOR_DBM) -> np.ndarray:
    """Power in W to dBm, clamped at ``floor_dbm``."""
    watts = np.asarray(watts, dtype=float)
    with np.errstate(divide="ignore"):
        dbm = 10.0 * np.log10(watts) + 30.0
    return np.maximum(dbm, floor_dbm)


@dataclass(frozen=True)
class LinkBudget:
    tx_power_dbm: float
    noise_figure_db: float
    bandwidth_hz: float

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth_hz}")

    @classmethod
    def downlink(cls, link: LinkConfig) -> "LinkBudget":
        """Budget at the UE receiver."""
        return cls(tx_power_dbm=link.tx_power_dbm, noise_figure_db=link.ue_noise_figure_db,
                   bandwidth_hz=link.bandwidth_hz)

    @property
    def noise_power_dbm(self) -> float:
        return THERMAL_NOISE_DBM_PER_HZ + 10.0 * math.log10(self.bandwidth_hz) + self.noise_figure_db

    @property
    def tx_power_w(self) -> float:
        return float(dbm_to_watts(self.tx_power_dbm))

    @property
    def noise_power_w(self) -> float:
        return float(dbm_to_watts(self.noise_power_dbm))


@dataclass(frozen=True, eq=False)
class RsrpVector:
    values_dbm: np.ndarray
    codebook_ref: str
    timestamp: float
    rx_beams: Optional[np.ndarray] = None   # RX beam used for each entry

    def __post_init__(self):
        if not np.all(np.isfinite(self.values_dbm)):
            raise ValueError(f"RSRP vector for {self.codebook_ref} at t={self.timestamp} is not finite")

    def __len__(self) -> int:
        return len(self.values_dbm)


@dataclass(frozen=True)
class MeasurementReport:
    entries: Tuple[Tuple[int, float], ...]   # (beam_id, l1_rsrp_dbm), strongest first
    set_b_ref: SetBPattern
    timestamp: float

    @property
    def beam_ids(self) -> List[int]:
        return [beam_id for beam_id, _ in self.entries]

    @property
    def values_dbm(self) -> np.ndarray:
        return np.array([value for _, value in self.entries])

    def to_record(self, ue_id: int, drop_id: int) -> MeasurementReportRecord:
        return MeasurementReportRecord(ue_id=ue_id, drop_id=drop_id, t=self.timestamp,
                                       entries=[(int(b), float(v)) for b, v in self.entries])


# ---------------------------------------------------
# RSRP
# ---------------------------------------------------

def _matrix(h: ChannelLike) -> np.ndarray:
    return np.atleast_2d(h.h if isinstance(h, ChannelRealization) else np.asarray(h))


def _coefficients(beam: BeamLike) -> np.ndarray:
    return np.atleast_1d(beam.coefficients if isinstance(beam, BeamformingVector) else np.asarray(beam))


def _add_noise(power_w: np.ndarray, noise_w: float, rng: np.random.Generator) -> np.ndarray:
    """|sqrt(P) g + n|^2 with n ~ CN(0, noise_w), evaluated on received powers."""
    power_w = np.asarray(power_w, dtype=float)
    amplitude = np.sqrt(power_w) * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=power_w.shape))
    noise = math.sqrt(noise_w / 2.0) * (rng.standard_normal(power_w.shape) + 1j * rng.standard_normal(power_w.shape))
    return np.abs(amplitude + noise) ** 2


def rsrp(h: ChannelLike, b_tx: BeamLike, b_rx: BeamLike, link: LinkBudget, with_noise: bool = False,
         seed: Optional[int] = None, rng: Optional[np.random.Generator] = None,
         floor_dbm: float = RSRP_FLOOR_DBM) -> float:
    """
    RSRP (dBm) of one TX/RX beam pair, 10 log10(P |b_rx^H H b_tx|^2 + noise) + 30.

    Genie mode (``with_noise=False``) omits the noise term.
    """
    matrix = _matrix(h)
    tx = _coefficients(b_tx)
    rx = _coefficients(b_rx)
    if matrix.shape != (rx.size, tx.size):
        raise ValueError(f"Channel shape {matrix.shape} does not match RX {rx.size} x TX {tx.size}")
    power = link.tx_power_w * abs(np.vdot(rx, matrix @ tx)) ** 2
    if with_noise:
        power = float(_add_noise(np.array(power), link.noise_power_w, rng or np.random.default_rng(seed)))
    return float(watts_to_dbm(power, floor_dbm))


class RxBeamSelector:
    """
    Best-RX tracking per TX beam over a sliding window of RSRP matrices.

    The RX beam whose windowed mean received power is largest is used for
    each TX beam.
    """

    def __init__(self, window: int):
        if window < 1:
            raise ValueError(f"RX selection window must be >= 1, got {window}")
        self.window = window
        self._history: Deque[np.ndarray] = deque(maxlen=window)

    def update(self, power_w: np.ndarray) -> np.ndarray:
        """Add an (n_rx, n_tx) power matrix and return the selected RX index per TX beam."""
        if self._history and self._history[-1].shape != power_w.shape:
            logger.debug(f"RX selector shape changed to {power_w.shape}, history reset")
            self._history.clear()
        self._history.append(power_w)
        return np.argmax(np.mean(np.stack(self._history), axis=0), axis=0)

    def reset(self) -> None:
        self._history.clear()

    def __len__(self) -> int:
        return len(self._history)


def beam_powers(channels_per_panel: Sequence[ChannelLike], tx_codebook: Codebook,
                rx_codebooks: Sequence[Codebook], link: LinkBudget) -> np.ndarray:
    """Noise-free received power (W) for every RX beam of every panel and every TX beam."""
    if not len(tx_codebook):
        raise ValueError("TX codebook is empty")
    if len(channels_per_panel) != len(rx_codebooks):
        raise ValueError(f"{len(channels_per_panel)} panel channels for {len(rx_codebooks)} RX codebooks")
    blocks = []
    for h, rx_codebook in zip(channels_per_panel, rx_codebooks):
        matrix = _matrix(h)
        if matrix.shape != (rx_codebook.matrix.shape[0], tx_codebook.matrix.shape[0]):
            raise ValueError(f"Channel shape {matrix.shape} does not match the codebooks")
        blocks.append(np.abs(rx_codebook.matrix.conj().T @ matrix @ tx_codebook.matrix) ** 2)
    return link.tx_power_w * np.vstack(blocks)


def measure_set(channels_per_panel: Sequence[ChannelLike], tx_codebook: Codebook, rx_codebooks: Sequence[Codebook],
                link: LinkBudget, t: float, selector: Optional[RxBeamSelector] = None, with_noise: bool = False,
                rng: Optional[np.random.Generator] = None, floor_dbm: float = RSRP_FLOOR_DBM) -> RsrpVector:
    """
    RSRP of every TX beam under its best RX beam across the UE panels.

    Without a selector the instantaneous best RX beam is used; with one, the
    RX beam maximizing the windowed average is used.
    """
    powers = beam_powers(channels_per_panel, tx_codebook, rx_codebooks, link)
    if with_noise:
        powers = _add_noise(powers, link.noise_power_w, rng or np.random.default_rng())
    best_rx = selector.update(powers) if selector is not None else np.argmax(powers, axis=0)
    selected = powers[best_rx, np.arange(powers.shape[1])]
    return RsrpVector(values_dbm=watts_to_dbm(selected, floor_dbm), codebook_ref=tx_codebook.kind.value,
                      timestamp=t, rx_beams=best_rx)


# ---------------------------------------------------
# Filtering and reporting
# ---------------------------------------------------

def l1_filter(history: Sequence[RsrpVector], window: int) -> RsrpVector:
    """Per-beam linear-power mean over the last ``min(window, len(history))`` vectors."""
    if window < 1:
        raise ValueError(f"L1 filter window must be >= 1, got {window}")
    if not history:
        raise ValueError("L1 filter needs a non-empty history")
    recent = list(history)[-window:]
    ref = recent[-1]
    for vector in recent:
        if len(vector) != len(ref) or vector.codebook_ref != ref.codebook_ref:
            raise ValueError("L1 filter history mixes codebooks")
    mean_w = np.mean([dbm_to_watts(v.values_dbm) for v in recent], axis=0)
    return RsrpVector(values_dbm=watts_to_dbm(mean_w), codebook_ref=ref.codebook_ref,
                      timestamp=ref.timestamp, rx_beams=ref.rx_beams)


def pattern_values(filtered: RsrpVector, pattern: SetBPattern) -> np.ndarray:
    """Values of the Set B beams in pattern order."""
    if pattern.is_subset:
        if len(filtered) != pattern.n_set_a:
            raise ValueError(f"Subset pattern needs a Set A vector of {pattern.n_set_a}, got {len(filtered)}")
        return filtered.values_dbm[list(pattern.indices)]
    if len(filtered) != len(pattern):
        raise ValueError(f"Separate-codebook pattern needs {len(pattern)} SSB values, got {len(filtered)}")
    return filtered.values_dbm


def build_report(filtered: RsrpVector, pattern: SetBPattern, n_s: int) -> MeasurementReport:
    """
    The ``n_s`` strongest Set B beams, sorted by descending RSRP.

    Ties go to the lower beam id. For a subset pattern the beam ids are Set A
    indices; for a separate codebook they are SSB indices.
    """
    if n_s < 1 or n_s > len(pattern):
        raise ValueError(f"n_s must lie in [1, {len(pattern)}], got {n_s}")
    values = pattern_values(filtered, pattern)
    ids = np.array(pattern.indices if pattern.is_subset else range(len(pattern)))
    order = np.lexsort((ids, -values))[:n_s]
    entries = tuple((int(ids[i]), float(values[i])) for i in order)
    return MeasurementReport(entries=entries, set_b_ref=pattern, timestamp=filtered.timestamp)

"""
Beam-prediction and system KPIs: Top-K accuracy, RSRP error, 1 dB-margin
accuracy, measurement overhead reduction, throughput proxy and percentiles.
"""

from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.core.config import COMMON_OVERHEAD, GUIDELINE_THROUGHPUT_RATIO, MAX_SPECTRAL_EFFICIENCY
from src.schema.contracts import KpiDocument, ThroughputPercentiles, UseCase

DEFAULT_PERCENTILES = (5, 50, 95)


@dataclass(frozen=True)
class PredictionRecord:
    policy: str
    drop_id: int
    ue_id: int
    sector_id: int
    t: float                        # target instant
    predicted_top_k: Tuple[int, ...]
    served_index: int
    genie_index: int
    genie_rsrp_dbm: float
    predicted_rsrp_dbm: float       # genie-mode RSRP of the served beam
    genie_t: float
    predicted_t: float
    sinr_linear: float = 0.0
    throughput_mbps: float = 0.0
    position: Tuple[float, float] = (0.0, 0.0)
    fallback: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PredictionRecord":
        return cls(**{**data, "predicted_top_k": tuple(data["predicted_top_k"]), "position": tuple(data["position"])})


def _check_records(records: Sequence[PredictionRecord]) -> None:
    if not records:
        raise ValueError("KPIs need at least one prediction record")


def top_k_accuracy(records: Sequence[PredictionRecord], k: int) -> float:
    """Fraction of records whose first k predictions contain the genie beam."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    _check_records(records)
    return float(np.mean([r.genie_index in r.predicted_top_k[:k] for r in records]))


def rsrp_error(record: PredictionRecord) -> float:
    """R_genie - R_served in dB, both read from the same genie measurement instant."""
    if record.genie_t != record.predicted_t:
        raise ValueError(f"RSRPs come from different instants ({record.genie_t} vs {record.predicted_t})")
    return record.genie_rsrp_dbm - record.predicted_rsrp_dbm


def acc_1db(records: Sequence[PredictionRecord]) -> float:
    """Fraction of records with an RSRP error strictly below 1 dB."""
    _check_records(records)
    return float(np.mean([rsrp_error(r) < 1.0 for r in records]))


def mor(use_case: UseCase, n_b: int, n_a: int, l_o: int = 1, l_p: int = 1) -> float:
    """
    Measurement overhead reduction against a full Set A sweep.

    SBP2 gives 1 - N_B/N_A and TBP gives 1 - l_o N_B / ((l_o + l_p) N_A).
    Wide-to-narrow prediction reuses the SSB sweep and measures no Set A
    beam, so it returns 1.0 instead of 1 - N_B/N_A.
    """
    use_case = UseCase(use_case)
    if use_case == UseCase.SBP1:
        return 1.0
    if n_b > n_a or n_b < 1:
        raise ValueError(f"Set B size {n_b} must lie in [1, {n_a}]")
    if use_case == UseCase.SBP2:
        return 1.0 - n_b / n_a
    if l_o < 1 or l_p < 1:
        raise ValueError(f"TBP needs l_o >= 1 and l_p >= 1, got ({l_o}, {l_p})")
    return 1.0 - l_o * n_b / ((l_o + l_p) * n_a)


def sinr_linear(signal_dbm: np.ndarray, interference_dbm: np.ndarray, noise_dbm: float) -> np.ndarray:
    signal = 10.0 ** (np.asarray(signal_dbm) / 10.0)
    interference = 10.0 ** (np.asarray(interference_dbm) / 10.0)
    return signal / (interference + 10.0 ** (noise_dbm / 10.0))


def throughput_proxy(sinr: np.ndarray, bandwidth_hz: float, overhead: float = COMMON_OVERHEAD,
                     n_coscheduled: int = 1, max_spectral_efficiency: float = MAX_SPECTRAL_EFFICIENCY) -> np.ndarray:
    """Shannon throughput in Mbps with an SE cap and round-robin sharing."""
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr < 0):
        raise ValueError("SINR must be non-negative")
    se = np.minimum(np.log2(1.0 + sinr), max_spectral_efficiency)
    return (1.0 - overhead) * bandwidth_hz * se / max(n_coscheduled, 1) / 1e6


def percentiles(values: Iterable[float], qs: Sequence[float] = DEFAULT_PERCENTILES) -> Dict[str, float]:
    values = np.asarray(list(values), dtype=float)
    if values.size == 0:
        raise ValueError("Percentiles need at least one value")
    return {f"p{q:g}": float(np.percentile(values, q)) for q in qs}


def rsrp_error_cdf(records: Sequence[PredictionRecord]) -> Tuple[np.ndarray, np.ndarray]:
    """Empirical CDF of e_RSRP as (sorted errors, cumulative probabilities)."""
    _check_records(records)
    errors = np.sort([rsrp_error(r) for r in records])
    return errors, np.arange(1, len(errors) + 1) / len(errors)


def per_ue_throughput(records: Sequence[PredictionRecord]) -> np.ndarray:
    """Average throughput of every UE, ordered by (drop, ue)."""
    by_ue: Dict[Tuple[int, int], List[float]] = defaultdict(list)
    for r in records:
        by_ue[(r.drop_id, r.ue_id)].append(r.throughput_mbps)
    return np.array([np.mean(by_ue[key]) for key in sorted(by_ue)])


def summarize(records: Sequence[PredictionRecord], policy: str, mor_value: float, k_max: int) -> KpiDocument:
    _check_records(records)
    errors = [rsrp_error(r) for r in records]
    k_max = min(k_max, max(len(r.predicted_top_k) for r in records))
    tput = percentiles(per_ue_throughput(records))
    return KpiDocument(
        policy=policy,
        n_records=len(records),
        top_k_accuracy={k: top_k_accuracy(records, k) for k in range(1, k_max + 1)},
        acc_1db=acc_1db(records),
        mor=mor_value,
        mean_rsrp_error_db=float(np.mean(errors)),
        rsrp_error_percentiles=percentiles(errors),
        throughput_percentiles=ThroughputPercentiles(**tput),
    )


# ---------------------------------------------------
# Comparisons and tables
# ---------------------------------------------------

def throughput_ratio(kpi: KpiDocument, reference: KpiDocument) -> Dict[str, float]:
    """Per-percentile throughput of ``kpi`` relative to ``reference``."""
    ours = kpi.throughput_percentiles.model_dump()
    ref = reference.throughput_percentiles.model_dump()
    return {p: (ours[p] / ref[p] if ref[p] > 0 else float("inf")) for p in ours}


def design_guidelines(kpis: Sequence[KpiDocument], candidate: str = "model",
                      threshold: float = GUIDELINE_THROUGHPUT_RATIO) -> Dict[str, Dict[str, Any]]:
    """
    Per UE class (p5 cell edge, p50 median, p95 best) whether ``candidate``
    reaches ``threshold`` of the best other policy's throughput.
    """
    by_policy = {k.policy: k for k in kpis}
    if candidate not in by_policy:
        raise ValueError(f"No KPIs for policy {candidate}")
    others = [k for k in kpis if k.policy != candidate]
    if not others:
        raise ValueError("Design guidelines need at least one other policy")
    ours = by_policy[candidate].throughput_percentiles.model_dump()
    guidelines = {}
    for p, value in ours.items():
        best = max(others, key=lambda k: getattr(k.throughput_percentiles, p))
        reference = getattr(best.throughput_percentiles, p)
        ratio = value / reference if reference > 0 else float("inf")
        guidelines[p] = {"best_baseline": best.policy, "ratio": ratio, "recommended": ratio >= threshold}
    return guidelines


def position_kpi_grid(records: Sequence[PredictionRecord], bin_m: float = 20.0) -> List[Dict[str, Any]]:
    """
    Bin records by UE position; per bin the smallest K reaching 100% Top-K
    accuracy (None if no K does) and the mean RSRP error.
    """
    if bin_m <= 0:
        raise ValueError(f"bin size must be positive, got {bin_m}")
    bins: Dict[Tuple[int, int], List[PredictionRecord]] = defaultdict(list)
    for r in records:
        bins[(int(np.floor(r.position[0] / bin_m)), int(np.floor(r.position[1] / bin_m)))].append(r)
    rows = []
    for (ix, iy), members in sorted(bins.items()):
        ranks = [r.predicted_top_k.index(r.genie_index) + 1 if r.genie_index in r.predicted_top_k else None
                 for r in members]
        min_k: Optional[int] = None if any(k is None for k in ranks) else max(ranks)
        rows.append({"x_m": (ix + 0.5) * bin_m, "y_m": (iy + 0.5) * bin_m, "n_records": len(members),
                     "min_k_full_accuracy": min_k,
                     "mean_rsrp_error_db": float(np.mean([rsrp_error(r) for r in members]))})
    return rows


def kpi_table_rows(kpis: Sequence[KpiDocument], experiment: str = "") -> List[Dict[str, Any]]:
    """Long-format rows: one per (policy, K) accuracy point and one per percentile."""
    rows = []
    for kpi in kpis:
        for k, acc in sorted(kpi.top_k_accuracy.items()):
            rows.append({"experiment": experiment, "policy": kpi.policy, "metric": "top_k_accuracy",
                         "key": f"K={k}", "value": acc})
        rows.append({"experiment": experiment, "policy": kpi.policy, "metric": "acc_1db", "key": "", "value": kpi.acc_1db})
        rows.append({"experiment": experiment, "policy": kpi.policy, "metric": "mor", "key": "", "value": kpi.mor})
        for p, value in kpi.rsrp_error_percentiles.items():
            rows.append({"experiment": experiment, "policy": kpi.policy, "metric": "rsrp_error_db",
                         "key": p, "value": value})
        for p, value in kpi.throughput_percentiles.model_dump().items():
            rows.append({"experiment": experiment, "policy": kpi.policy, "metric": "throughput_mbps",
                         "key": p, "value": value})
    return rows

"""
Tables and curves from experiment results: KPI CSV, e_RSRP CDF dumps,
per-position KPI grids and design guidelines.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

from database.repository import ArtifactRepository
from src.processors.kpi import (
    PredictionRecord,
    design_guidelines,
    kpi_table_rows,
    position_kpi_grid,
    rsrp_error_cdf,
    throughput_ratio,
)
from src.schema.contracts import ExperimentResultDocument, PolicyKind

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def records_path(result_path: Path) -> Path:
    """Records file written next to a result by the evaluate subcommand."""
    return result_path.with_name(result_path.name.replace(".result.json", ".records.jsonl"))


def load_records(repository: ArtifactRepository, path: PathLike) -> Dict[str, List[PredictionRecord]]:
    by_policy: Dict[str, List[PredictionRecord]] = {}
    for line in repository.read_jsonl(path):
        record = PredictionRecord.from_dict(line)
        by_policy.setdefault(record.policy, []).append(record)
    return by_policy


def _guidelines(result: ExperimentResultDocument) -> Dict[str, Any]:
    policies = {k.policy: k for k in result.kpis}
    if PolicyKind.MODEL.value not in policies or len(policies) < 2:
        return {}
    model = policies[PolicyKind.MODEL.value]
    return {
        "guidelines": design_guidelines(result.kpis),
        "throughput_ratio": {p: throughput_ratio(model, k) for p, k in policies.items() if p != model.policy},
    }


def write_report(result_paths: Sequence[PathLike], out_dir: PathLike,
                 repository: ArtifactRepository = None, grid_bin_m: float = 20.0) -> Dict[str, Path]:
    """
    Summarize result files into ``out_dir``.

    Failed results are listed in the KPI table's log line and skipped.
    """
    repository = repository or ArtifactRepository()
    out = Path(out_dir)
    written: Dict[str, Path] = {}
    rows, guidelines = [], {}

    for path in map(Path, result_paths):
        result = repository.read_json(path, ExperimentResultDocument)
        if result.status != "ok":
            logger.warning(f"Skipping failed result {result.name}: {result.error}")
            continue
        rows.extend(kpi_table_rows(result.kpis, result.name))
        entry = _guidelines(result)
        if entry:
            guidelines[result.name] = entry

        records_file = records_path(path)
        if records_file == path or not repository.exists(records_file):
            continue
        for policy, records in load_records(repository, records_file).items():
            errors, cdf = rsrp_error_cdf(records)
            written[f"{result.name}.{policy}.cdf"] = repository.write_columns(
                out / f"{result.name}.{policy}.cdf.dat", [errors, cdf], header="e_rsrp_db cdf")
            if policy == PolicyKind.MODEL.value:
                written[f"{result.name}.grid"] = repository.write_csv(
                    out / f"{result.name}.position_grid.csv", position_kpi_grid(records, grid_bin_m))

    if rows:
        written["kpi_table"] = repository.write_csv(out / "kpi_table.csv", rows)
    if guidelines:
        written["guidelines"] = repository.write_json(out / "guidelines.json", guidelines, sort_keys=True)
    logger.info(f"Report: {len(rows)} KPI rows, {len(written)} files in {out}")
    return written

import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd

from .config import TrackerConfig
from .metrics import EvalReport

logger = logging.getLogger(__name__)


def _finite(value: float) -> Any:
    # JSON has no infinity; an unbounded reduction is reported as null
    return None if value in (float("inf"), float("-inf")) else value


def _native(value: Any) -> Any:
    return value.item() if hasattr(value, "item") else value


def eval_report_to_dict(report: EvalReport) -> Dict[str, Any]:
    avg, peak = report.matching_space
    return {
        "id_switches": report.id_switches,
        "aq_proxy": report.aq_proxy,
        "idtp": report.idtp,
        "gt_detections": report.gt_detections,
        "predicted_detections": report.predicted_detections,
        "matching_space": {"avg": avg, "max": peak},
        "per_track": [asdict(track) for track in report.per_track],
    }


class ReportWriter:
    """Writes JSON reports and CSV tables to a single destination path."""

    def __init__(self, path):
        self.path = Path(path)

    def _write_json(self, payload: Dict[str, Any]):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n", encoding="utf-8")
        logger.info(f"Report written to {self.path}")

    def write_eval(self, report: EvalReport):
        self._write_json(eval_report_to_dict(report))

    def write_bench(self, table: pd.DataFrame, reductions: Dict[str, float], config: Optional[TrackerConfig] = None):
        """Rows per (scenario, mode), plus the per-scenario matching-space reduction."""
        rows = [{key: _native(value) for key, value in row.items()} for row in table.to_dict(orient="records")]
        payload: Dict[str, Any] = {"results": rows}
        if reductions:
            payload["matching_space_reduction"] = {name: _finite(ratio) for name, ratio in reductions.items()}
        if config is not None:
            payload["config"] = config.to_dict()
        self._write_json(payload)

    def write_table(self, table: pd.DataFrame):
        if table.empty:
            logger.warning(f"Writing an empty table to {self.path}")
        self.path.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(self.path, index=False, lineterminator="\n")
        logger.info(f"{len(table)} rows written to {self.path}")

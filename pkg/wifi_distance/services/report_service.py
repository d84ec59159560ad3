from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import pandas as pd

from wifi_distance.evaluation import EvalReport
from wifi_distance.services.artifact_store import ParseError, read_json, write_frame

logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "dataset",
    "learner",
    "precision",
    "recall",
    "f_beta",
    "f_beta_std",
    "rmse",
    "mae",
    "mse",
    "train_time_s",
    "test_time_s",
]
RESTRICTED_COLUMNS = ["dataset", "learner", "restrict_m", "MAE", "RMSE", "MSE", "Prec", "Recall", "F_beta"]


def build_report_table(reports: Iterable[EvalReport]) -> pd.DataFrame:
    """Full-set metrics per (dataset, learner), sorted by dataset then learner."""
    rows = [
        {
            "dataset": r.dataset_id,
            "learner": r.model_kind,
            "precision": r.precision,
            "recall": r.recall,
            "f_beta": r.f_beta,
            "f_beta_std": r.f_beta_std,
            "rmse": r.rmse,
            "mae": r.mae,
            "mse": r.mse,
            "train_time_s": r.train_time_s,
            "test_time_s": r.test_time_s,
        }
        for r in reports
    ]
    df = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    return df.sort_values(["dataset", "learner"], kind="stable").reset_index(drop=True)


def build_restricted_table(reports: Iterable[EvalReport]) -> pd.DataFrame:
    """Label-restricted metrics in MAE, RMSE, MSE, Prec, Recall, F_beta order; reports without a restricted part are skipped."""
    rows = []
    for r in reports:
        sub = r.restricted
        if sub is None:
            continue
        rows.append(
            {
                "dataset": r.dataset_id,
                "learner": r.model_kind,
                "restrict_m": r.restricted_to_m,
                "MAE": sub.mae,
                "RMSE": sub.rmse,
                "MSE": sub.mse,
                "Prec": sub.precision,
                "Recall": sub.recall,
                "F_beta": sub.f_beta,
            }
        )
    df = pd.DataFrame(rows, columns=RESTRICTED_COLUMNS)
    return df.sort_values(["dataset", "learner"], kind="stable").reset_index(drop=True)


def load_reports(paths: Sequence[Union[str, Path]]) -> List[EvalReport]:
    out: List[EvalReport] = []
    for p in paths:
        doc = read_json(p)
        try:
            out.append(EvalReport.from_dict(doc))
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(p, f"not an evaluation report: {e}") from e
    return out


def write_report(
    reports: Sequence[EvalReport],
    out_dir: Union[str, Path],
    *,
    lock_timeout_s: float = 30.0,
) -> Tuple[Path, Path]:
    out = Path(out_dir)
    full = write_frame(out / "report.csv", build_report_table(reports), lock_timeout_s=lock_timeout_s)
    restricted = write_frame(out / "report_restricted.csv", build_restricted_table(reports), lock_timeout_s=lock_timeout_s)
    logger.info("Wrote report for %s evaluations to %s", len(reports), out)
    return full, restricted

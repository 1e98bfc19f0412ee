from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd

from backend.config import Config
from backend.sim.metrics import Metrics
from backend.services.simulation_service import REPORT_FILE
from backend.utils.helpers import read_json


def list_runs(base: Optional[Path] = None) -> List[str]:
    """Run directories under base (newest first), i.e. those holding a summary.json."""
    base = Path(base) if base else Config.OUTPUT_DIR
    if not base.exists():
        return []
    runs = [p for p in base.iterdir() if (p / "summary.json").exists()]
    runs.sort(key=lambda p: p.stat().st_mtime, reverse=True)
    return [p.name for p in runs]


def resolve_run(run_id: str, base: Optional[Path] = None) -> Path:
    base = Path(base) if base else Config.OUTPUT_DIR
    run_dir = (base / run_id).resolve()
    if base.resolve() not in run_dir.parents or not (run_dir / "summary.json").exists():
        raise FileNotFoundError(f"unknown run {run_id!r}")
    return run_dir


def load_run(run_dir: Path) -> Dict:
    run_dir = Path(run_dir)
    metrics = Metrics.from_dir(run_dir)
    report_path = run_dir / REPORT_FILE
    return {
        "metrics": metrics,
        "report": read_json(report_path) if report_path.exists() else None,
    }


# -----------------------------
# Chart-ready frames
# -----------------------------
def _float(series: pd.Series) -> pd.Series:
    return series.map(lambda v: None if v is None else float(v)).astype("float64")


def timing_frame(metrics: Metrics) -> pd.DataFrame:
    """Per-round entry/beacon times as floats plus the round duration."""
    df = metrics.rounds
    if df.empty:
        return pd.DataFrame(columns=["entered_first", "entered_last", "beacon_first", "duration"])
    out = pd.DataFrame(
        {
            "entered_first": _float(df["entered_first"]),
            "entered_last": _float(df["entered_last"]),
            "beacon_first": _float(df["beacon_first"]),
        },
    )
    out.index = df["round"].astype("int64")
    out["duration"] = out["entered_first"].diff().shift(-1)
    return out


def notarization_frame(metrics: Metrics) -> pd.DataFrame:
    df = metrics.rounds
    out = pd.DataFrame({"notarized_blocks": df["notarized_blocks"].astype("int64")})
    out.index = df["round"].astype("int64")
    return out


def latency_frame(metrics: Metrics) -> pd.DataFrame:
    """Finalization latency (finalized_at - first notarization) per observer and round."""
    fin = metrics.finality
    blocks = metrics.blocks
    if fin.empty or blocks.empty:
        return pd.DataFrame(columns=["observer", "round", "latency"])
    notarized = dict(zip(blocks["digest"], blocks["first_notarized"]))
    rows = [
        {"observer": row["observer"], "round": row["round"], "latency": float(row["finalized_at"] - notarized[row["digest"]])}
        for row in fin.to_dict("records")
        if notarized.get(row["digest"]) is not None
    ]
    return pd.DataFrame(rows, columns=["observer", "round", "latency"])


def checks_frame(report: Optional[Dict]) -> pd.DataFrame:
    if not report:
        return pd.DataFrame(columns=["name", "status", "safety", "detail"])
    return pd.DataFrame(report["checks"])[["name", "status", "safety", "detail"]]

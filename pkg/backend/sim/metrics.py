"""
Ground-truth collection and run-directory persistence.

The simulator feeds every trace and every send into a GroundTruth; at the
end of a run it is condensed into per-round, per-block, per-observer and
growth tables. Times are kept as exact fractions in memory and written as
"a/b" strings so re-runs produce byte-identical files.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Hashable, Iterable, List, Optional

import pandas as pd

from backend.consensus.finalizer import Observer
from backend.consensus.messages import MessageKind, ProtocolMessage, Trace
from backend.sim.scenario import Scenario
from backend.utils.helpers import fraction_str, read_json, write_json

ROUNDS_COLUMNS = [
    "round",
    "entered_first",
    "entered_last",
    "entered_count",
    "beacon_first",
    "notarized_blocks",
    "normal_operation",
    "best_honest_rank",
    "top_rank_honest",
]
BLOCKS_COLUMNS = ["round", "digest", "owner", "honest_owner", "rank", "first_published", "first_notarized"]
FINALITY_COLUMNS = ["observer", "round", "digest", "owner", "honest_owner", "finalized_at", "confirm_at", "bound"]
GROWTH_COLUMNS = ["replica", "round", "finalized_length"]

_TIME_COLUMNS = {
    "entered_first",
    "entered_last",
    "beacon_first",
    "first_published",
    "first_notarized",
    "finalized_at",
    "confirm_at",
    "bound",
}
_INT_COLUMNS = {"round", "entered_count", "notarized_blocks", "best_honest_rank", "rank", "finalized_length"}
_BOOL_COLUMNS = {"normal_operation", "top_rank_honest", "honest_owner"}


def _min_time(current: Optional[Fraction], at: Fraction) -> Fraction:
    return at if current is None or at < current else current


@dataclass
class GroundTruth:
    """Everything the harness knows that no replica does: who is honest and when things really happened."""

    honest: frozenset
    block_time: Fraction
    enter: Dict[int, Dict[Hashable, Fraction]] = field(default_factory=dict)
    beacon_first: Dict[int, Fraction] = field(default_factory=dict)
    proposals: Dict[bytes, Dict[str, Any]] = field(default_factory=dict)
    published: Dict[bytes, Fraction] = field(default_factory=dict)
    notarized: Dict[bytes, Dict[str, Any]] = field(default_factory=dict)
    growth: List[Dict[str, Any]] = field(default_factory=list)
    early_signatures: List[Dict[str, Any]] = field(default_factory=list)
    invalid: Dict[str, int] = field(default_factory=dict)

    def on_trace(self, at: Fraction, label: Hashable, trace: Trace) -> None:
        r = trace.round
        if trace.event == "enter":
            self.enter.setdefault(r, {}).setdefault(label, at)
            if label in self.honest and r >= 2:
                self.growth.append({"replica": label, "round": r - 1, "finalized_length": int(trace.data)})
        elif trace.event == "beacon":
            self.beacon_first[r] = _min_time(self.beacon_first.get(r), at)
        elif trace.event == "propose":
            d = bytes(trace.digest)
            self.proposals.setdefault(d, {"round": r, "owner": label, "time": at, "rank": trace.data})
        elif trace.event == "sign":
            entered = self.enter.get(r, {}).get(label)
            if label in self.honest and entered is not None and at < entered + self.block_time:
                self.early_signatures.append({"replica": label, "round": r, "time": at, "entered": entered})
        elif trace.event == "notarized":
            d = bytes(trace.digest)
            entry = self.notarized.setdefault(d, {"round": r, "owner": trace.data, "time": at})
            entry["time"] = _min_time(entry["time"], at)
        elif trace.event == "invalid":
            self.invalid[trace.data] = self.invalid.get(trace.data, 0) + 1

    def on_send(self, at: Fraction, message: ProtocolMessage) -> None:
        if message.kind is MessageKind.BLOCK_PROPOSAL:
            d = bytes(message.body.digest)
        elif message.kind is MessageKind.NOTARIZED_BLOCK:
            d = bytes(message.body.digest)
        else:
            return
        self.published[d] = _min_time(self.published.get(d), at)

    # -----------------------------
    # Condensed tables
    # -----------------------------
    def rounds_table(self, best_honest_rank: Dict[int, Optional[int]]) -> pd.DataFrame:
        per_round: Dict[int, List[bytes]] = {}
        for d, info in self.notarized.items():
            per_round.setdefault(info["round"], []).append(d)
        last = max([0, *self.enter.keys(), *per_round.keys()])
        rows = []
        for r in range(1, last + 1):
            honest_entries = [t for label, t in self.enter.get(r, {}).items() if label in self.honest]
            count = len(per_round.get(r, []))
            d = best_honest_rank.get(r)
            rows.append(
                {
                    "round": r,
                    "entered_first": min(honest_entries) if honest_entries else None,
                    "entered_last": max(honest_entries) if honest_entries else None,
                    "entered_count": len(honest_entries),
                    "beacon_first": self.beacon_first.get(r),
                    "notarized_blocks": count,
                    "normal_operation": count == 1,
                    "best_honest_rank": d,
                    "top_rank_honest": d == 0,
                }
            )
        return pd.DataFrame(rows, columns=ROUNDS_COLUMNS, dtype=object)

    def blocks_table(self) -> pd.DataFrame:
        rows = []
        for d, info in self.notarized.items():
            proposal = self.proposals.get(d, {})
            rows.append(
                {
                    "round": info["round"],
                    "digest": d.hex(),
                    "owner": info["owner"],
                    "honest_owner": info["owner"] in self.honest,
                    "rank": proposal.get("rank"),
                    "first_published": self.published.get(d),
                    "first_notarized": info["time"],
                }
            )
        rows.sort(key=lambda row: (row["round"], row["digest"]))
        return pd.DataFrame(rows, columns=BLOCKS_COLUMNS, dtype=object)

    def growth_table(self) -> pd.DataFrame:
        rows = sorted(self.growth, key=lambda row: (row["round"], str(row["replica"])))
        return pd.DataFrame(rows, columns=GROWTH_COLUMNS, dtype=object)


def finality_rows(name: str, observer: Observer, honest: Iterable[Hashable], delta: Fraction) -> List[Dict[str, Any]]:
    honest = set(honest)
    rows = []
    for ev in observer.events:
        if ev.round == 0:
            continue
        confirm = observer.bucket_first_fill.get(ev.round + 1)
        rows.append(
            {
                "observer": name,
                "round": ev.round,
                "digest": ev.digest.hex(),
                "owner": ev.owner,
                "honest_owner": ev.owner in honest,
                "finalized_at": ev.time,
                "confirm_at": confirm,
                "bound": None if confirm is None else confirm + 2 * delta,
            }
        )
    return rows


# =========================================================
# Persistence
# =========================================================
def _cell(value: Any) -> str:
    if value is None or (isinstance(value, float) and pd.isna(value)):
        return ""
    if isinstance(value, Fraction):
        return fraction_str(value)
    return str(value)


def _to_csv(df: pd.DataFrame, path: Path) -> None:
    out = pd.DataFrame({col: [_cell(v) for v in df[col]] for col in df.columns}, columns=list(df.columns))
    path.parent.mkdir(parents=True, exist_ok=True)
    out.to_csv(path, index=False)


def _parse_cell(col: str, raw: str) -> Any:
    if raw == "":
        return None
    if col in _TIME_COLUMNS:
        return Fraction(raw)
    if col in _INT_COLUMNS:
        return int(raw)
    if col in _BOOL_COLUMNS:
        return raw == "True"
    if col in ("owner", "replica") and raw.lstrip("-").isdigit():
        return int(raw)
    return raw


def _from_csv(path: Path, columns: List[str]) -> pd.DataFrame:
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if df.empty:
        return pd.DataFrame(columns=columns, dtype=object)
    parsed = {col: pd.Series([_parse_cell(col, raw) for raw in df[col]], dtype=object) for col in df.columns}
    return pd.DataFrame(parsed, columns=list(df.columns))


@dataclass
class Metrics:
    scenario: Scenario
    rounds: pd.DataFrame
    blocks: pd.DataFrame
    finality: pd.DataFrame
    growth: pd.DataFrame
    summary: Dict[str, Any]
    finalized_logs: Dict[str, List[str]] = field(default_factory=dict)

    def observer_names(self) -> List[str]:
        return sorted(self.summary.get("observers", {}))

    def write(self, out_dir: Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / "scenario.json", self.scenario.to_dict())
        _to_csv(self.rounds, out_dir / "rounds.csv")
        _to_csv(self.blocks, out_dir / "blocks.csv")
        _to_csv(self.finality, out_dir / "finality.csv")
        _to_csv(self.growth, out_dir / "growth.csv")
        write_json(out_dir / "summary.json", self.summary)
        log_dir = out_dir / "finalized"
        log_dir.mkdir(exist_ok=True)
        for name, lines in sorted(self.finalized_logs.items()):
            (log_dir / f"{name}.log").write_text("\n".join(lines) + "\n", encoding="utf-8")
        return out_dir

    @classmethod
    def from_dir(cls, run_dir: Path) -> "Metrics":
        run_dir = Path(run_dir)
        if not (run_dir / "summary.json").exists():
            raise FileNotFoundError(f"no metrics found in {run_dir}")
        logs = {}
        log_dir = run_dir / "finalized"
        if log_dir.exists():
            for path in sorted(log_dir.glob("*.log")):
                logs[path.stem] = path.read_text(encoding="utf-8").splitlines()
        return cls(
            scenario=Scenario.from_dict(read_json(run_dir / "scenario.json")),
            rounds=_from_csv(run_dir / "rounds.csv", ROUNDS_COLUMNS),
            blocks=_from_csv(run_dir / "blocks.csv", BLOCKS_COLUMNS),
            finality=_from_csv(run_dir / "finality.csv", FINALITY_COLUMNS),
            growth=_from_csv(run_dir / "growth.csv", GROWTH_COLUMNS),
            summary=read_json(run_dir / "summary.json"),
            finalized_logs=logs,
        )

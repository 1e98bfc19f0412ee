"""
Checks a completed run against the protocol's timing, finality and chain bounds.

Every check returns a dict {name, status, safety, detail, witness}. status is
"pass", "fail", "skipped" (hypotheses of the bound not met by the scenario)
or "info" (reported, never asserted). Only checks with safety=True decide the
exit code.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, List, Optional

import numpy as np

from backend.sim.metrics import Metrics
from backend.utils.helpers import get_logger, parse_fraction

logger = get_logger("theorems")

PASS, FAIL, SKIPPED, INFO = "pass", "fail", "skipped", "info"


def _check(
    name: str,
    status: str,
    detail: str,
    safety: bool = False,
    witness: Optional[Dict[str, Any]] = None,
    **extra: Any,
) -> Dict[str, Any]:
    out = {"name": name, "status": status, "safety": safety, "detail": detail, "witness": witness}
    out.update(extra)
    return out


def _first_failure(rows: Iterable[Dict[str, Any]], ok: Callable[[Dict[str, Any]], bool]):
    checked = 0
    for row in rows:
        checked += 1
        if not ok(row):
            return checked, row
    return checked, None


def _verdict(name: str, rows: List[Dict[str, Any]], ok, describe: str, safety: bool = False) -> Dict[str, Any]:
    if not rows:
        return _check(name, SKIPPED, f"no rows to check ({describe})", safety)
    checked, bad = _first_failure(rows, ok)
    if bad is None:
        return _check(name, PASS, f"{checked} rows satisfy {describe}", safety)
    return _check(name, FAIL, f"violated: {describe}", safety, witness=bad)


class TheoremChecker:
    def __init__(self, metrics: Metrics):
        self.metrics = metrics
        self.scenario = s = metrics.scenario
        self.summary = metrics.summary
        self.delta: Fraction = s.delta
        self.block_time: Fraction = s.block_time
        self.rounds: Dict[int, Dict[str, Any]] = {row["round"]: row for row in metrics.rounds.to_dict("records")}
        self.honest = set(self.summary.get("honest", []))
        self.slow_blocks = self.block_time >= 3 * self.delta
        # more Byzantine replicas than |U|/beta: honest majorities are no longer likely
        self.overloaded = len(s.byzantine) * s.beta > s.universe_size

    # -----------------------------
    # Helpers
    # -----------------------------
    def _timing_skip(self, name: str, need_3delta: bool = False) -> Optional[Dict[str, Any]]:
        if not self.scenario.synchronous:
            return _check(name, SKIPPED, "asynchronous delay model")
        if self.scenario.partitions:
            return _check(name, SKIPPED, "partitioned run")
        if need_3delta and not self.slow_blocks:
            return _check(name, SKIPPED, f"block_time {self.block_time} < 3*delta")
        return None

    def _complete_rounds(self) -> List[int]:
        """Rounds entered by every honest replica whose successor also has an entry."""
        out = []
        for r, row in sorted(self.rounds.items()):
            nxt = self.rounds.get(r + 1)
            if row["entered_first"] is None or nxt is None or nxt["entered_first"] is None:
                continue
            out.append(r)
        return out

    def _hypothesis_observers(self) -> List[str]:
        return [name for name, info in sorted(self.summary.get("observers", {}).items()) if info.get("hypothesis")]

    # -----------------------------
    # Round timing
    # -----------------------------
    def entry_spread(self) -> Dict[str, Any]:
        name = "entry_spread"
        skip = self._timing_skip(name)
        if skip:
            return skip
        full = len(self.honest)
        rows = [
            {"round": r, "entered_first": row["entered_first"], "entered_last": row["entered_last"]}
            for r, row in sorted(self.rounds.items())
            if row["entered_first"] is not None and row["entered_count"] == full
        ]
        d = self.delta
        return _verdict(name, rows, lambda x: x["entered_last"] <= x["entered_first"] + d, "last entry <= first entry + delta")

    def round_skew(self) -> Dict[str, Any]:
        name = "round_skew"
        skip = self._timing_skip(name)
        if skip:
            return skip
        if self.block_time < self.delta:
            return _check(name, SKIPPED, "block_time < delta")
        gap = self.block_time - self.delta
        rows = []
        for r in self._complete_rounds():
            row = self.rounds[r]
            if row["entered_count"] == len(self.honest):
                rows.append({"round": r, "entered_last": row["entered_last"], "next_first": self.rounds[r + 1]["entered_first"]})
        return _verdict(
            name,
            rows,
            lambda x: x["entered_last"] + gap <= x["next_first"],
            "last entry of r + (block_time - delta) <= first entry of r+1",
        )

    def beacon_latency(self) -> Dict[str, Any]:
        name = "beacon_latency"
        skip = self._timing_skip(name)
        if skip:
            return skip
        d = self.delta
        rows = [
            {"round": r, "entered_first": row["entered_first"], "beacon_first": row["beacon_first"]}
            for r, row in sorted(self.rounds.items())
            if row["entered_first"] is not None and row["beacon_first"] is not None
        ]
        return _verdict(name, rows, lambda x: x["beacon_first"] <= x["entered_first"] + 2 * d, "beacon <= first entry + 2*delta")

    def minimal_progress(self) -> Dict[str, Any]:
        name = "minimal_progress"
        skip = self._timing_skip(name, need_3delta=True)
        if skip:
            return skip
        rows = []
        for r in self._complete_rounds():
            row = self.rounds[r]
            if row["best_honest_rank"] is None:
                continue
            rows.append(
                {
                    "round": r,
                    "best_honest_rank": row["best_honest_rank"],
                    "entered_first": row["entered_first"],
                    "next_first": self.rounds[r + 1]["entered_first"],
                    "bound": row["entered_first"] + self.block_time + (row["best_honest_rank"] + 2) * self.delta,
                }
            )
        return _verdict(name, rows, lambda x: x["next_first"] <= x["bound"], "next first entry <= first entry + block_time + (d+2)*delta")

    def progress_top_rank(self) -> Dict[str, Any]:
        """Tighter bound for rounds led by an honest top-ranked replica; reported only."""
        name = "progress_top_rank"
        skip = self._timing_skip(name, need_3delta=True)
        if skip:
            return skip
        considered = 0
        within = []
        outside = None
        for r in self._complete_rounds():
            row = self.rounds[r]
            if row["best_honest_rank"] != 0:
                continue
            considered += 1
            bound = row["entered_first"] + self.block_time + self.delta
            if self.rounds[r + 1]["entered_first"] <= bound:
                within.append(r)
            elif outside is None:
                outside = {"round": r, "next_first": self.rounds[r + 1]["entered_first"], "bound": bound}
        return _check(
            name,
            INFO,
            f"{len(within)} of {considered} honest-led rounds within first entry + block_time + delta",
            witness=outside,
        )

    # -----------------------------
    # Notarization
    # -----------------------------
    def normal_operation(self) -> Dict[str, Any]:
        name = "honest_top_rank_single_notarization"
        skip = self._timing_skip(name, need_3delta=True)
        if skip:
            return skip
        horizon = max(self._complete_rounds(), default=0)
        rows = [
            {"round": r, "notarized_blocks": row["notarized_blocks"]}
            for r, row in sorted(self.rounds.items())
            if row["top_rank_honest"] and r <= horizon
        ]
        return _verdict(name, rows, lambda x: x["notarized_blocks"] == 1, "honest top rank => exactly one notarized block")

    def timely_publication(self) -> Dict[str, Any]:
        name = "timely_publication"
        skip = self._timing_skip(name)
        if skip:
            return skip
        rows = []
        for row in self.metrics.blocks.to_dict("records"):
            nxt = self.rounds.get(row["round"] + 1)
            if nxt is None or nxt["entered_last"] is None or nxt["entered_count"] != len(self.honest):
                continue
            rows.append(
                {
                    "round": row["round"],
                    "digest": row["digest"],
                    "first_published": row["first_published"],
                    "leave_last": nxt["entered_last"],
                }
            )
        return _verdict(
            name,
            rows,
            lambda x: x["first_published"] is not None and x["first_published"] <= x["leave_last"],
            "notarized block published before the last honest replica leaves its round",
        )

    def signature_timing(self) -> Dict[str, Any]:
        early = self.summary.get("early_signatures", [])
        if early:
            return _check("signature_timing", FAIL, f"{len(early)} honest signatures before block_time", witness=early[0])
        return _check("signature_timing", PASS, "no honest signature before block_time elapsed")

    # -----------------------------
    # Finality
    # -----------------------------
    def finality_latency(self) -> Dict[str, Any]:
        name = "finality_latency"
        skip = self._timing_skip(name)
        if skip:
            return skip
        eligible = set()
        for obs, info in self.summary.get("observers", {}).items():
            if info["mode"] == "two-round" or parse_fraction(info["T"]) <= 2 * self.delta:
                if info.get("hypothesis"):
                    eligible.add(obs)
        if not eligible:
            return _check(name, SKIPPED, "no observer with 2*delta finalization")
        rows = [
            row
            for row in self.metrics.finality.to_dict("records")
            if row["observer"] in eligible
            and row["bound"] is not None
            and self.rounds.get(row["round"], {}).get("normal_operation")
        ]
        return _verdict(name, rows, lambda x: x["finalized_at"] <= x["bound"], "finalized by first next-round notarization + 2*delta")

    def consistency(self) -> Dict[str, Any]:
        """Every finalization event of every observer agrees on the block of its round."""
        name = "consistency"
        observers = set(self._hypothesis_observers())
        if not observers:
            return _check(name, SKIPPED, "no observer satisfies the finalization hypothesis", safety=True)
        seen: Dict[int, Dict[str, Any]] = {}
        events = 0
        for row in self.metrics.finality.to_dict("records"):
            if row["observer"] not in observers:
                continue
            events += 1
            prior = seen.setdefault(row["round"], row)
            if prior["digest"] != row["digest"]:
                witness = {"round": row["round"], "first": prior, "conflicting": row}
                return _check(name, FAIL, "two observers finalized different blocks for one round", True, witness)
        return _check(name, PASS, f"{events} finalization events across {len(observers)} observers agree", True)

    def _append_only(self, name: str, observers: List[str], safety: bool) -> Dict[str, Any]:
        if not observers:
            return _check(name, SKIPPED, "no observer in scope", safety)
        info = self.summary.get("observers", {})
        for obs in observers:
            violations = info[obs].get("violations", [])
            if violations:
                witness = dict(violations[0], observer=obs)
                return _check(name, FAIL, f"observer {obs} replaced part of its finalized chain", safety, witness)
        return _check(name, PASS, f"{len(observers)} observers only ever appended", safety)

    def append_only(self) -> Dict[str, Any]:
        return self._append_only("append_only", self._hypothesis_observers(), safety=True)

    def append_only_unguarded(self) -> Dict[str, Any]:
        """Observers finalizing before 2*delta; violations here are expected, not safety failures."""
        outside = [
            name for name, info in sorted(self.summary.get("observers", {}).items()) if not info.get("hypothesis")
        ]
        return self._append_only("append_only_unguarded", outside, safety=False)

    # -----------------------------
    # Chain properties
    # -----------------------------
    def growth(self) -> Dict[str, Any]:
        name = "growth"
        skip = self._timing_skip(name, need_3delta=True)
        if skip:
            return skip
        k = int(self.summary["growth_k"])
        rho = Fraction(1, 2 ** self.scenario.growth_rho_log2)
        rows = self.metrics.growth.to_dict("records")
        if not rows:
            return _check(name, SKIPPED, "no growth samples")
        ok = np.array([row["finalized_length"] - 1 >= row["round"] - k for row in rows], dtype=bool)
        fraction = Fraction(int(ok.sum()), len(ok))
        witness = None if ok.all() else rows[int(np.argmin(ok))]
        status = PASS if fraction >= 1 - rho else FAIL
        return _check(
            name,
            status,
            f"{int(ok.sum())}/{len(ok)} samples with finalized height >= round - {k} (need fraction >= 1 - {rho})",
            witness=witness,
            k=k,
            fraction=fraction,
        )

    def quality(self) -> Dict[str, Any]:
        name = "quality"
        s = self.scenario
        if self.overloaded:
            return _check(name, SKIPPED, "adversary count violates the honesty assumption")
        eta = s.quality_eta
        bound = (1 - Fraction(len(s.byzantine), s.universe_size)) * (1 - s.quality_epsilon)
        worst = None
        windows = 0
        for obs in self._hypothesis_observers():
            lines = self.metrics.finalized_logs.get(obs, [])[1:]
            if len(lines) < eta:
                continue
            honest = np.array([_owner(line) in self.honest for line in lines], dtype=np.int64)
            sums = np.convolve(honest, np.ones(eta, dtype=np.int64), mode="valid")
            windows += len(sums)
            idx = int(np.argmin(sums))
            low = Fraction(int(sums[idx]), eta)
            if worst is None or low < worst["fraction"]:
                worst = {"observer": obs, "start_height": idx + 1, "fraction": low}
        if worst is None:
            return _check(name, SKIPPED, f"no finalized chain with at least {eta} blocks")
        status = PASS if worst["fraction"] >= bound else FAIL
        return _check(
            name,
            status,
            f"lowest honest fraction {worst['fraction']} over {windows} windows of {eta} (bound {bound})",
            witness=worst if status == FAIL else None,
            bound=bound,
            lowest=worst["fraction"],
        )

    # -----------------------------
    # Beacon and partitions
    # -----------------------------
    def _beacon_times(self) -> List[Fraction]:
        return sorted(row["beacon_first"] for row in self.rounds.values() if row["beacon_first"] is not None)

    def beacon_stalls(self) -> Dict[str, Any]:
        limit = self.block_time + 4 * self.delta
        times = [Fraction(0), *self._beacon_times()]
        stalls = [
            {"from": a, "to": b, "length": b - a}
            for a, b in zip(times, times[1:])
            if b - a > limit
        ]
        return _check(
            "beacon_stalls",
            INFO,
            f"{len(stalls)} gaps longer than block_time + 4*delta between beacon outputs",
            stalls=stalls,
        )

    def partitions(self) -> List[Dict[str, Any]]:
        out = []
        groups = self.summary.get("groups", [])
        grace = self.delta
        window = 2 * (self.block_time + 4 * self.delta)
        times = self._beacon_times()
        for idx, part in enumerate(self.summary.get("partitions", [])):
            name = f"partition_{idx}"
            start, end = parse_fraction(part["start"]), parse_fraction(part["end"])
            comps = [set(c) for c in part["components"]]
            quorate = [all(len(c & set(g["members"])) >= g["threshold"] for g in groups) for c in comps]
            stalled = [all(len(c & set(g["members"])) < g["threshold"] for g in groups) for c in comps]
            during = [t for t in times if start + grace <= t < end]
            resumed = next((t for t in times if t >= end), None)
            snap = part.get("snapshots", {})
            before, after = snap.get("start", {}), snap.get("end", {})
            advance = {
                label: after[label] - before[label]
                for label in sorted(after)
                if label in before and int(label) in self.honest
            }
            facts = {"beacons_during": len(during), "resumed_at": resumed, "advance": advance}
            if all(stalled):
                if during:
                    out.append(_check(name, FAIL, "beacon produced while no component could sign", witness=dict(facts, at=during[0])))
                elif resumed is None or resumed > end + window:
                    out.append(_check(name, FAIL, "beacon did not resume within two rounds of heal", witness=facts))
                else:
                    out.append(_check(name, PASS, f"beacon stalled and resumed at {resumed}", **facts))
                continue
            problems = []
            for comp, ok_q, ok_s in zip(comps, quorate, stalled):
                moved = [advance.get(str(label)) for label in sorted(comp) if str(label) in advance]
                moved = [m for m in moved if m is not None]
                if not moved:
                    continue
                if ok_s and max(moved) > 1:
                    problems.append(f"minority component {sorted(comp)} advanced {max(moved)} rounds")
                if ok_q and end - start >= window and min(moved) < 1:
                    problems.append(f"quorate component {sorted(comp)} did not advance")
            if problems:
                out.append(_check(name, FAIL, "; ".join(problems), witness=facts))
            else:
                out.append(_check(name, PASS, "quorate components advanced, minorities stalled", **facts))
        return out

    def liveness(self) -> Dict[str, Any]:
        name = "liveness"
        if not self.slow_blocks:
            return _check(name, SKIPPED, f"block_time {self.block_time} < 3*delta")
        if self.overloaded:
            return _check(name, SKIPPED, "adversary count violates the honesty assumption")
        target = self.summary["rounds_target"]
        reached = self.summary["min_honest_round"]
        if reached > target:
            return _check(name, PASS, f"every honest replica passed round {target}")
        return _check(
            name,
            FAIL,
            f"slowest honest replica stopped in round {reached} of {target}",
            witness={"final_rounds": self.summary.get("final_rounds"), "truncated": self.summary.get("truncated")},
        )

    # -----------------------------
    # Report
    # -----------------------------
    def run(self) -> Dict[str, Any]:
        checks = [
            self.entry_spread(),
            self.round_skew(),
            self.beacon_latency(),
            self.minimal_progress(),
            self.progress_top_rank(),
            self.normal_operation(),
            self.timely_publication(),
            self.signature_timing(),
            self.finality_latency(),
            self.consistency(),
            self.append_only(),
            self.append_only_unguarded(),
            self.growth(),
            self.quality(),
            self.beacon_stalls(),
            *self.partitions(),
            self.liveness(),
        ]
        counts = {status: sum(1 for c in checks if c["status"] == status) for status in (PASS, FAIL, SKIPPED, INFO)}
        safety_failures = [c["name"] for c in checks if c["safety"] and c["status"] == FAIL]
        report = {
            "scenario": self.scenario.name,
            "seed": self.scenario.seed,
            "counts": counts,
            "passed": counts[FAIL] == 0,
            "safety_passed": not safety_failures,
            "safety_failures": safety_failures,
            "checks": checks,
        }
        for c in checks:
            if c["status"] == FAIL:
                logger.warning(f"⚠️ {self.scenario.name}: {c['name']} failed: {c['detail']}")
        return report


def _owner(line: str) -> Any:
    owner = line.split()[2]
    return int(owner) if owner.lstrip("-").isdigit() else owner


def assert_theorems(metrics: Metrics) -> Dict[str, Any]:
    return TheoremChecker(metrics).run()


def exit_code(report: Dict[str, Any]) -> int:
    return 0 if report["safety_passed"] else 1

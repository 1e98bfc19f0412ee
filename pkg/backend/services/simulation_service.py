from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
from joblib import Parallel, delayed

from backend.config import Config
from backend.consensus.primitives import hash_digest
from backend.sim.engine import run_scenario
from backend.sim.metrics import Metrics
from backend.sim.scenario import AdversaryBehavior, ObserverSpec, Scenario
from backend.sim.theorems import assert_theorems
from backend.utils.helpers import dumps_canonical, get_logger, read_json, write_json

logger = get_logger("simulation")

REPORT_FILE = "report.json"

# -----------------------------
# CI matrix axes
# -----------------------------
MATRIX_SIZES = (4, 7, 10)
MATRIX_BLOCK_TIMES = (3, 5)  # multiples of delta
MATRIX_BEHAVIORS = (
    ("equivocate", {}),
    ("withhold-signatures", {}),
    ("withhold-notarization", {"delay": 0}),
    ("withhold-notarization", {"delay": 1}),
    ("withhold-notarization", {"delay": 5}),
    ("selfish-chain", {}),
    ("crash", {"at": 0}),
    ("beacon-abstain", {}),
)


def run_id_for(scenario: Scenario) -> str:
    """Stable id: scenario name, seed and a short digest of the full scenario."""
    digest = hash_digest(dumps_canonical(scenario.to_dict()).encode("utf-8")).hex()[:10]
    return f"{scenario.name}-s{scenario.seed}-{digest}"


def run_and_store(scenario: Scenario, out_dir: Optional[Path] = None) -> Dict[str, Any]:
    """Simulate, persist metrics and the theorem report, and return both summaries."""
    out_dir = Path(out_dir) if out_dir else Config.OUTPUT_DIR / run_id_for(scenario)
    try:
        metrics = run_scenario(scenario)
        metrics.write(out_dir)
        report = assert_theorems(metrics)
        write_json(out_dir / REPORT_FILE, report)
    except (ValueError, LookupError):
        raise
    except Exception as e:
        logger.error(f"Simulation of '{scenario.name}' failed: {e}", exc_info=True)
        raise RuntimeError(f"Failed to run scenario '{scenario.name}': {e}") from e

    logger.info(f"Run stored in {out_dir}")
    return {
        "run_id": out_dir.name,
        "out_dir": str(out_dir),
        "summary": metrics.summary,
        "report": report,
    }


def check_run(run_dir: Path) -> Dict[str, Any]:
    """Re-evaluate the theorem report from a stored run and rewrite report.json."""
    metrics = Metrics.from_dir(run_dir)
    report = assert_theorems(metrics)
    write_json(Path(run_dir) / REPORT_FILE, report)
    return report


def load_report(run_dir: Path) -> Dict[str, Any]:
    path = Path(run_dir) / REPORT_FILE
    if not path.exists():
        raise FileNotFoundError(f"no report in {run_dir}")
    return read_json(path)


# -----------------------------
# Scenario matrix
# -----------------------------
def _fault_counts(n: int) -> List[int]:
    return sorted({0, 1, (n - 1) // 2})


def scenario_matrix(rounds: int = 100, seed: int = 0) -> List[Scenario]:
    """n x f x behaviour x block_time grid; cells with f*beta >= n run with the assumption waived."""
    cells: List[Scenario] = []
    for n in MATRIX_SIZES:
        for f in _fault_counts(n):
            behaviors = [("honest", {})] if f == 0 else list(MATRIX_BEHAVIORS)
            for kind, params in behaviors:
                for bt in MATRIX_BLOCK_TIMES:
                    tag = kind + "".join(f"-{k}{v}" for k, v in params.items())
                    byzantine = tuple(
                        AdversaryBehavior(replica=label, kind=kind, params=tuple(sorted(params.items())))
                        for label in range(n - f + 1, n + 1)
                    ) if f else ()
                    cells.append(
                        Scenario(
                            name=f"matrix-n{n}-f{f}-{tag}-bt{bt}",
                            universe_size=n,
                            group_size=n,
                            delta=Fraction(1),
                            block_time=Fraction(bt),
                            finalization_t=Fraction(2),
                            rounds=rounds,
                            byzantine=byzantine,
                            observers=(ObserverSpec(name="watcher"),),
                            seed=seed,
                            allow_assumption_violation=f * 3 >= n,
                        )
                    )
    return cells


def _run_cell(scenario: Scenario, out_dir: Path) -> Dict[str, Any]:
    result = run_and_store(scenario, out_dir / scenario.name)
    report = result["report"]
    return {
        "cell": scenario.name,
        "n": scenario.universe_size,
        "f": len(scenario.byzantine),
        "behavior": scenario.byzantine[0].kind if scenario.byzantine else "honest",
        "block_time": str(scenario.block_time),
        "rounds": result["summary"]["min_honest_round"] - 1,
        "safety_passed": report["safety_passed"],
        "failed": ",".join(c["name"] for c in report["checks"] if c["status"] == "fail"),
    }


def run_matrix(out_dir: Path, rounds: int = 100, jobs: Optional[int] = None, seed: int = 0) -> pd.DataFrame:
    out_dir = Path(out_dir)
    cells = scenario_matrix(rounds, seed)
    jobs = Config.N_JOBS if jobs is None else jobs
    logger.info(f"Running {len(cells)} matrix cells with {jobs} job(s)")
    rows = Parallel(n_jobs=jobs)(delayed(_run_cell)(cell, out_dir) for cell in cells)
    frame = pd.DataFrame(rows)
    out_dir.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out_dir / "matrix.csv", index=False)
    unsafe = frame[~frame["safety_passed"]]
    if len(unsafe):
        logger.warning(f"⚠️ {len(unsafe)} matrix cells failed a safety check")
    return frame

from fractions import Fraction
from typing import Dict, List, Optional

import pandas as pd

from backend.consensus.committee import GroupSizeQuery, growth_parameter
from backend.utils.helpers import get_logger, parse_fraction

logger = get_logger("groupsize")

# -----------------------------
# Reference grid
# -----------------------------
TABLE_BETAS = (3, 4, 5)
TABLE_RHO_LOG2 = (40, 64, 80, 128)
TABLE_POPULATION = 10_000


def solve(beta, rho_log2: int, population: Optional[int] = None) -> Dict:
    """Minimal group size for a 1/beta Byzantine fraction and failure probability 2^-rho_log2."""
    beta = parse_fraction(beta, "beta")
    if rho_log2 < 1:
        raise ValueError("rho_log2 must be >= 1")
    rho = Fraction(1, 2 ** rho_log2)
    n = GroupSizeQuery(beta=beta, rho=rho, population=population).solve()
    return {
        "beta": str(beta),
        "rho_log2": rho_log2,
        "population": population,
        "distribution": "binomial" if population is None else "hypergeometric",
        "group_size": n,
        "threshold": n // 2 + 1,
        "growth_k": growth_parameter(beta, rho),
    }


def table(population: Optional[int] = TABLE_POPULATION) -> pd.DataFrame:
    """Rows rho = 2^-40 .. 2^-128, columns beta = 3, 4, 5."""
    rows: List[Dict] = []
    for rho_log2 in TABLE_RHO_LOG2:
        row = {"rho_log2": rho_log2}
        for beta in TABLE_BETAS:
            row[f"beta={beta}"] = solve(beta, rho_log2, population)["group_size"]
        rows.append(row)
    kind = "hypergeometric" if population else "binomial"
    logger.info(f"Computed {kind} group-size table ({len(rows)} rows)")
    return pd.DataFrame(rows).set_index("rho_log2")


def both_tables() -> Dict[str, pd.DataFrame]:
    return {"hypergeometric": table(TABLE_POPULATION), "binomial": table(None)}

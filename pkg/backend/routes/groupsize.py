from flask import Blueprint, jsonify, request

from backend.services.groupsize_service import both_tables, solve
from backend.utils.helpers import get_logger

groupsize_bp = Blueprint("groupsize", __name__)
logger = get_logger("routes.groupsize")


# -----------------------------
# GET /api/groupsize
# -----------------------------
@groupsize_bp.route("", methods=["GET"])
def groupsize():
    """Query params: beta (number or a/b), rho_log2 (int), population (optional int)."""
    beta = request.args.get("beta")
    rho_log2 = request.args.get("rho_log2", type=int)
    population = request.args.get("population", type=int)
    if not beta or rho_log2 is None:
        return jsonify(success=False, error="beta and rho_log2 are required"), 400
    try:
        return jsonify(success=True, data=solve(beta, rho_log2, population)), 200
    except ValueError as e:
        return jsonify(success=False, error=str(e)), 400


# -----------------------------
# GET /api/groupsize/table
# -----------------------------
@groupsize_bp.route("/table", methods=["GET"])
def groupsize_table():
    tables = both_tables()
    data = {
        kind: {str(rho): {col: int(v) for col, v in row.items()} for rho, row in df.iterrows()}
        for kind, df in tables.items()
    }
    logger.info("Served group-size tables")
    return jsonify(success=True, data=data), 200

import io
from fractions import Fraction

from flask import Blueprint, Response, jsonify, request

from backend.errors import ScenarioError
from backend.services.report_service import load_run, resolve_run
from backend.services.simulation_service import load_report, run_and_store
from backend.sim.scenario import Scenario
from backend.utils.helpers import get_logger

simulations_bp = Blueprint("simulations", __name__)
logger = get_logger("routes.simulations")

# Synchronous runs only; larger scenarios belong on the CLI.
MAX_API_ROUNDS = 500


# -----------------------------
# POST /api/simulations
# -----------------------------
@simulations_bp.route("", methods=["POST"])
def create_simulation():
    data = request.get_json(silent=True)
    if not data:
        return jsonify(success=False, error="Malformed request. Send the scenario as application/json."), 400
    try:
        scenario = Scenario.from_dict(data)
    except ScenarioError as e:
        return jsonify(success=False, error=str(e)), 400
    if scenario.rounds > MAX_API_ROUNDS:
        return jsonify(success=False, error=f"rounds must be <= {MAX_API_ROUNDS} over the API"), 400

    result = run_and_store(scenario)
    report = result["report"]
    logger.info(f"Simulation {result['run_id']} finished (safety_passed={report['safety_passed']})")
    return jsonify(
        success=True,
        data={
            "run_id": result["run_id"],
            "safety_passed": report["safety_passed"],
            "counts": report["counts"],
            "min_honest_round": result["summary"]["min_honest_round"],
        },
    ), 201


# -----------------------------
# GET /api/simulations/<run_id>/report
# -----------------------------
@simulations_bp.route("/<run_id>/report", methods=["GET"])
def simulation_report(run_id: str):
    try:
        run_dir = resolve_run(run_id)
        return jsonify(success=True, data=load_report(run_dir)), 200
    except FileNotFoundError:
        return jsonify(success=False, error=f"Run {run_id} not found"), 404


# -----------------------------
# GET /api/simulations/<run_id>/rounds
# -----------------------------
@simulations_bp.route("/<run_id>/rounds", methods=["GET"])
def simulation_rounds(run_id: str):
    """Per-round metrics as JSON, or as a CSV download with export=true."""
    export_csv = request.args.get("export", "false").lower() == "true"
    limit = min(max(request.args.get("limit", 1000, type=int), 1), 100_000)
    try:
        run_dir = resolve_run(run_id)
    except FileNotFoundError:
        return jsonify(success=False, error=f"Run {run_id} not found"), 404

    rounds = load_run(run_dir)["metrics"].rounds.head(limit)
    if export_csv:
        output = io.StringIO()
        rounds.to_csv(output, index=False)
        logger.info(f"CSV rounds export generated for run '{run_id}'")
        return Response(
            output.getvalue(),
            mimetype="text/csv; charset=utf-8",
            headers={"Content-Disposition": f"attachment; filename={run_id}_rounds.csv"},
        )

    records = [
        {k: (str(v) if isinstance(v, Fraction) else v) for k, v in row.items()}
        for row in rounds.to_dict("records")
    ]
    return jsonify(success=True, data={"run_id": run_id, "count": len(records), "records": records}), 200

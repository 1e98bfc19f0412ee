import sys

from flask import Flask, jsonify
from flask_cors import CORS
from werkzeug.exceptions import HTTPException

from backend.config import Config
from backend.errors import ScenarioError
from backend.utils.helpers import get_logger

logger = get_logger("api")


def create_app() -> Flask:
    # -----------------------------
    # Flask App
    # -----------------------------
    app = Flask(__name__)
    app.config["OUTPUT_DIR"] = str(Config.OUTPUT_DIR)

    CORS(
        app,
        supports_credentials=True,
        resources={r"/api/*": {"origins": Config.ALLOWED_ORIGINS}},
    )

    # -----------------------------
    # Register Blueprints
    # -----------------------------
    from backend.routes.groupsize import groupsize_bp
    from backend.routes.simulations import simulations_bp

    app.register_blueprint(groupsize_bp, url_prefix="/api/groupsize")
    app.register_blueprint(simulations_bp, url_prefix="/api/simulations")

    # -----------------------------
    # Health Check
    # -----------------------------
    @app.route("/api/health")
    def health_check():
        return jsonify(
            {
                "success": True,
                "message": "Simulator API is running",
                "env": Config.ENV,
                "output_dir": str(Config.OUTPUT_DIR),
            }
        )

    # -----------------------------
    # Global Error Handlers
    # -----------------------------
    @app.errorhandler(ScenarioError)
    @app.errorhandler(ValueError)
    def bad_request(e):
        return jsonify({"success": False, "error": str(e)}), 400

    @app.errorhandler(HTTPException)
    def http_error(e):
        return jsonify({"success": False, "error": e.name}), e.code

    @app.errorhandler(Exception)
    def server_error(e):
        logger.error(f"Unhandled API error: {e}", exc_info=True)
        return jsonify({"success": False, "error": "Internal server error"}), 500

    return app


# -----------------------------
# Run Server
# -----------------------------
if __name__ == "__main__":
    print(f"🚀 Simulator API starting at http://127.0.0.1:{Config.PORT}")
    try:
        create_app().run(host="0.0.0.0", port=Config.PORT, debug=Config.DEBUG)
    except Exception as e:
        print(f"❌ Flask server failed to start: {e}")
        sys.exit(1)

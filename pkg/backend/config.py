import os
from fractions import Fraction
from pathlib import Path

from dotenv import load_dotenv

# =========================================================
# Load environment variables
# =========================================================
load_dotenv()


def _fraction_env(name: str, default: str) -> Fraction:
    raw = os.getenv(name, default)
    try:
        return Fraction(raw)
    except (ValueError, ZeroDivisionError):
        raise SystemExit(f"❌ {name} must be a number or fraction, got {raw!r}")


class Config:
    """
    Central configuration for the threshold-relay simulator.
    Protocol values here are defaults; scenario files override them per run.
    """

    # =====================================================
    # Environment
    # =====================================================
    ENV: str = os.getenv("ENV", "development").lower()

    # =====================================================
    # Base paths
    # =====================================================
    BASE_DIR: Path = Path(__file__).resolve().parent
    PROJECT_DIR: Path = BASE_DIR.parent
    SCENARIOS_DIR: Path = PROJECT_DIR / "scenarios"
    OUTPUT_DIR: Path = Path(os.getenv("OUTPUT_DIR", str(PROJECT_DIR / "runs")))

    # =====================================================
    # Flask / API server settings
    # =====================================================
    PORT: int = int(os.getenv("PORT", "5000"))
    DEBUG: bool = os.getenv("DEBUG", "False").lower() in ("true", "1", "yes")
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO").upper()
    ALLOWED_ORIGINS: str = os.getenv("ALLOWED_ORIGINS", "*")

    # =====================================================
    # Protocol defaults (simulated time units)
    # =====================================================
    DELTA: Fraction = _fraction_env("DELTA", "1")
    BLOCK_TIME: Fraction = _fraction_env("BLOCK_TIME", "3")
    FINALIZATION_T: Fraction = _fraction_env("FINALIZATION_T", "2")
    EPOCH_LENGTH: int = int(os.getenv("EPOCH_LENGTH", "20"))
    M_MAX: int = int(os.getenv("M_MAX", "4"))
    GROUP_LIFETIME: int = int(os.getenv("GROUP_LIFETIME", "4"))
    PARAM_PRESET: str = os.getenv("PARAM_PRESET", "toy").lower()

    # =====================================================
    # Execution
    # =====================================================
    N_JOBS: int = int(os.getenv("N_JOBS", "1"))
    MAX_EVENTS: int = int(os.getenv("MAX_EVENTS", "5000000"))

    # =====================================================
    # Validation
    # =====================================================
    @classmethod
    def validate(cls) -> None:
        missing = []
        invalid = []

        if not cls.LOG_LEVEL:
            missing.append("LOG_LEVEL")
        if cls.LOG_LEVEL and cls.LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            invalid.append(f"LOG_LEVEL={cls.LOG_LEVEL}")

        if missing:
            raise RuntimeError(f"Missing critical config: {', '.join(missing)}")

        if cls.DELTA <= 0:
            invalid.append("DELTA must be > 0")
        if cls.BLOCK_TIME <= 0:
            invalid.append("BLOCK_TIME must be > 0")
        if cls.FINALIZATION_T < 0:
            invalid.append("FINALIZATION_T must be >= 0")
        if cls.EPOCH_LENGTH < 1:
            invalid.append("EPOCH_LENGTH must be >= 1")
        if cls.M_MAX < 1:
            invalid.append("M_MAX must be >= 1")
        if cls.GROUP_LIFETIME < 1:
            invalid.append("GROUP_LIFETIME must be >= 1")
        if cls.PARAM_PRESET not in ("toy", "standard"):
            invalid.append(f"PARAM_PRESET={cls.PARAM_PRESET}")
        if cls.N_JOBS == 0:
            invalid.append("N_JOBS must be non-zero")

        if invalid:
            raise RuntimeError(f"Invalid config: {', '.join(invalid)}")

        if cls.FINALIZATION_T < 2 * cls.DELTA:
            print("⚠️ FINALIZATION_T < 2*DELTA: finality is not guaranteed for default scenarios")

    # =====================================================
    # Debug summary
    # =====================================================
    @classmethod
    def print_summary(cls) -> None:
        print("\n📌 Simulator Config Summary")
        print("--------------------------------------------------")
        print(f"ENV: {cls.ENV}")
        print(f"Output dir: {cls.OUTPUT_DIR}")
        print(f"Scenarios dir: {cls.SCENARIOS_DIR}")
        print(f"Delta: {cls.DELTA}, BlockTime: {cls.BLOCK_TIME}, T: {cls.FINALIZATION_T}")
        print(f"Epoch length: {cls.EPOCH_LENGTH}, m_max: {cls.M_MAX}, lifetime: {cls.GROUP_LIFETIME}")
        print(f"Parameter preset: {cls.PARAM_PRESET}")
        print(f"Jobs: {cls.N_JOBS}, Max events: {cls.MAX_EVENTS}")
        print(f"Port: {cls.PORT}, Debug: {cls.DEBUG}")
        print(f"Log Level: {cls.LOG_LEVEL}")
        print("--------------------------------------------------")

        cls.validate()
        print("✅ Config validation passed\n")


# =========================================================
# Auto-validate on import
# =========================================================
try:
    Config.validate()
except RuntimeError as e:
    raise SystemExit(f"❌ Config validation failed: {e}")


if __name__ == "__main__":
    Config.print_summary()

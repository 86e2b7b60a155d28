from pathlib import Path

from ecoinfer.services.env_loader import get_env_float, get_env_int, get_env_variable_value

# Base directory (outputs, .env lookup)
BASE_DIR = Path(__file__).resolve().parents[1]

# Default worker count for replicates, chains and per-geography maps
DEFAULT_THREADS = get_env_int("EI_THREADS", 1)

# Master seed used when --seed is omitted
DEFAULT_SEED = get_env_int("EI_SEED", 20240601)

# Default directory where run artifacts are written
DEFAULT_OUTPUT = Path(get_env_variable_value("EI_OUTPUT_DIR", str(BASE_DIR / "output")))

DEFAULT_LOG_LEVEL = get_env_variable_value("EI_LOG_LEVEL", "INFO")

# Size of the logarithmic ridge penalty grid
LAMBDA_GRID_POINTS = get_env_int("EI_LAMBDA_POINTS", 50)

# Slack allowed when checking that loaded shares sum to 1 and outcomes lie in [0, 1]
INGEST_TOLERANCE = get_env_float("EI_INGEST_TOLERANCE", 1e-6)

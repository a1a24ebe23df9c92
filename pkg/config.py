# ====================
# config.py
# ====================
from pydantic_settings import BaseSettings, SettingsConfigDict

class Settings(BaseSettings):
	model_config = SettingsConfigDict(
		env_prefix="CALIB_CI_",
		env_file=".env",
		extra="ignore"
	)

	# Worker pool (CALIB_CI_THREADS is the fallback for --threads)
	THREADS: int = 1
	REPLICATION_BATCH_SIZE: int = 50

	# Inference defaults
	ALPHA: float = 0.1
	SEED: int = 0

	# Bin-count rule m = c * n^(2 / (4s + min(k, K - 1)))
	M_SMOOTHNESS: float = 1.0
	M_CONSTANT: float = 1.0

	# Resampling baselines
	BOOT_REPS: int = 1000
	SUBSAMPLE_REPS: int = 1000
	SUBSAMPLE_RATE: str = "sqrt_n"
	TCAL_REPS: int = 1000
	HULC_DELTA: float = 0.0

	# Numerical integration of sigma_0^2
	SIGMA0_RESOLUTION: int = 400
	SIGMA0_MC_SAMPLES: int = 1_000_000

	# Ingestion tolerances
	ROW_SUM_TOLERANCE: float = 1e-6
	CHAMBER_TOLERANCE: float = 1e-9

	LOG_LEVEL: str = "INFO"

	# Versions for report tracking
	TOOL_VERSION: str = "1.0.0"
	SCHEMA_VERSION: int = 1

settings = Settings()

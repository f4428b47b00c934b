import os
import logging

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

from models.experiment import OutputFormat
from services.exceptions import ConfigError

load_dotenv()


class Settings(BaseModel):
    log_level: str = Field("INFO", description="Root logging level")
    threads: int = Field(1, ge=1, description="Default worker count for replicate loops")
    master_seed: int = Field(20240501, ge=0, lt=2**64, description="Default master seed")
    output_format: OutputFormat = Field(OutputFormat.md, description="Default table format")
    solver_max_iterations: int = Field(100, ge=1, description="Newton iteration cap")
    solver_tolerance: float = Field(1e-10, gt=0, description="Newton gradient-norm tolerance")
    max_upload_bytes: int = Field(10 * 1024 * 1024, ge=1, description="Largest CSV accepted over HTTP")


def get_settings() -> Settings:
    env = {
        "log_level": os.getenv("CVRISK_LOG_LEVEL"),
        "threads": os.getenv("CVRISK_THREADS"),
        "master_seed": os.getenv("CVRISK_MASTER_SEED"),
        "output_format": os.getenv("CVRISK_OUTPUT_FORMAT"),
        "solver_max_iterations": os.getenv("CVRISK_SOLVER_MAX_ITER"),
        "solver_tolerance": os.getenv("CVRISK_SOLVER_TOL"),
        "max_upload_bytes": os.getenv("CVRISK_MAX_UPLOAD_BYTES"),
    }
    try:
        return Settings(**{k: v for k, v in env.items() if v is not None})
    except ValidationError as e:
        raise ConfigError(f"Invalid environment configuration: {e}")


def configure_logging(settings: Settings) -> None:
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

import logging
import os
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field

logger = logging.getLogger("modelext")

ENV_PREFIX = "MODELEXT_"


class Settings(BaseModel):
    log_level: str = "WARNING"
    rtol: float = Field(1e-8, gt=0)
    constraint_tol: float = Field(1e-6, gt=0)
    max_iter_factor: int = Field(10, ge=1)
    cluster_tol: float = Field(1e-6, gt=0)
    prune_tol: float = Field(1e-10, gt=0)
    root_tol: float = Field(1e-8, gt=0)
    band_ridge: float = Field(1e-10, ge=0)
    seed: int = Field(0, ge=0)


DEFAULTS = Settings()


def load_settings(env_file: Optional[str] = None) -> Settings:
    """Read ``MODELEXT_*`` overrides from the environment (and a ``.env`` file)."""
    load_dotenv(env_file)
    overrides = {}
    for name in Settings.model_fields:
        value = os.getenv(ENV_PREFIX + name.upper())
        if value is not None:
            overrides[name] = value
    settings = Settings(**overrides)
    logger.debug(f"Loaded settings: {settings.model_dump()}")
    return settings


def configure_logging(log_level: str = "WARNING") -> logging.Logger:
    numeric_level = getattr(logging, log_level.upper(), logging.WARNING)
    if not isinstance(numeric_level, int):
        numeric_level = logging.WARNING
    logger.setLevel(numeric_level)

    if not logger.handlers:
        handler = logging.StreamHandler()
        formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        handler.setFormatter(formatter)
        logger.addHandler(handler)
    return logger

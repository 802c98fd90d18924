"""
Environment Settings

Process-wide settings read from the environment (and an optional .env file).
Experiment parameters live in INI experiment configs, not here.
"""
import logging
from functools import lru_cache
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class Settings(BaseSettings):
    """Settings resolved from RICL_* environment variables"""
    model_config = SettingsConfigDict(env_prefix="RICL_", env_file=".env", extra="ignore")

    log_level: str = "INFO"
    output_dir: str = "runs"

    # Token for the HTTP surface; set a secure random value outside development
    service_token: str = "dev_ricl_token_change_in_production"
    cors_origins: str = "*"
    port: int = 8001


@lru_cache
def get_settings() -> Settings:
    """Cached settings instance"""
    return Settings()


def configure_logging(level: Optional[str] = None) -> None:
    """
    Configure root logging once for an entry point.

    Args:
        level: Level name; falls back to RICL_LOG_LEVEL
    """
    name = (level or get_settings().log_level).upper()
    logging.basicConfig(
        level=getattr(logging, name, logging.INFO),
        format=LOG_FORMAT,
        force=True
    )

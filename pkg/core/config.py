"""
Application configuration management.
"""

from functools import lru_cache
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Settings(BaseSettings):
    """Application settings."""

    model_config = SettingsConfigDict(
        env_prefix="WIENERLAB_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # HTTP surface
    host: str = "0.0.0.0"
    port: int = 8000
    debug: bool = False

    # Parallelism cap for Monte Carlo runs (0 = auto)
    threads: int = 0

    # Gauss-Hermite orders
    gh_order_likelihood: int = 100
    gh_order_moments: int = 40

    # Reproducibility: a fixed constant, never wall-clock
    default_seed: int = 20190101

    # Output formatting
    digits: int = 17

    # Monte Carlo harness
    max_failure_fraction: float = 0.05

    # Logging
    log_level: str = "INFO"
    log_file: Optional[str] = None


@lru_cache()
def get_settings() -> Settings:
    """Get cached application settings."""
    return Settings()

"""
Application configuration and settings.
"""
import os

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


def _default_threads() -> int:
    return max(1, min(os.cpu_count() or 1, 8))


class Settings(BaseSettings):
    """Process-level settings loaded from environment variables."""

    model_config = SettingsConfigDict(env_prefix="HAPTOSIM_", case_sensitive=False)

    app_name: str = "haptosim"
    app_version: str = "1.0.0"

    # Logging
    log_level: str = "INFO"
    log_format: str = "json"  # or "text"

    # Sweep parallelism (HAPTOSIM_THREADS)
    threads: int = Field(default_factory=_default_threads, ge=1)

    # Output
    float_digits: int = 17
    svg_hash_salt: str = "haptosim"


settings = Settings()

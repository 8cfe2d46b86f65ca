from __future__ import annotations

from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="STACKCAST_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    # Log verbosity on stderr (STACKCAST_LOG)
    log: Literal["error", "info", "debug"] = "info"

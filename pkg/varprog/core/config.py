from functools import lru_cache
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", extra="ignore", env_ignore_empty=True
    )

    output_dir: str = Field(default="runs", alias="VARPROG_OUT_DIR")
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = Field(
        default="INFO", alias="VARPROG_LOG_LEVEL"
    )
    jobs: int = Field(default=1, ge=1, alias="VARPROG_JOBS")
    record_wallclock: bool = Field(default=False, alias="VARPROG_RECORD_WALLCLOCK")
    oracle_max_traces: int = Field(default=1_000_000, ge=1, alias="VARPROG_ORACLE_MAX_TRACES")
    simplex_floor: float = Field(default=1e-300, gt=0.0, alias="VARPROG_SIMPLEX_FLOOR")


@lru_cache
def get_settings() -> Settings:
    return Settings()

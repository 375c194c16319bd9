from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from mhaudit.domains.common.enums import HostMatchMode


class Settings(BaseSettings):
    """Defaults for every run; manifest options and CLI flags override them."""
    model_config = SettingsConfigDict(env_prefix="MHAUDIT_", env_file=".env", extra="ignore")

    output_dir: Path = Path("audit-out")
    jobs: int = Field(default=1, ge=1)
    log_level: str = "INFO"
    numeric_window: int = Field(default=32, ge=1)
    host_match_mode: HostMatchMode = HostMatchMode.EXACT


@lru_cache
def get_settings() -> Settings:
    return Settings()

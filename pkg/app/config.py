from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

load_dotenv()


class Settings(BaseSettings):
    app_name: str = "brachisto"
    app_version: str = "0.1.0"
    debug: bool = False
    log_level: str = "INFO"

    # Reproducibility
    seed: Optional[int] = None  # fallback for --seed

    # Solver defaults
    epsilon_mixed: float = 1e-2
    epsilon_pure: float = 1e-4

    # Benchmarks
    jobs: int = 1
    output_dir: str = "./output"
    bootstrap_resamples: int = 1000

    model_config = SettingsConfigDict(env_prefix="BRACHISTO_", env_file=".env", extra="ignore")

    def effective_log_level(self) -> str:
        return "DEBUG" if self.debug else self.log_level.upper()


def get_settings() -> Settings:
    """Fresh settings so environment overrides made after import are observed."""
    return Settings()


"""Configuration management for the phase estimation toolkit"""

import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field
from pydantic_settings import BaseSettings

# Load environment variables
load_dotenv()

# Get project root directory
PROJECT_ROOT = Path(__file__).parent.parent


class SimulationConfig(BaseModel):
    """State-vector engine limits and tolerances"""
    model_config = ConfigDict(extra="ignore")
    qubit_cap: int = Field(default=26, ge=1, le=30)
    dense_qubit_cap: int = Field(default=6, ge=1)
    assemble_qubit_cap: int = Field(default=12, ge=1)
    unitarity_tol: float = Field(default=1e-10, gt=0)
    norm_tol: float = Field(default=1e-10, gt=0)
    equality_tol: float = Field(default=1e-12, gt=0)
    degenerate_norm: float = Field(default=1e-12, gt=0)


class OracleConfig(BaseModel):
    """Brute-force oracle tolerances"""
    model_config = ConfigDict(extra="ignore")
    residual_tol: float = Field(default=1e-8, gt=0)
    equivalence_tol: float = Field(default=1e-9, gt=0)
    cluster_gap: float = Field(default=1e-8, gt=0)


class AnalysisConfig(BaseModel):
    """Spectral analysis defaults"""
    model_config = ConfigDict(extra="ignore")
    threshold: float = Field(default=0.5, gt=0, lt=1)
    degenerate_mass: float = Field(default=1 - 1e-9, gt=0, le=1)


class RunnerConfig(BaseModel):
    """Experiment runner configuration"""
    model_config = ConfigDict(extra="ignore")
    threads: int = Field(default=1, ge=1)
    output_dir: str = Field(default="results")
    csv_export: bool = Field(default=True)


class Settings(BaseSettings):
    """Application settings"""

    model_config = ConfigDict(
        extra="ignore",
        env_prefix="",
        env_nested_delimiter="__"
    )

    # Application
    app_name: str = Field(default="Black-Box Phase Estimation")
    app_version: str = Field(default="0.1.0")

    # Component configs
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)
    runner: RunnerConfig = Field(default_factory=RunnerConfig)

    # Logging
    log_level: str = Field(default="INFO")
    log_format: str = Field(default="json")

    @classmethod
    def load_from_yaml(cls, config_path: Optional[Path] = None) -> "Settings":
        """Load settings from YAML file and environment variables"""
        if config_path is None:
            config_path = PROJECT_ROOT / "config" / "default.yaml"

        settings_dict: Dict[str, Any] = {}

        # Load from YAML if exists
        if config_path.exists():
            with open(config_path, "r") as f:
                yaml_config = yaml.safe_load(f)
                if yaml_config:
                    settings_dict = yaml_config

        settings = cls(**settings_dict)

        # Apply environment variable overrides
        settings.simulation.qubit_cap = int(
            os.getenv("QPE_QUBIT_CAP", str(settings.simulation.qubit_cap))
        )
        settings.runner.threads = int(os.getenv("QPE_THREADS", str(settings.runner.threads)))
        settings.runner.output_dir = os.getenv("QPE_OUTPUT_DIR", settings.runner.output_dir)
        settings.log_level = os.getenv("LOG_LEVEL", settings.log_level)
        settings.log_format = os.getenv("LOG_FORMAT", settings.log_format)

        return settings


# Global settings instance
settings = Settings.load_from_yaml()

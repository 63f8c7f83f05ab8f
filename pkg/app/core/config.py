#!/usr/bin/env python3
"""
SpecLab Configuration Module

Version: 1.0.0
Author: SpecLab Development Team
Description: Process-level configuration management using Pydantic Settings
License: [To be determined]

Configuration Documentation:
=======================

This module holds the settings that belong to the running process rather
than to one experiment: logging, output location and report formatting.
Experiment parameters (scene, augmentations, model, optimizer, seeds) live in
versioned JSON documents validated by app.models.experiment_models.

Configuration Sections:
1. Logging: Level, format, file path
2. Output: Default output directory, default seed
3. Checkpoints: How much of each checkpoint the harness retains in memory
4. Reports: Float formatting for the CSV summary

Environment Variables:
All settings can be set via environment variables prefixed with SPECLAB_
(for example SPECLAB_LOG_LEVEL=DEBUG) or through a .env file.

Usage:
    from app.core.config import settings, get_settings

    log_level = settings.log_level
    current_settings = get_settings()
"""

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """SpecLab Configuration Settings"""

    # Logging Configuration
    log_level: str = Field(default="INFO", description="Logging level")
    log_file: str | None = Field(default=None, description="Log file path")
    log_format: str = Field(default="console", description="Log format (json/console)")

    # Output Configuration
    output_dir: str = Field(default="runs", description="Default output directory")
    default_seed: int = Field(default=0, description="Seed used when --seed is omitted")

    # Checkpoint Configuration
    checkpoint_retention: str = Field(
        default="encoder",
        description="Weights kept in memory per checkpoint (encoder/full)",
    )

    # Report Configuration
    float_format: str = Field(
        default="%.17g", description="printf-style float format for CSV reports"
    )

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        """Validate log level"""
        allowed_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in allowed_levels:
            raise ValueError(f"Log level must be one of: {allowed_levels}")
        return v.upper()

    @field_validator("log_format")
    @classmethod
    def validate_log_format(cls, v):
        """Validate log format"""
        allowed_formats = ["json", "console"]
        if v.lower() not in allowed_formats:
            raise ValueError(f"Log format must be one of: {allowed_formats}")
        return v.lower()

    @field_validator("checkpoint_retention")
    @classmethod
    def validate_checkpoint_retention(cls, v):
        """Validate checkpoint retention mode"""
        allowed_modes = ["encoder", "full"]
        if v.lower() not in allowed_modes:
            raise ValueError(f"Checkpoint retention must be one of: {allowed_modes}")
        return v.lower()

    model_config = SettingsConfigDict(
        env_prefix="SPECLAB_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


# Global settings instance
settings = Settings()


def get_settings() -> Settings:
    """Get application settings"""
    return settings


def reload_settings() -> Settings:
    """Reload settings from environment"""
    global settings
    settings = Settings()
    return settings

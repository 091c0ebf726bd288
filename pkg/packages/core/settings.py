"""
Central configuration using Pydantic Settings.
Handles environment variables and .env file loading.

Only process-level knobs live here (credentials, endpoints, retry policy).
Per-run knobs live in ``packages.core.run_config.RunConfig``.
"""

from functools import lru_cache
from typing import Optional

from pydantic import AliasChoices, Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
        populate_by_name=True,
    )

    log_level: str = Field(default="INFO")

    # Chat-completions endpoint
    llm_api_key: Optional[str] = Field(
        default=None,
        description="Bearer token for the chat-completions endpoint (never written to manifests)",
        validation_alias=AliasChoices("LLM_API_KEY", "OPENAI_API_KEY"),
    )
    llm_base_url: str = Field(
        default="https://api.openai.com/v1",
        description="Base URL of a chat-completions compatible server",
        validation_alias=AliasChoices("LLM_BASE_URL", "OPENAI_API_BASE"),
    )
    llm_model: str = Field(
        default="gpt-4",
        validation_alias=AliasChoices("LLM_MODEL", "OPENAI_MODEL"),
    )

    # HTTP retry policy
    http_timeout_seconds: float = Field(default=60.0, ge=1.0, le=600.0)
    http_max_attempts: int = Field(
        default=4,
        ge=1,
        le=20,
        description="Total attempts per request, including the first",
    )
    http_backoff_base: float = Field(
        default=2.0,
        ge=1.0,
        le=10.0,
        description="Exponential backoff base (2s, 4s, 8s, ...)",
    )
    http_backoff_cap_seconds: float = Field(default=30.0, ge=0.0, le=600.0)

    # Engine
    default_concurrency: int = Field(
        default=4,
        ge=1,
        le=256,
        description="Cap on in-flight backend requests",
    )
    example_budget_seconds: float = Field(
        default=120.0,
        ge=1.0,
        description="Wall-clock budget per example before it is marked as an engine failure",
    )

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        valid_levels = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}
        upper_v = v.upper()
        if upper_v not in valid_levels:
            raise ValueError(f"log_level must be one of {valid_levels}")
        return upper_v


@lru_cache
def get_settings() -> Settings:
    """
    Cached settings instance.
    Use this function to get settings throughout the application.
    """
    return Settings()


# Convenience export
settings = get_settings()

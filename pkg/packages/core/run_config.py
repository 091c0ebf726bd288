"""
Per-run configuration.

A ``RunConfig`` holds every knob that changes what a run computes. Its
digest names the run directory, so two runs with the same digest are the
same experiment. Credentials never live here; see ``packages.core.settings``.
"""

from __future__ import annotations

import hashlib
import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from packages.core.errors import ConfigError
from packages.core.models import Dataset, GenerationParams, Strategy
from packages.core.prompts.templates import DemoFlavor
from packages.core.settings import settings

logger = logging.getLogger(__name__)


class BackendKind(str, Enum):
    HTTP = "http"
    SCRIPTED = "scripted"
    LOCAL = "local"


class ConstraintMode(str, Enum):
    HARD = "hard"
    SOFT = "soft"
    OFF = "off"


# Keys that do not change results and stay out of the digest.
DIGEST_EXCLUDED = frozenset({"output_dir"})


class RunConfig(BaseModel):
    """Validated run configuration. Defaults follow the published setup."""
    model_config = ConfigDict(extra="forbid", frozen=True, use_enum_values=False)

    dataset_path: str
    dataset: Dataset = Dataset.HOTPOTQA
    sample_n: Optional[int] = Field(default=200, gt=0)
    seed: int = 0
    labels_path: Optional[str] = None

    strategy: Strategy = Strategy.STOCTOT
    backend: BackendKind = BackendKind.HTTP
    model: Optional[str] = None
    base_url: Optional[str] = None
    local_model: Optional[str] = None
    fixtures_path: Optional[str] = None
    record_fixtures: bool = False

    constraint_mode: ConstraintMode = ConstraintMode.SOFT
    temperature: float = Field(default=0.5, ge=0.0, le=2.0)
    top_k_or_p: float = Field(default=1.0, gt=0.0, le=1.0)
    max_new_tokens: int = Field(default=256, gt=0, le=8192)

    branching_limit: int = Field(default=3, ge=1, le=16)
    max_depth: int = Field(default=5, ge=1, le=16)
    n_paths: int = Field(default=3, ge=1, le=32)
    concurrency: int = Field(default_factory=lambda: settings.default_concurrency, ge=1, le=256)
    demo_flavor: DemoFlavor = DemoFlavor.BOTH
    prune_against_ancestors: bool = True
    validity_default: float = Field(default=0.5, ge=0.0, le=1.0)
    yes_no_special_case: bool = True
    template_dir: Optional[str] = None
    example_budget_seconds: Optional[float] = Field(default=None, gt=0.0)

    output_dir: str = "runs"

    @field_validator("sample_n", mode="before")
    @classmethod
    def sample_all(cls, v: Any) -> Any:
        # "all" runs the whole corpus
        if isinstance(v, str) and v.strip().lower() in {"all", "none"}:
            return None
        return v

    @property
    def generation_params(self) -> GenerationParams:
        return GenerationParams(
            temperature=self.temperature,
            top_k_or_p=self.top_k_or_p,
            max_new_tokens=self.max_new_tokens,
        )

    def canonical(self) -> dict[str, Any]:
        payload = self.model_dump(mode="json")
        return {k: v for k, v in sorted(payload.items()) if k not in DIGEST_EXCLUDED}

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @property
    def run_dir(self) -> Path:
        return Path(self.output_dir) / self.digest()[:16]


def check_consistency(config: RunConfig) -> None:
    """Cross-field rules. Raises ``ConfigError`` naming the fields in conflict."""
    if config.constraint_mode == ConstraintMode.HARD and config.backend != BackendKind.LOCAL:
        raise ConfigError(
            ("constraint_mode", "backend"),
            f"hard constrained decoding needs a token-scoring backend (backend=local), got backend={config.backend.value}",
        )
    if config.backend == BackendKind.SCRIPTED and not config.fixtures_path:
        raise ConfigError(("backend", "fixtures_path"), "the scripted backend replays a fixture file; set fixtures_path")
    if config.backend == BackendKind.LOCAL and not config.local_model:
        raise ConfigError(("backend", "local_model"), "the local backend needs local_model (a Hugging Face model id or path)")
    if config.record_fixtures and config.backend != BackendKind.HTTP:
        raise ConfigError(("record_fixtures", "backend"), "fixtures can only be recorded from the http backend")


def _clean(values: Mapping[str, Any]) -> dict[str, Any]:
    cleaned = {}
    for key, value in values.items():
        key = str(key).strip().lower().replace("-", "_")
        if isinstance(value, str) and value.strip() == "":
            value = None
        if value is None:
            continue
        cleaned[key] = value
    return cleaned


def build_config(values: Mapping[str, Any]) -> RunConfig:
    """Validate raw values into a ``RunConfig``, converting every failure to ``ConfigError``."""
    try:
        config = RunConfig.model_validate(_clean(values))
    except ValidationError as e:
        fields = sorted({".".join(str(p) for p in err["loc"]) or "<config>" for err in e.errors()})
        detail = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(fields, detail) from e
    check_consistency(config)
    return config


def load_config_file(path: Union[str, Path]) -> dict[str, Any]:
    """
    Read a flat key-value config: a JSON object, or ``KEY=value`` lines.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(("config",), f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(("config",), f"{path}: {e.msg} at char {e.pos}") from e
        if not isinstance(payload, dict):
            raise ConfigError(("config",), f"{path}: expected a JSON object")
        return _clean(payload)
    return _clean(dotenv_values(path))


def merge_config(file_values: Mapping[str, Any], overrides: Mapping[str, Any]) -> RunConfig:
    """File values first, then CLI overrides (``None`` means not given)."""
    merged = dict(_clean(file_values))
    merged.update(_clean({k: v for k, v in overrides.items() if v is not None}))
    return build_config(merged)

import difflib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import typing
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type, Union

import structlog
from pydantic import BaseModel, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.errors import ConfigurationError
from app.models.config import ExperimentConfig

logger = structlog.get_logger()


class Settings(BaseSettings):
    """Process settings loaded from environment variables."""

    PROJECT_NAME: str = "hyperx"

    # Overrides the experiment seed when set
    HYPERX_SEED: Optional[int] = None

    # Logging
    HYPERX_LOG_LEVEL: str = "INFO"
    HYPERX_LOG_JSON: bool = False

    # Hot-loop assertions (batch homogeneity, freeze contract)
    HYPERX_CHECK_INVARIANTS: bool = False

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


def _model_at(loc: Tuple[Union[str, int], ...]) -> Optional[Type[BaseModel]]:
    """The section model that owns the key at ``loc``."""
    model: Any = ExperimentConfig
    for part in loc:
        if isinstance(part, int):
            continue
        field = model.model_fields.get(part) if isinstance(model, type) and issubclass(model, BaseModel) else None
        if field is None:
            return None
        annotation = field.annotation
        for arg in typing.get_args(annotation) or (annotation,):
            if isinstance(arg, type) and issubclass(arg, BaseModel):
                annotation = arg
        model = annotation
    return model if isinstance(model, type) and issubclass(model, BaseModel) else None


def _describe(exc: ValidationError) -> str:
    problems: List[str] = []
    for error in exc.errors():
        loc = tuple(error["loc"])
        dotted = ".".join(str(p) for p in loc)
        if error["type"] == "extra_forbidden":
            owner = _model_at(loc[:-1])
            close = difflib.get_close_matches(str(loc[-1]), list(owner.model_fields), n=1) if owner else []
            hint = f" (did you mean '{close[0]}'?)" if close else ""
            problems.append(f"unknown key '{dotted}'{hint}")
        else:
            problems.append(f"{dotted}: {error['msg']}")
    return "invalid configuration: " + "; ".join(problems)


def parse_experiment_config(data: Dict[str, Any]) -> ExperimentConfig:
    """Validate a raw mapping; unknown keys are fatal.

    Raises:
        ConfigurationError: unknown keys or invalid values, with suggestions
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(_describe(exc)) from None


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read a TOML config, or a run manifest's ``config`` echo when given JSON."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix == ".json":
            raw = json.loads(text)
            data = raw.get("config", raw)
        else:
            data = tomllib.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from None
    return parse_experiment_config(data)


def resolve_seed(config: ExperimentConfig, settings: Optional[Settings] = None) -> ExperimentConfig:
    """Apply ``HYPERX_SEED`` when set."""
    settings = settings or get_settings()
    if settings.HYPERX_SEED is None or settings.HYPERX_SEED == config.seed:
        return config
    logger.warning("seed override", config_seed=config.seed, env_seed=settings.HYPERX_SEED)
    return config.model_copy(update={"seed": settings.HYPERX_SEED})

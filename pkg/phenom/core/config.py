"""
Centralized application configuration with startup guardrails.
Process settings come from the environment (PHENOM_*) and an optional .env
file; run documents are YAML files validated into pydantic models.
"""

from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Type, TypeVar

import yaml
from pydantic import BaseModel, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from phenom.core.exceptions import InvalidConfigError

ModelT = TypeVar("ModelT", bound=BaseModel)


class Settings(BaseSettings):
    # --------------------------------------------------
    # Application & Paths
    # --------------------------------------------------
    APP_NAME: str = "phenom"
    ENV: str = "development"

    BASE_DIR: Path = Path(__file__).resolve().parent.parent.parent
    LOG_DIR: Path = BASE_DIR / "logs"
    LOG_LEVEL: str = "INFO"

    model_config = SettingsConfigDict(
        env_prefix="PHENOM_",
        env_file=Path(__file__).resolve().parent.parent.parent / ".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore"
    )

    # --------------------------------------------------
    # Run defaults
    # --------------------------------------------------
    # Global seed fallback when a command gets no --seed
    SEED: int = 0
    WORKERS: int = 1
    DEVICE: str = "cpu"

    def validate_startup(self):
        """
        Critical startup checks before any command touches data.
        """
        if self.WORKERS < 1:
            raise InvalidConfigError(
                f"PHENOM_WORKERS must be >= 1, got {self.WORKERS}."
            )
        if self.LOG_LEVEL.upper() not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise InvalidConfigError(f"Unknown PHENOM_LOG_LEVEL: {self.LOG_LEVEL}")


@lru_cache()
def get_settings() -> Settings:
    """Returns a cached instance of settings to avoid re-reading the environment."""
    settings = Settings()
    settings.validate_startup()
    return settings


def load_document(path: Optional[Path]) -> Dict[str, Any]:
    """
    Load a YAML run document. A missing path yields an empty document so
    commands can run entirely from defaults and overrides.
    """
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise InvalidConfigError(f"Config file {path} must contain a mapping at the top level")
    return data


def parse_overrides(tokens: Iterable[str]) -> Dict[str, Any]:
    """
    Turn leftover CLI tokens of the form ``--key value`` or ``--a.b value``
    into a nested dict. Values follow YAML scalar rules, so ``--epochs 3``
    is an int and ``--relationship_blocks "[[0, 1]]"`` is a list.
    """
    tokens = list(tokens)
    overrides: Dict[str, Any] = {}
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--"):
            raise InvalidConfigError(f"Unexpected argument: {token}")
        key = token[2:]
        if "=" in key:
            key, raw = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise InvalidConfigError(f"Override --{key} is missing a value")
            raw = tokens[i + 1]
            i += 2
        value = yaml.safe_load(raw)
        _set_dotted(overrides, key.replace("-", "_"), value)
    return overrides


def merge_documents(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge ``overrides`` into a copy of ``base``."""
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_documents(merged[key], value)
        else:
            merged[key] = value
    return merged


def build_model(model_cls: Type[ModelT], document: Dict[str, Any]) -> ModelT:
    """Validate a document into a pydantic model, re-raising as InvalidConfigError."""
    try:
        return model_cls.model_validate(document)
    except ValidationError as e:
        raise InvalidConfigError(f"Invalid {model_cls.__name__}: {_summarize(e)}") from e


def _set_dotted(target: Dict[str, Any], dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = target
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def _summarize(error: ValidationError) -> str:
    messages: List[str] = []
    for item in error.errors():
        where = ".".join(str(p) for p in item.get("loc", ()))
        messages.append(f"{where}: {item.get('msg')}")
    return "; ".join(messages)

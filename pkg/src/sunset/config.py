"""Layered configuration: config file values < environment < command flags."""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .llm_client import HttpTransport, LLMClient, MockTransport

ENV_API_KEY = "SUNSET_API_KEY"
ENV_BASE_URL = "SUNSET_BASE_URL"


class ConfigError(ValueError):
    pass


def load_config(path: str | Path | None) -> dict[str, Any]:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {p}: {exc}") from exc


@dataclass
class ClientSettings:
    base_url: str = ""
    api_key: str = ""
    model: str = ""
    embed_model: str = ""
    max_concurrency: int = 4
    timeout: float = 120.0

    @classmethod
    def resolve(
        cls,
        config: dict[str, Any],
        env: dict[str, str] | None = None,
        **flags: Any,
    ) -> "ClientSettings":
        """Merge the [client] config section, environment variables, and any
        non-None flag overrides, in increasing precedence."""
        env = os.environ if env is None else env
        section = dict(config.get("client", {}))
        if env.get(ENV_BASE_URL):
            section["base_url"] = env[ENV_BASE_URL]
        if env.get(ENV_API_KEY):
            section["api_key"] = env[ENV_API_KEY]
        for key, value in flags.items():
            if value is not None:
                section[key] = value
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in section.items() if k in known})


def make_client(settings: ClientSettings, mock_path: str | Path | None = None) -> LLMClient:
    """Build a client over HTTP or over a scripted JSONL fixture."""
    if mock_path is not None:
        transport = MockTransport.from_jsonl(str(mock_path))
    else:
        if not settings.base_url:
            raise ConfigError(
                f"no endpoint configured: set {ENV_BASE_URL}, the [client] base_url "
                "config key, or pass --mock for an offline run"
            )
        transport = HttpTransport(settings.base_url, settings.api_key, settings.timeout)
    return LLMClient(
        transport,
        model=settings.model,
        embed_model=settings.embed_model,
        max_concurrency=settings.max_concurrency,
    )

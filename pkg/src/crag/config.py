"""Application configuration loaded from a TOML file.

Unknown keys are rejected so typos fail loudly at startup.
"""

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .corpus import PositivityPolicy
from .errors import CragError
from .pipeline import PipelineConfig

_SCHEMA = {
    "data": {"dialogues", "metadata", "format"},
    "model": {"path", "lambda_", "beta", "pop_window_days"},
    "backend": {"mode", "transcript", "endpoint", "model", "api_key_env", "limit"},
    "pipeline": {"k", "variant", "m_rec", "prompt_mode", "cold_start_seeds",
                 "allow_mentioned"},
    "policy": {"user_min", "system_min"},
    "matcher": {"char_threshold"},
    "service": {"port", "session_timeout_s"},
}


@dataclass
class BackendConfig:
    mode: str = "replay"  # live | record | replay
    transcript: Optional[str] = None
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4o"
    api_key_env: str = "OPENAI_API_KEY"
    limit: Optional[int] = None


@dataclass
class AppConfig:
    dialogues: Optional[str] = None
    metadata: Optional[str] = None
    dataset_format: str = "reddit_v2"
    model_path: Optional[str] = None
    lam: float = 100.0
    beta: float = 0.0
    pop_window_days: int = 0
    backend: BackendConfig = field(default_factory=BackendConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    policy: PositivityPolicy = field(default_factory=PositivityPolicy)
    char_threshold: float = 0.80
    port: int = 8787
    session_timeout_s: int = 1800


def load_config(path: str | Path) -> AppConfig:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    for section, keys in raw.items():
        if section not in _SCHEMA:
            raise CragError(f"unknown config section {section!r}")
        unknown = set(keys) - _SCHEMA[section]
        if unknown:
            raise CragError(f"unknown key(s) in [{section}]: {sorted(unknown)}")

    cfg = AppConfig()
    data = raw.get("data", {})
    cfg.dialogues = data.get("dialogues")
    cfg.metadata = data.get("metadata")
    cfg.dataset_format = data.get("format", cfg.dataset_format)
    model = raw.get("model", {})
    cfg.model_path = model.get("path")
    cfg.lam = float(model.get("lambda_", cfg.lam))
    cfg.beta = float(model.get("beta", cfg.beta))
    cfg.pop_window_days = int(model.get("pop_window_days", cfg.pop_window_days))
    backend = raw.get("backend", {})
    cfg.backend = BackendConfig(**backend)
    pipe = raw.get("pipeline", {})
    cfg.pipeline = PipelineConfig(**pipe)
    policy = raw.get("policy", {})
    cfg.policy = PositivityPolicy(**policy)
    cfg.char_threshold = float(raw.get("matcher", {}).get("char_threshold", 0.80))
    service = raw.get("service", {})
    cfg.port = int(service.get("port", cfg.port))
    cfg.session_timeout_s = int(
        service.get("session_timeout_s", cfg.session_timeout_s)
    )
    return cfg

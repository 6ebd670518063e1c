"""Run configuration files and provider wiring.

A run config is JSON: session settings at the top level (same shape as the
trace config snapshot) plus a providers section selecting live, record,
replay, or scripted backends. Unknown keys anywhere are rejected so typos
fail loudly instead of silently running defaults.
"""

import json
import os
from dataclasses import dataclass, field

from .backends import (
    CHAT_ROLES,
    Endpoint,
    LiveProviderSet,
    MockProviderSet,
    RecordingProviderSet,
    ReplayProviderSet,
    WebPage,
)
from .codeagent import CodeExecSettings
from .backends import GenerationParams
from .orchestrator import SessionConfig, WebSearchConfig

PROVIDER_MODES = ("live", "record", "replay", "scripted")
SERVICE_ENDPOINTS = ("search", "rerank", "embeddings")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    session: SessionConfig = field(default_factory=SessionConfig)
    provider_mode: str = "scripted"
    fixture_path: str | None = None
    script_path: str | None = None
    endpoints: dict[str, Endpoint] = field(default_factory=dict)
    trace_dir: str = "runs"


def _check_keys(data: dict, allowed, where: str) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys {unknown} in {where}")


def _section(data: dict, key: str) -> dict:
    value = data.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"{key} must be an object")
    return value


def session_config_from_dict(data: dict) -> SessionConfig:
    _check_keys(
        data,
        {"generation", "tools", "memory_mode", "max_tool_calls", "websearch", "code_exec"},
        "session config",
    )
    generation = _section(data, "generation")
    _check_keys(generation, vars(GenerationParams()), "generation")
    tools = _section(data, "tools")
    _check_keys(tools, {"web_search", "code", "mind_map"}, "tools")
    websearch = _section(data, "websearch")
    _check_keys(websearch, vars(WebSearchConfig()), "websearch")
    code_exec = _section(data, "code_exec")
    _check_keys(code_exec, {"interpreter", "timeout_seconds", "output_cap_bytes"}, "code_exec")

    config = SessionConfig(
        params=GenerationParams(**generation),
        web_search=tools.get("web_search", True),
        code=tools.get("code", True),
        mind_map=tools.get("mind_map", True),
        memory_mode=data.get("memory_mode", "mindmap"),
        max_tool_calls=data.get("max_tool_calls", 10),
        websearch=WebSearchConfig(**websearch),
        code_exec=CodeExecSettings(**code_exec),
    )
    config.validate()
    return config


def _endpoint_from_dict(name: str, data: dict) -> Endpoint:
    _check_keys(data, {"base_url", "api_key", "model"}, f"endpoint {name}")
    if "base_url" not in data:
        raise ConfigError(f"endpoint {name} needs a base_url")
    return Endpoint(
        base_url=data["base_url"],
        model=data.get("model", ""),
        api_key=data.get("api_key", ""),
    )


def run_config_from_dict(data: dict) -> RunConfig:
    _check_keys(
        data,
        {
            "generation", "tools", "memory_mode", "max_tool_calls", "websearch",
            "code_exec", "providers", "trace_dir",
        },
        "run config",
    )
    session_keys = {
        k: v
        for k, v in data.items()
        if k in {"generation", "tools", "memory_mode", "max_tool_calls", "websearch", "code_exec"}
    }
    session = session_config_from_dict(session_keys)

    providers = _section(data, "providers")
    _check_keys(providers, {"mode", "fixture_path", "script_path", "endpoints"}, "providers")
    mode = providers.get("mode", "scripted")
    if mode not in PROVIDER_MODES:
        raise ConfigError(f"provider mode must be one of {PROVIDER_MODES}")
    endpoints = {}
    for name, raw in _section(providers, "endpoints").items():
        if name not in CHAT_ROLES and name not in SERVICE_ENDPOINTS:
            raise ConfigError(f"unknown endpoint name {name!r}")
        endpoints[name] = _endpoint_from_dict(name, raw)
    session.provider_models = {
        name: endpoint.model for name, endpoint in sorted(endpoints.items()) if endpoint.model
    }

    return RunConfig(
        session=session,
        provider_mode=mode,
        fixture_path=providers.get("fixture_path"),
        script_path=providers.get("script_path"),
        endpoints=endpoints,
        trace_dir=data.get("trace_dir", "runs"),
    )


def load_run_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return run_config_from_dict(data)


# ---------------------------------------------------------------------------
# Provider construction
# ---------------------------------------------------------------------------


def _pages_from_list(raw, where: str) -> list[WebPage]:
    pages = []
    for entry in raw:
        _check_keys(entry, {"url", "title", "content"}, where)
        pages.append(
            WebPage(
                url=entry.get("url", ""),
                title=entry.get("title", ""),
                content=entry.get("content", ""),
            )
        )
    return pages


def load_provider_script(path) -> dict:
    """Scripted-mode provider responses, validated but kept as plain data."""
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read provider script {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"provider script {path} is not valid JSON: {exc}") from exc
    _check_keys(
        data,
        {"chat", "cycle", "search", "default_search", "rerank_scores"},
        "provider script",
    )
    for role in _section(data, "chat"):
        if role not in CHAT_ROLES:
            raise ConfigError(f"unknown chat role {role!r} in provider script")
    return data


def scripted_providers(script: dict) -> MockProviderSet:
    search_results = {
        query: _pages_from_list(pages, f"search[{query!r}]")
        for query, pages in _section(script, "search").items()
    }
    default_search = None
    if "default_search" in script:
        default_search = _pages_from_list(script["default_search"], "default_search")
    return MockProviderSet(
        chat_scripts={role: list(texts) for role, texts in _section(script, "chat").items()},
        search_results=search_results,
        default_search=default_search,
        rerank_scores=script.get("rerank_scores"),
        cycle=bool(script.get("cycle", False)),
    )


def _live_providers(config: RunConfig) -> LiveProviderSet:
    chat = {role: ep for role, ep in config.endpoints.items() if role in CHAT_ROLES}
    return LiveProviderSet(
        chat_endpoints=chat,
        search_endpoint=config.endpoints.get("search"),
        rerank_endpoint=config.endpoints.get("rerank"),
        embed_endpoint=config.endpoints.get("embeddings"),
    )


def build_provider_factory(config: RunConfig):
    """Returns factory(record_id) -> fresh session-local provider set.

    Live clients are shared (they are stateless per call); scripted mocks,
    recorders, and replay fixtures are rebuilt per session.
    """
    if config.provider_mode == "scripted":
        if not config.script_path:
            raise ConfigError("scripted provider mode needs script_path")
        script = load_provider_script(config.script_path)
        return lambda record_id=None: scripted_providers(script)

    if config.provider_mode == "live":
        live = _live_providers(config)
        return lambda record_id=None: live

    if config.provider_mode == "record":
        # Records whatever backend it fronts: live endpoints, or a scripted
        # mock when a script is given (handy for generating test fixtures).
        if config.script_path:
            script = load_provider_script(config.script_path)
            return lambda record_id=None: RecordingProviderSet(scripted_providers(script))
        live = _live_providers(config)
        return lambda record_id=None: RecordingProviderSet(live)

    if not config.fixture_path:
        raise ConfigError("replay provider mode needs fixture_path")

    def replay_factory(record_id=None):
        path = config.fixture_path
        if os.path.isdir(path):
            if record_id is None:
                raise ConfigError(f"{path} is a directory; a record id is required")
            path = os.path.join(path, f"{record_id}.jsonl")
        try:
            return ReplayProviderSet.load(path)
        except OSError as exc:
            raise ConfigError(f"cannot read fixture {path}: {exc}") from exc

    return replay_factory

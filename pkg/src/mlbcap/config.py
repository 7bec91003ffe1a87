"""Run configuration: one YAML file naming every backend and limit."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .backends import BackendConfig, BackendKind
from .prompts import CANDIDATE_LABELS, LONG_MAX_WORDS, SHORT_MAX_WORDS, Track, TrackKind


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    rater: BackendConfig
    describer: BackendConfig
    judge: BackendConfig
    roles: dict[str, BackendConfig]
    track: Track = field(default_factory=lambda: Track(TrackKind.LONG))
    seed: int = 0
    threshold: int = 5
    fewshot_k: int = 10
    token_limit: int = 512
    workers: int = 4
    permits: int = 4
    judge_image: bool = False
    describer_style: str = "simple"  # "large" or "simple"
    cache_dir: str = "mlbcap_cache"
    digest: str = ""


def _backend(raw: dict, fallback_id: str) -> BackendConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"backend entry for {fallback_id} must be a mapping")
    kind_name = str(raw.get("kind", "mock")).lower()
    try:
        kind = BackendKind(kind_name)
    except ValueError:
        raise ConfigError(f"unknown backend kind {kind_name!r}") from None
    try:
        return BackendConfig(
            backend_id=str(raw.get("backend_id", fallback_id)),
            kind=kind,
            endpoint_url=str(raw.get("endpoint_url", "") or ""),
            model_name=str(raw.get("model_name", "") or ""),
            temperature=float(raw.get("temperature", 0.0)),
            max_retries=int(raw.get("max_retries", 3)),
            timeout=float(raw.get("timeout", 60.0)),
            api_key_env=str(raw.get("api_key_env", "") or ""),
            supports_images=bool(raw.get("supports_images", False)),
            seed=int(raw.get("seed", 0)),
        )
    except ValueError as exc:
        raise ConfigError(f"backend {fallback_id}: {exc}") from exc


def _track(raw: dict, kind_name: str) -> Track:
    kind_name = kind_name.lower()
    try:
        kind = TrackKind(kind_name)
    except ValueError:
        raise ConfigError(f"track must be long or short, got {kind_name!r}") from None
    max_len = raw.get("max_len", {})
    default = LONG_MAX_WORDS if kind == TrackKind.LONG else SHORT_MAX_WORDS
    words = int(max_len.get(kind.value, default)) if isinstance(max_len, dict) else default
    return Track(kind, words)


def load_config(path: str | Path, track_override: str | None = None) -> RunConfig:
    """Parse the run config; missing backends or bad values are fatal."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")

    backends = raw.get("backends")
    if not isinstance(backends, dict):
        raise ConfigError("config needs a 'backends' mapping")
    for name in ("rater", "describer", "judge"):
        if name not in backends:
            raise ConfigError(f"config backends missing {name!r}")
    roles_raw = backends.get("roles")
    if not isinstance(roles_raw, dict):
        raise ConfigError("config backends missing 'roles' mapping")
    missing = [label for label in CANDIDATE_LABELS if label not in roles_raw]
    if missing:
        raise ConfigError(f"roles missing labels: {missing}")

    digest = hashlib.sha256(
        json.dumps(raw, sort_keys=True, default=str).encode("utf-8")
    ).hexdigest()

    style = str(raw.get("describer_style", "simple")).lower()
    if style not in ("simple", "large"):
        raise ConfigError("describer_style must be 'simple' or 'large'")

    return RunConfig(
        rater=_backend(backends["rater"], "rater"),
        describer=_backend(backends["describer"], "describer"),
        judge=_backend(backends["judge"], "judge"),
        roles={label: _backend(roles_raw[label], f"role-{label}") for label in CANDIDATE_LABELS},
        track=_track(raw, track_override or str(raw.get("track", "long"))),
        seed=int(raw.get("seed", 0)),
        threshold=int(raw.get("threshold", 5)),
        fewshot_k=int(raw.get("fewshot_k", 10)),
        token_limit=int(raw.get("token_limit", 512)),
        workers=int(raw.get("workers", 4)),
        permits=int(raw.get("permits", 4)),
        judge_image=bool(raw.get("judge_image", False)),
        describer_style=style,
        cache_dir=str(raw.get("cache_dir", "mlbcap_cache")),
        digest=digest,
    )

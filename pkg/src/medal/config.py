"""The declarative pipeline config: one TOML file, secrets from the environment."""

from __future__ import annotations

import re
import sys
from collections.abc import Mapping
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .agents.backends import BackendRegistry, HostedBackend, ReplayBackend, ScriptedBackend
from .agents.profiles import PROFILES, DecodingProfile
from .core import register_language, set_allow_extra_languages
from .curation import CurationTarget
from .metaeval.harness import JudgeConfig
from .orchestrator import CampaignConfig, LoopLimits
from .simulation import SyntheticWorld

TOKEN_PREFIX = "MEDAL_API_TOKEN_"


class ConfigError(ValueError):
    pass


def token_env_name(backend: str) -> str:
    return TOKEN_PREFIX + re.sub(r"[^A-Za-z0-9]", "_", backend).upper()


@dataclass(frozen=True)
class BackendSpec:
    name: str
    kind: str
    models: tuple[str, ...]
    options: Mapping[str, Any] = field(default_factory=dict)

    KINDS = ("hosted", "scripted", "synthetic", "replay")

    def build(self, base: Path):
        opts = self.options
        if self.kind == "hosted":
            if "endpoint" not in opts:
                raise ConfigError(f"backend {self.name!r}: hosted backends need an endpoint")
            token = token_env_name(self.name) if opts.get("auth", True) else None
            return HostedBackend(opts["endpoint"], token, timeout=float(opts.get("timeout", 120)),
                                 name=self.name)
        if self.kind == "scripted":
            return ScriptedBackend.from_jsonl(_resolve(base, opts["script"]))
        if self.kind == "replay":
            return ReplayBackend(_resolve(base, opts["path"]))
        return SyntheticWorld(seed=int(opts.get("seed", 0)),
                              judge_noise=dict(opts.get("judge_noise", {})))


@dataclass(frozen=True)
class PoolPaths:
    scenes: Path | None = None
    personas: Path | None = None
    affects: Path | None = None
    lexicon: Path | None = None
    few_shot: Path | None = None


@dataclass(frozen=True)
class LabellingConfig:
    strong_judge: str | None = None
    relabel_attempts: int = 2
    include_chatbot_mixing: bool = False
    keywords: Path | None = None


@dataclass
class PipelineConfig:
    path: Path
    backends: list[BackendSpec]
    profiles: dict[str, DecodingProfile]
    pools: PoolPaths
    campaign: CampaignConfig | None
    labelling: LabellingConfig
    curation: CurationTarget
    judges: list[JudgeConfig]
    seed: int = 0
    parallelism: int = 1

    def registry(self) -> BackendRegistry:
        reg = BackendRegistry()
        base = self.path.parent
        for spec in self.backends:
            backend = spec.build(base)
            for model in spec.models:
                if model == "*":
                    reg.default = backend
                else:
                    reg.register(model, backend)
        return reg

    def referenced_models(self) -> set[str]:
        models = set()
        if self.campaign:
            models |= set(self.campaign.user_models) | set(self.campaign.chatbot_models)
            models.add(self.campaign.judge_model)
        if self.labelling.strong_judge:
            models.add(self.labelling.strong_judge)
        models |= {j.model for j in self.judges}
        return models

    def judge(self, name: str) -> JudgeConfig:
        for j in self.judges:
            if j.name == name:
                return j
        raise ConfigError(f"no judge named {name!r}; have {[j.name for j in self.judges]}")


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def _take(section: Mapping, cls, where: str, **extra):
    allowed = {f.name for f in fields(cls)}
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"[{where}]: unknown keys {sorted(unknown)}")
    try:
        return cls(**section, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def _profiles(section: Mapping) -> dict[str, DecodingProfile]:
    out = dict(PROFILES)
    for name, body in section.items():
        if name not in PROFILES:
            raise ConfigError(f"[profiles.{name}]: unknown profile")
        body = dict(body)
        override = body.pop("override", False)
        if not body:
            continue
        differs = {k: v for k, v in body.items() if getattr(PROFILES[name], k, None) != v}
        if differs and override is not True:
            raise ConfigError(
                f"[profiles.{name}]: changing {sorted(differs)} requires override = true"
            )
        try:
            out[name] = PROFILES[name].with_overrides(**body)
        except TypeError as exc:
            raise ConfigError(f"[profiles.{name}]: {exc}") from exc
    return out


def _campaign(section: Mapping, seed: int, parallelism: int) -> CampaignConfig:
    section = dict(section)
    limits = {k: section.pop(k) for k in ("first_turn_attempts", "next_turn_attempts",
                                          "max_user_turns") if k in section}
    try:
        section["limits"] = LoopLimits(**limits)
    except ValueError as exc:
        raise ConfigError(f"[campaign]: {exc}") from exc
    section.setdefault("rng_seed", seed)
    section.setdefault("parallelism", parallelism)
    return _take(section, CampaignConfig, "campaign")


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data, path)


def config_from_dict(data: Mapping, path: Path = Path("medal.toml")) -> PipelineConfig:
    data = dict(data)
    known = {"seed", "parallelism", "backends", "profiles", "pools", "campaign",
             "labelling", "curation", "judges", "allow_extra_languages", "extra_languages"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    seed = int(data.get("seed", 0))
    parallelism = int(data.get("parallelism", 1))
    base = path.parent

    if data.get("allow_extra_languages"):
        set_allow_extra_languages(True)
        for code, (name, country) in data.get("extra_languages", {}).items():
            register_language(code, name, country)

    backends = []
    for name, body in data.get("backends", {}).items():
        body = dict(body)
        kind = body.pop("kind", "hosted")
        if kind not in BackendSpec.KINDS:
            raise ConfigError(f"[backends.{name}]: unknown kind {kind!r}")
        models = body.pop("models", None)
        if not models:
            raise ConfigError(f"[backends.{name}]: list the model ids it serves in `models`")
        backends.append(BackendSpec(name, kind, tuple(models), body))

    pools = {k: _resolve(base, v) for k, v in data.get("pools", {}).items()}
    labelling = dict(data.get("labelling", {}))
    if "keywords" in labelling:
        labelling["keywords"] = _resolve(base, labelling["keywords"])
    curation = dict(data.get("curation", {}))
    if "issue_kinds" in curation:
        curation["issue_kinds"] = tuple(curation["issue_kinds"])
    if "overall_bins" in curation:
        curation["overall_bins"] = tuple(curation["overall_bins"])

    cfg = PipelineConfig(
        path=path,
        backends=backends,
        profiles=_profiles(data.get("profiles", {})),
        pools=_take(pools, PoolPaths, "pools"),
        campaign=_campaign(data["campaign"], seed, parallelism) if "campaign" in data else None,
        labelling=_take(labelling, LabellingConfig, "labelling"),
        curation=_take(curation, CurationTarget, "curation"),
        judges=[_take(j, JudgeConfig, "judges") for j in data.get("judges", [])],
        seed=seed,
        parallelism=parallelism,
    )
    served = {m for b in backends for m in b.models}
    if "*" not in served:
        unresolved = cfg.referenced_models() - served
        if unresolved:
            raise ConfigError(f"models without a backend: {sorted(unresolved)}")
    return cfg

"""Run configuration files: YAML schema, validation, and normalization.

A config file is a declarative mirror of :class:`PipelineConfig`.  Loading
fills documented defaults, rejects unknown keys, validates every value, and
produces a normalized dict whose key order and value types are canonical,
so normalization is idempotent and the normalized form round-trips through
serialization unchanged.
"""

from __future__ import annotations

import math
import re
from pathlib import Path
from typing import Any, Callable

import yaml

from .bandit import BanditConfig
from .mixing import Stage2Config
from .pipeline import PIPELINE_MODES, PipelineConfig

CONFIG_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key."""

    def __init__(self, key: str, problem: str):
        super().__init__(f"config key '{key}': {problem}")
        self.key = key


def _as_int(key: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    return value


def _as_float(key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    out = float(value)
    if not math.isfinite(out):
        raise ConfigError(key, f"expected a finite number, got {value!r}")
    return out


def _as_str(key: str, value: Any) -> str:
    if not isinstance(value, str):
        raise ConfigError(key, f"expected a string, got {value!r}")
    return value


def _float_list(key: str, value: Any) -> list[float]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(key, f"expected a non-empty list of numbers, got {value!r}")
    return [_as_float(f"{key}[{i}]", v) for i, v in enumerate(value)]


def _str_list(key: str, value: Any) -> list[str]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(key, f"expected a non-empty list of strings, got {value!r}")
    return [_as_str(f"{key}[{i}]", v) for i, v in enumerate(value)]


# Each field: (default, coercer). Key order here is the canonical order of
# the normalized form. A default of _REQUIRED means the key must be present.
_REQUIRED = object()

Field = tuple[Any, Callable[[str, Any], Any]]

_BANDIT_FIELDS: dict[str, Field] = {
    "n_tasks": (None, _as_int),  # derived from the environment when omitted
    "alpha0": (1.0, _as_float),
    "beta0": (1.0, _as_float),
    "gamma": (0.02, _as_float),
    "primary_prior_boost": (2.0, _as_float),
    "primary_task_id": (0, _as_int),
    "n_rounds": (200, _as_int),
    "batches_per_round": (10, _as_int),
    "rng_seed": (0, _as_int),
}

_STAGE2_FIELDS: dict[str, Field] = {
    "n_samples": (20, _as_int),
    "n_initial": (5, _as_int),
    "ratio_max": (20, _as_int),
    "rng_seed": (0, _as_int),
    "nu": (2.5, _as_float),
    "ucb_lambda": (2.0, _as_float),
    "hedge_eta": (1.0, _as_float),
    "pool_size": (256, _as_int),
}

_ENV_FIELDS: dict[str, dict[str, Field]] = {
    "planted": {
        "theta_star": ([0.8, 0.9, 0.1], _float_list),
        "score_noise": (0.01, _as_float),
    },
    "shared-linear": {
        "task_profile": (["primary", "useful", "harmful"], _str_list),
        "dim": (16, _as_int),
        "n_primary_train": (256, _as_int),
        "n_primary_heldout": (256, _as_int),
        "n_aux": (128, _as_int),
        "total_batches": (2000, _as_int),
        "batch_size": (8, _as_int),
        "learning_rate": (0.05, _as_float),
        "primary_label_noise": (0.0, _as_float),
        "aux_label_noise": (0.0, _as_float),
        "useful_shift": (0.1, _as_float),
        "harmful_scale": (1.5, _as_float),
        "data_seed": (0, _as_int),
    },
}


def _normalize_section(
    raw: Any, fields: dict[str, Field], prefix: str
) -> dict[str, Any]:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(prefix, f"expected a mapping, got {raw!r}")
    for key in raw:
        if key not in fields:
            raise ConfigError(f"{prefix}.{key}", "unknown key")
    out: dict[str, Any] = {}
    for key, (default, coerce) in fields.items():
        if key in raw:
            out[key] = coerce(f"{prefix}.{key}", raw[key])
        elif default is _REQUIRED:
            raise ConfigError(f"{prefix}.{key}", "required key is missing")
        elif default is not None:
            out[key] = coerce(f"{prefix}.{key}", default)
    return out


def _env_n_tasks(env: dict) -> int:
    if env["family"] == "planted":
        return len(env["theta_star"])
    return len(env["task_profile"])


def normalize(raw: dict | None) -> dict:
    """Fill defaults, validate, and order keys canonically.

    Raises
    ------
    ConfigError
        Naming the offending key, for any unknown key, type mismatch, or
        invariant violation.
    """
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", f"expected a mapping at top level, got {raw!r}")
    known_top = {"schema_version", "mode", "output_dir", "environment", "bandit", "stage2"}
    for key in raw:
        if key not in known_top:
            raise ConfigError(key, "unknown key")

    version = raw.get("schema_version", CONFIG_SCHEMA_VERSION)
    version = _as_int("schema_version", version)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(
            "schema_version", f"unsupported version {version}; this build reads {CONFIG_SCHEMA_VERSION}"
        )

    mode = raw.get("mode", "full")
    mode = _as_str("mode", mode)
    if mode not in PIPELINE_MODES:
        raise ConfigError("mode", f"must be one of {list(PIPELINE_MODES)}, got {mode!r}")

    output_dir = raw.get("output_dir")
    if output_dir is not None:
        output_dir = _as_str("output_dir", output_dir)

    env_raw = raw.get("environment") or {}
    if not isinstance(env_raw, dict):
        raise ConfigError("environment", f"expected a mapping, got {env_raw!r}")
    family = env_raw.get("family", "planted")
    family = _as_str("environment.family", family)
    if family not in _ENV_FIELDS:
        raise ConfigError(
            "environment.family",
            f"must be one of {sorted(_ENV_FIELDS)}, got {family!r}",
        )
    env_rest = {k: v for k, v in env_raw.items() if k != "family"}
    environment = {"family": family}
    environment.update(_normalize_section(env_rest, _ENV_FIELDS[family], "environment"))

    bandit = _normalize_section(raw.get("bandit"), _BANDIT_FIELDS, "bandit")
    derived_n_tasks = _env_n_tasks(environment)
    if "n_tasks" in bandit and bandit["n_tasks"] != derived_n_tasks:
        raise ConfigError(
            "bandit.n_tasks",
            f"disagrees with the environment: config says {bandit['n_tasks']}, "
            f"environment defines {derived_n_tasks} tasks",
        )
    bandit["n_tasks"] = derived_n_tasks
    bandit = {k: bandit[k] for k in _BANDIT_FIELDS}  # restore canonical order

    stage2 = _normalize_section(raw.get("stage2"), _STAGE2_FIELDS, "stage2")

    normalized = {
        "schema_version": version,
        "mode": mode,
        "output_dir": output_dir,
        "environment": environment,
        "bandit": bandit,
        "stage2": stage2,
    }
    # Constructing the dataclasses runs their own invariant checks; translate
    # failures into key-named diagnostics.
    _build_stage_configs(normalized)
    return normalized


def _invariant_key(section: str, fields: dict[str, Field], message: str) -> str:
    """Best-effort dotted key for a dataclass invariant failure.

    Blames the field whose name appears earliest in the message, matched on
    word boundaries so short names cannot hit inside longer words.
    """
    hits = []
    for name in fields:
        m = re.search(rf"\b{re.escape(name)}\b", message)
        if m:
            hits.append((m.start(), name))
    if hits:
        return f"{section}.{min(hits)[1]}"
    return section


def _build_stage_configs(normalized: dict) -> tuple[BanditConfig, Stage2Config]:
    try:
        bandit = BanditConfig(**normalized["bandit"])
    except ValueError as exc:
        raise ConfigError(_invariant_key("bandit", _BANDIT_FIELDS, str(exc)), str(exc)) from exc
    try:
        stage2 = Stage2Config(**normalized["stage2"])
    except ValueError as exc:
        raise ConfigError(_invariant_key("stage2", _STAGE2_FIELDS, str(exc)), str(exc)) from exc
    if bandit.primary_task_id != 0:
        raise ConfigError(
            "bandit.primary_task_id",
            "the synthetic environments define task 0 as primary; must be 0",
        )
    env = dict(normalized["environment"])
    if env["family"] == "planted":
        if any(not (0.0 <= t <= 1.0) for t in env["theta_star"]):
            raise ConfigError("environment.theta_star", "entries must lie in [0, 1]")
        if env["score_noise"] < 0:
            raise ConfigError("environment.score_noise", "must be >= 0")
    else:
        if env["task_profile"][0] != "primary":
            raise ConfigError("environment.task_profile", "first entry must be 'primary'")
        if any(k not in ("useful", "harmful") for k in env["task_profile"][1:]):
            raise ConfigError(
                "environment.task_profile", "auxiliary entries must be 'useful' or 'harmful'"
            )
    return bandit, stage2


def to_pipeline_config(normalized: dict) -> PipelineConfig:
    """Turn a normalized config dict into the runnable dataclass."""
    bandit, stage2 = _build_stage_configs(normalized)
    return PipelineConfig(
        bandit=bandit,
        stage2=stage2,
        environment=dict(normalized["environment"]),
        mode=normalized["mode"],
        output_dir=normalized["output_dir"],
        normalized=normalized,
    )


def apply_overrides(raw: dict, overrides: dict[str, str]) -> dict:
    """Apply dotted-key overrides (values parsed as YAML scalars) to a raw config."""
    out = yaml.safe_load(yaml.safe_dump(raw)) if raw else {}
    for dotted, text in overrides.items():
        parts = dotted.split(".")
        if not all(parts):
            raise ConfigError(dotted, "override key must be non-empty dotted path")
        node = out
        for p in parts[:-1]:
            nxt = node.get(p)
            if nxt is None:
                nxt = {}
                node[p] = nxt
            if not isinstance(nxt, dict):
                raise ConfigError(dotted, f"cannot descend into non-mapping at '{p}'")
            node = nxt
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(dotted, f"unparseable override value {text!r}: {exc}") from exc
        node[parts[-1]] = value
    return out


def load_config(path: str | Path, overrides: dict[str, str] | None = None) -> dict:
    """Read a YAML config file, apply overrides, and normalize.

    Raises
    ------
    ConfigError
        For unreadable files, YAML syntax errors, or schema violations.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config file: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"invalid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(str(path), "top level of the config must be a mapping")
    if overrides:
        raw = apply_overrides(raw, overrides)
    return normalize(raw)


def dump_config(normalized: dict) -> str:
    """Serialize a normalized config as stable YAML (insertion order kept)."""
    return yaml.safe_dump(normalized, sort_keys=False, default_flow_style=False)

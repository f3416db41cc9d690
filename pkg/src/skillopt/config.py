"""Run configuration: an INI file with typed, validated keys and flag overrides."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from typing import Any, Callable, Iterable

from .strategies import VARIANTS

ADAPTERS = ("conflict", "concave", "tradeoff", "script", "jsonl")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Key:
    section: str
    name: str
    kind: Callable[[str], Any]
    default: Any
    check: Callable[[Any], str | None] | None = None

    @property
    def qualified(self) -> str:
        return f"{self.section}.{self.name}"


def _positive(v):
    return None if v > 0 else "must be positive"


def _non_negative(v):
    return None if v >= 0 else "must be >= 0"


def _optional_positive(v):
    return None if v is None or v > 0 else "must be positive"


def _one_of(options):
    def check(v):
        return None if v in options else f"must be one of {', '.join(options)}"
    return check


def _int(s: str) -> int:
    return int(s.strip())


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _opt_int(s: str) -> int | None:
    return None if s.strip() in ("", "none", "None") else int(s)


def _str(s: str) -> str:
    return s.strip()


KEYS: tuple[Key, ...] = (
    Key("run", "seed_skill", _str, ""),
    Key("run", "budget", _int, 200, _positive),
    Key("run", "minibatch_size", _int, 2, _positive),
    Key("run", "validation_size", _opt_int, None, _optional_positive),
    Key("run", "seed", _int, 0, _non_negative),
    Key("run", "workers", _int, 1, _positive),
    Key("run", "output_dir", _str, "runs/out"),
    Key("strategy", "variant", _str, "mocha", _one_of(VARIANTS)),
    Key("strategy", "buffer_capacity", _int, 5, _positive),
    Key("strategy", "beam_width", _int, 3, _positive),
    Key("strategy", "exploration_constant", _float, math.sqrt(2), _non_negative),
    Key("limits", "description", _int, 1024, _positive),
    Key("limits", "body", _int, 5000, _positive),
    Key("annealing", "tau0", _float, 0.1, _non_negative),
    Key("annealing", "tau_end", _float, 0.0, _non_negative),
    Key("annealing", "lambda", _float, 10.0, _positive),
    Key("annealing", "mode_epsilon", _float, 1e-3, _non_negative),
    Key("task", "adapter", _str, "conflict", _one_of(ADAPTERS)),
    Key("task", "script", _str, ""),
    Key("task", "landscape_seed", _int, 0, _non_negative),
    Key("task", "train", _str, ""),
    Key("task", "validation", _str, ""),
    Key("task", "endpoint", _str, ""),
    Key("task", "model", _str, ""),
    Key("task", "api_key_env", _str, "SKILLOPT_API_KEY"),
    Key("task", "timeout", _float, 60.0, _positive),
    Key("task", "max_tokens", _int, 4096, _positive),
    Key("task", "tries", _int, 3, _positive),
)

_BY_QUALIFIED = {k.qualified: k for k in KEYS}
_BY_NAME: dict[str, list[Key]] = {}
for _k in KEYS:
    _BY_NAME.setdefault(_k.name, []).append(_k)
SECTIONS = tuple(dict.fromkeys(k.section for k in KEYS))


def resolve_key(name: str) -> Key:
    """Look up ``section.key`` or a bare key name (dashes allowed for underscores)."""
    name = name.replace("-", "_")
    if name in _BY_QUALIFIED:
        return _BY_QUALIFIED[name]
    hits = _BY_NAME.get(name, [])
    if len(hits) == 1:
        return hits[0]
    if len(hits) > 1:
        raise ConfigError(f"{name}: ambiguous, use one of {', '.join(k.qualified for k in hits)}")
    raise ConfigError(f"{name}: unknown configuration key")


class RunConfig:
    """Validated key/value configuration addressed as ``cfg['run.budget']``."""

    def __init__(self, values: dict[str, Any]):
        self._values = dict(values)

    def __getitem__(self, qualified: str) -> Any:
        return self._values[qualified]

    def as_dict(self) -> dict[str, Any]:
        return dict(self._values)

    def to_ini(self) -> str:
        lines = []
        for section in SECTIONS:
            lines.append(f"[{section}]")
            for k in KEYS:
                if k.section == section:
                    v = self._values[k.qualified]
                    lines.append(f"{k.name} = {'' if v is None else (repr(v) if isinstance(v, float) else v)}")
            lines.append("")
        return "\n".join(lines)

    def validate(self) -> "RunConfig":
        problems = []
        for k in KEYS:
            if k.check is not None:
                msg = k.check(self._values[k.qualified])
                if msg:
                    problems.append(f"{k.qualified}: {msg}")
        if not self["annealing.tau0"] >= self["annealing.tau_end"]:
            problems.append("annealing.tau_end: must not exceed annealing.tau0")
        adapter = self["task.adapter"]
        if adapter == "script" and not self["task.script"]:
            problems.append("task.script: required when task.adapter = script")
        if adapter == "jsonl":
            for key in ("task.train", "task.validation", "task.endpoint", "task.model"):
                if not self[key]:
                    problems.append(f"{key}: required when task.adapter = jsonl")
            if not self["run.seed_skill"]:
                problems.append("run.seed_skill: required when task.adapter = jsonl")
        if problems:
            raise ConfigError("; ".join(problems))
        return self


def _coerce(key: Key, raw: str) -> Any:
    try:
        return key.kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key.qualified}: cannot parse {raw!r}") from None


def load_config(text: str | None = None, overrides: Iterable[tuple[str, str]] = ()) -> RunConfig:
    """Parse INI ``text`` (may be None for all defaults), apply overrides, validate."""
    values = {k.qualified: k.default for k in KEYS}
    if text:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        for section in parser.sections():
            if section not in SECTIONS:
                raise ConfigError(f"[{section}]: unknown section")
            for name, raw in parser.items(section):
                qualified = f"{section}.{name}"
                if qualified not in _BY_QUALIFIED:
                    raise ConfigError(f"{qualified}: unknown configuration key")
                values[qualified] = _coerce(_BY_QUALIFIED[qualified], raw)
    for name, raw in overrides:
        key = resolve_key(name)
        values[key.qualified] = _coerce(key, raw)
    return RunConfig(values).validate()


def split_overrides(args: Iterable[str]) -> list[tuple[str, str]]:
    """Turn ``--key=value`` / ``--key value`` tokens into pairs."""
    out = []
    items = list(args)
    i = 0
    while i < len(items):
        tok = items[i]
        if not tok.startswith("--") or tok == "--":
            raise ConfigError(f"unexpected argument {tok!r}")
        body = tok[2:]
        if "=" in body:
            name, value = body.split("=", 1)
        else:
            if i + 1 >= len(items):
                raise ConfigError(f"{tok}: missing value")
            name, value = body, items[i + 1]
            i += 1
        out.append((name, value))
        i += 1
    return out

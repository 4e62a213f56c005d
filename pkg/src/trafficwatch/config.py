"""Run configuration: file paths, input source and tunables.

Every tunable can be overridden from the environment as
``TRAFFICWATCH_<NAME>`` (e.g. ``TRAFFICWATCH_CONF_THRESHOLD=0.6``,
``TRAFFICWATCH_BAND_EDGES=0.5,0.8,1.0``). Relative paths in the config file
are resolved against the file's directory.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from typing import Mapping, Optional, Tuple

from .errors import ConfigError

ENV_PREFIX = "TRAFFICWATCH_"


@dataclass(frozen=True)
class Tunables:
    conf_threshold: float = 0.5
    window: int = 5
    debounce_k: int = 3
    debounce_n: int = 5
    band_edges: Tuple[float, float, float] = (0.5, 0.8, 1.0)
    hysteresis: float = 0.05
    alpha: float = 0.5
    advisory_edge: float = 1.0
    refresh_s: float = 30.0
    max_entries: int = 3
    slot_length_m: float = 7.0
    history_interval_s: float = 60.0
    retention_days: int = 28
    timezone: str = "UTC"

    def validate(self, where: str = "tunables") -> "Tunables":
        def bad(key, why):
            raise ConfigError(f"{where}.{key}: {why} (got {getattr(self, key)!r})")

        if not 0.0 <= self.conf_threshold <= 1.0:
            bad("conf_threshold", "must be in [0, 1]")
        if self.window < 1:
            bad("window", "must be >= 1")
        if not 1 <= self.debounce_k <= self.debounce_n:
            bad("debounce_k", "need 1 <= debounce_k <= debounce_n")
        e = self.band_edges
        if len(e) != 3 or not (0 < e[0] < e[1] < e[2]):
            bad("band_edges", "need three increasing positive edges")
        if not 0.0 <= self.hysteresis < e[0]:
            bad("hysteresis", "must be in [0, lowest band edge)")
        if not 0.0 <= self.alpha <= 1.0:
            bad("alpha", "must be in [0, 1]")
        if self.advisory_edge <= 0:
            bad("advisory_edge", "must be > 0")
        if self.refresh_s <= 0:
            bad("refresh_s", "must be > 0")
        if self.max_entries < 1:
            bad("max_entries", "must be >= 1")
        if self.slot_length_m <= 0:
            bad("slot_length_m", "must be > 0")
        if self.history_interval_s < 0:
            bad("history_interval_s", "must be >= 0")
        if self.retention_days < 1:
            bad("retention_days", "must be >= 1")
        return self


def _coerce(name: str, value, default, where: str):
    try:
        if isinstance(default, tuple):
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            return tuple(float(v) for v in value)
        if isinstance(default, bool):
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError("not an integer")
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{name}: cannot interpret {value!r}") from None


def tunables_from(mapping: Mapping, env: Optional[Mapping[str, str]] = None,
                  where: str = "tunables") -> Tunables:
    env = os.environ if env is None else env
    defaults = Tunables()
    known = {f.name for f in fields(Tunables)}
    unknown = set(mapping) - known
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(sorted(unknown))}")
    values = {}
    for f in fields(Tunables):
        default = getattr(defaults, f.name)
        if f.name in mapping:
            values[f.name] = _coerce(f.name, mapping[f.name], default, where)
        env_key = ENV_PREFIX + f.name.upper()
        if env_key in env:
            values[f.name] = _coerce(f.name, env[env_key], default, env_key)
    return replace(defaults, **values).validate(where)


@dataclass(frozen=True)
class RunConfig:
    streets: str
    boards: str
    cameras: str
    input: str
    history: str
    transitions_log: str
    anomaly_log: str
    graph: Optional[str] = None
    tunables: Tunables = field(default_factory=Tunables)
    source_path: Optional[str] = None

    @property
    def input_is_file(self) -> bool:
        return self.input.startswith("file://")

    @property
    def input_path(self) -> str:
        return self.input[len("file://"):]

    @classmethod
    def from_dict(cls, data: Mapping, base_dir: str = ".", source: str = "<config>",
                  env: Optional[Mapping[str, str]] = None) -> "RunConfig":
        if not isinstance(data, Mapping):
            raise ConfigError(f"{source}: config must be a JSON object")

        def path(key, required=True, default=None, must_exist=True):
            raw = data.get(key, default)
            if raw is None:
                if required:
                    raise ConfigError(f"{source}: missing key {key!r}")
                return None
            p = raw if os.path.isabs(raw) else os.path.join(base_dir, raw)
            if must_exist and not os.path.exists(p):
                raise ConfigError(f"{source}: {key} file not found: {p}")
            return p

        src = data.get("input")
        if not isinstance(src, str):
            raise ConfigError(f"{source}: missing key 'input'")
        if src.startswith("file://"):
            fp = src[len("file://"):]
            fp = fp if os.path.isabs(fp) else os.path.join(base_dir, fp)
            if not os.path.exists(fp):
                raise ConfigError(f"{source}: input file not found: {fp}")
            src = "file://" + fp
        elif src.startswith("tcp://"):
            host, _, port = src[len("tcp://"):].rpartition(":")
            if not host or not port.isdigit():
                raise ConfigError(f"{source}: input must look like tcp://host:port, got {src!r}")
        else:
            raise ConfigError(f"{source}: input must be file:// or tcp://, got {src!r}")

        tun = data.get("tunables", {})
        if not isinstance(tun, Mapping):
            raise ConfigError(f"{source}: tunables must be an object")
        return cls(
            streets=path("streets"),
            boards=path("boards"),
            cameras=path("cameras"),
            graph=path("graph", required=False),
            input=src,
            history=path("history", default="history.jsonl", must_exist=False),
            transitions_log=path("transitions_log", default="transitions.jsonl", must_exist=False),
            anomaly_log=path("anomaly_log", default="anomalies.jsonl", must_exist=False),
            tunables=tunables_from(tun, env, f"{source}: tunables"),
            source_path=source,
        )

    @classmethod
    def load(cls, path: str, env: Optional[Mapping[str, str]] = None) -> "RunConfig":
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(data, os.path.dirname(os.path.abspath(path)), path, env)

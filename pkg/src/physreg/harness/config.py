"""Key-value run configuration.

One ``key = value`` pair per line. Blank lines and ``#`` comments are
ignored. Values are kept as strings; typed accessors convert on demand and
raise :class:`ConfigError` with the offending key.

Example::

    # synthetic sweep
    T_grid = 128, 256, 512, 1024
    n_reps = 20
    sigma = 0.1
    operator = laplacian
"""

from __future__ import annotations

import json
from pathlib import Path

__all__ = ["ConfigError", "Config", "load_config", "parse_config"]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


class Config:
    def __init__(self, values: dict[str, str] | None = None, source: str = "<defaults>"):
        self._values = dict(values or {})
        self.source = source
        self._used: set[str] = set()

    def __contains__(self, key):
        return key in self._values

    def items(self):
        return sorted(self._values.items())

    def raw(self, key, default=None):
        self._used.add(key)
        return self._values.get(key, default)

    def set(self, key, value):
        self._values[key] = str(value)

    def _typed(self, key, default, conv, what):
        v = self.raw(key)
        if v is None:
            if default is _REQUIRED:
                raise ConfigError(f"missing required key {key!r}")
            return default
        try:
            return conv(v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: expected {what}, got {v!r}") from exc

    def str(self, key, default=None):
        return self._typed(key, default, lambda v: v, "a string")

    def int(self, key, default=None):
        return self._typed(key, default, _to_int, "an integer")

    def float(self, key, default=None):
        return self._typed(key, default, float, "a number")

    def bool(self, key, default=None):
        return self._typed(key, default, _to_bool, "true/false")

    def floats(self, key, default=None):
        return self._typed(key, default, lambda v: [float(x) for x in _split(v)], "a list of numbers")

    def ints(self, key, default=None):
        return self._typed(key, default, lambda v: [_to_int(x) for x in _split(v)], "a list of integers")

    def json(self, key, default=None):
        return self._typed(key, default, json.loads, "JSON")

    def unused(self) -> list[str]:
        return sorted(set(self._values) - self._used)

    def echo(self) -> str:
        return "\n".join(f"{k} = {v}" for k, v in self.items())


_REQUIRED = object()


def _split(v: str) -> list[str]:
    v = v.strip()
    if v.startswith("["):
        return [str(x) for x in json.loads(v)]
    return [x for x in (p.strip() for p in v.split(",")) if x]


def _to_int(v) -> int:
    f = float(v)
    if not f.is_integer():
        raise ValueError(v)
    return int(f)


def _to_bool(v: str) -> bool:
    t = v.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(v)


def parse_config(text: str, source: str = "<string>") -> Config:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in body.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return Config(values, source)


def load_config(path) -> Config:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))

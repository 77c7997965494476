"""Run configuration: flat key=value text or a JSON object.

Text files use one ``key = value`` pair per line, dotted keys for grouping
(``measurement.gamma = 1.0``), ``#`` for comments (whole line, or after the
value separated by whitespace). JSON files hold one object, nested objects
flatten to the same dotted keys. Values stay raw until a typed getter pulls
them, so every type error can point at the file line it came from.

There is deliberately no wall-clock or host-derived input anywhere: a config
plus a seed fully determines every output byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" or "warning"
    key: str
    message: str
    line: int | None = None

    def render(self, path: str) -> str:
        loc = f"{path}:{self.line}" if self.line else path
        return f"{loc}: {self.level}: {self.key}: {self.message}"


@dataclass
class ConfigDoc:
    """Parsed config: raw values with source lines, plus usage tracking.

    Getters mark keys as used; anything never read surfaces as an
    unknown-key warning after an experiment assembles its parameters.
    """

    path: str
    values: dict = field(default_factory=dict)  # key -> (raw value, line or None)
    used: set = field(default_factory=set)

    def has(self, key: str) -> bool:
        return key in self.values

    def line(self, key: str):
        return self.values[key][1] if key in self.values else None

    def _fail(self, key: str, message: str):
        raise ConfigError(f"{key}: {message}", line=self.line(key))

    def _raw(self, key: str, default, required: bool):
        self.used.add(key)
        if key not in self.values:
            if required:
                raise ConfigError(f"{key}: required key is missing")
            return default
        return self.values[key][0]

    def get_str(self, key: str, default=None, required=False, choices=None):
        v = self._raw(key, default, required)
        if v is None:
            return None
        v = str(v).strip() if not isinstance(v, str) else v.strip()
        if choices is not None and v not in choices:
            self._fail(key, f"expected one of {', '.join(choices)}, got {v!r}")
        return v

    def get_int(self, key: str, default=None, required=False, minimum=None):
        v = self._raw(key, default, required)
        if v is None:
            return None
        try:
            if isinstance(v, bool):
                raise ValueError
            out = int(str(v), 0) if isinstance(v, str) else int(v)
            if not isinstance(v, (int, str)):
                raise ValueError
        except ValueError:
            self._fail(key, f"expected an integer, got {v!r}")
        if minimum is not None and out < minimum:
            self._fail(key, f"must be >= {minimum}, got {out}")
        return out

    def get_float(self, key: str, default=None, required=False):
        v = self._raw(key, default, required)
        if v is None:
            return None
        try:
            if isinstance(v, bool):
                raise ValueError
            return float(v)
        except (TypeError, ValueError):
            self._fail(key, f"expected a number, got {v!r}")

    def get_complex(self, key: str, default=None, required=False):
        v = self._raw(key, default, required)
        if v is None:
            return None
        try:
            return complex(str(v).replace(" ", "")) if isinstance(v, str) else complex(v)
        except (TypeError, ValueError):
            self._fail(key, f"expected a complex number like 0.3+0.25j, got {v!r}")

    def get_bool(self, key: str, default=None, required=False):
        v = self._raw(key, default, required)
        if v is None:
            return None
        if isinstance(v, bool):
            return v
        s = str(v).strip().lower()
        if s in ("true", "1", "yes"):
            return True
        if s in ("false", "0", "no"):
            return False
        self._fail(key, f"expected true/false, got {v!r}")

    def get_float_list(self, key: str, default=None, required=False):
        v = self._raw(key, default, required)
        if v is None:
            return None
        if isinstance(v, str):
            parts = [s for s in (p.strip() for p in v.split(",")) if s]
        elif isinstance(v, (list, tuple)):
            parts = v
        else:
            parts = [v]
        try:
            out = [float(p) for p in parts]
        except (TypeError, ValueError):
            self._fail(key, f"expected comma-separated numbers, got {v!r}")
        if not out:
            self._fail(key, "expected at least one number")
        return out

    def set_override(self, key: str, value) -> None:
        """Command-line override; replaces any file value (no source line)."""
        self.values[key] = (value, None)

    def unused_keys(self):
        return sorted(k for k in self.values if k not in self.used)


def _flatten(obj, prefix, out, path):
    for k, v in obj.items():
        if not isinstance(k, str) or not k:
            raise ConfigError(f"non-string key {k!r} in JSON object")
        key = f"{prefix}.{k}" if prefix else k
        if isinstance(v, dict):
            _flatten(v, key, out, path)
        elif isinstance(v, (list, tuple)):
            if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
                raise ConfigError(f"{key}: JSON lists may only hold numbers")
            out[key] = (list(v), None)
        else:
            out[key] = (v, None)


def parse_config_text(text: str, path: str = "<config>") -> ConfigDoc:
    doc = ConfigDoc(path)
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e.msg}", line=e.lineno) from None
        if not isinstance(obj, dict):
            raise ConfigError("top-level JSON value must be an object")
        _flatten(obj, "", doc.values, path)
        return doc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        # Inline comments need whitespace before the hash.
        for i, ch in enumerate(line):
            if ch == "#" and i > 0 and line[i - 1] in " \t":
                line = line[:i].rstrip()
                break
        if "=" not in line:
            raise ConfigError(
                f"expected 'key = value', got {line!r}", line=lineno
            )
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError("empty key", line=lineno)
        if key in doc.values:
            raise ConfigError(
                f"duplicate key {key!r} (first set on line {doc.values[key][1]})",
                line=lineno,
            )
        doc.values[key] = (value, lineno)
    return doc


def load_config(path: str) -> ConfigDoc:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path!r}: {e.strerror}") from None
    return parse_config_text(text, path)

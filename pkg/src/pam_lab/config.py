"""Flat ``key=value`` experiment configs with a canonical form and hash.

A config file holds one ``key = value`` pair per line; ``#`` starts a
comment and keys may use dots for sections (``mc.paths = 2000``).  Values
are kept as normalized strings: rationals as ``p/q``, decimals in shortest
round-trip form, lists comma separated.  The canonical text is the sorted
``key=value`` lines and the hash is its SHA-256.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "normalize_value", "format_number",
           "EXECUTION_KEYS"]

# settings that change how a result is computed but never the result itself
EXECUTION_KEYS = frozenset({"mc.workers"})


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def format_number(v) -> str:
    """Shortest round-trip decimal string, or ``p/q`` for Fractions."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if isinstance(v, int):
        return str(v)
    f = float(v)
    if not math.isfinite(f):
        raise ConfigError(f"non-finite number {v!r}")
    if f.is_integer() and abs(f) < 2**53:
        return str(int(f))
    return repr(f)


def _normalize_atom(s: str) -> str:
    s = s.strip()
    if not s:
        raise ConfigError("empty value")
    if "/" in s:
        try:
            return format_number(Fraction(s))
        except (ValueError, ZeroDivisionError):
            return s
    try:
        return format_number(int(s))
    except ValueError:
        pass
    try:
        return format_number(float(s))
    except ValueError:
        return s.lower() if s.lower() in ("true", "false") else s


def normalize_value(raw: str) -> str:
    parts = [p for p in raw.split(",")]
    if len(parts) > 1:
        return ",".join(_normalize_atom(p) for p in parts)
    return _normalize_atom(raw)


def _parse_atom(s: str):
    if s in ("true", "false"):
        return s == "true"
    if "/" in s:
        try:
            return Fraction(s)
        except (ValueError, ZeroDivisionError):
            return s
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def with_overrides(self, pairs) -> "ExperimentConfig":
        out = dict(self.values)
        for item in pairs:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            k, v = item.split("=", 1)
            k = k.strip()
            if not k:
                raise ConfigError(f"override {item!r} has an empty key")
            out[k] = normalize_value(v)
        return ExperimentConfig(out)

    def identity(self) -> dict:
        """Values that determine the results, without execution settings."""
        return {k: self.values[k] for k in sorted(self.values) if k not in EXECUTION_KEYS}

    def canonical(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.identity().items())

    def to_text(self) -> str:
        """Full text form, execution settings included; ``parse_config`` inverts it."""
        return "".join(f"{k} = {self.values[k]}\n" for k in sorted(self.values))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    def __contains__(self, key) -> bool:
        return key in self.values

    def raw(self, key: str, default=None):
        return self.values.get(key, default)

    def get(self, key: str, default=None):
        """Parsed scalar: bool, int, Fraction, float or string."""
        if key not in self.values:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            return default
        v = self.values[key]
        if "," in v:
            raise ConfigError(f"{key} expects a single value, got a list")
        return _parse_atom(v)

    def get_list(self, key: str, default=None) -> list:
        if key not in self.values:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            return list(default)
        return [_parse_atom(p) for p in self.values[key].split(",")]

    def number(self, key: str, default=None) -> float:
        v = self.get(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float, Fraction)):
            raise ConfigError(f"{key} must be a number, got {v!r}")
        return float(v)

    def integer(self, key: str, default=None) -> int:
        v = self.get(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{key} must be an integer, got {v!r}")
        return v

    def numbers(self, key: str, default=None) -> list[float]:
        out = []
        for v in self.get_list(key, default):
            if isinstance(v, bool) or not isinstance(v, (int, float, Fraction)):
                raise ConfigError(f"{key} must be a list of numbers, got {v!r}")
            out.append(float(v))
        return out


def parse_config(text: str) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        k, v = line.split("=", 1)
        k = k.strip()
        if not k or any(c.isspace() for c in k):
            raise ConfigError(f"line {lineno}: bad key {k!r}")
        if k in values:
            raise ConfigError(f"line {lineno}: duplicate key {k!r}")
        values[k] = normalize_value(v)
    return ExperimentConfig(values)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)

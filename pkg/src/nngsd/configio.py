"""Versioned key/value text files shared by every tool in this package.

A file starts with a header line ``# nngsd-<kind> v<version>`` followed by
``key = value`` lines. Values are whitespace-separated tokens; a bare
``key =`` opens a multi-line numeric block (one row per following line,
ended by the next ``key`` line or EOF). Blank lines and ``#`` comments are
ignored. Repeated keys are kept in order, which is how profile lists are
written.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class ConfigError(ValueError):
    """Malformed config file (bad header, key, or value)."""


def format_float(x: float) -> str:
    """Full-precision decimal so written files parse back bit-exact."""
    return format(float(x), ".17g")


class ConfigDoc:
    """Parsed config file: kind, version, and ordered (key, value) entries.

    Single-line values are token lists; multi-line blocks are lists of
    token rows.
    """

    def __init__(self, kind: str, version: int,
                 entries: list[tuple[str, list[str] | list[list[str]]]],
                 source: str = "<config>"):
        self.kind = kind
        self.version = version
        self.entries = entries
        self.source = source

    def _err(self, msg: str) -> ConfigError:
        return ConfigError(f"{self.source}: {msg}")

    def has(self, key: str) -> bool:
        return any(k == key for k, _ in self.entries)

    def all_values(self, key: str) -> list[list[str] | list[list[str]]]:
        return [v for k, v in self.entries if k == key]

    def tokens(self, key: str, default: list[str] | None = None) -> list[str]:
        values = self.all_values(key)
        if not values:
            if default is not None:
                return default
            raise self._err(f"missing required key '{key}'")
        value = values[-1]
        if value and isinstance(value[0], list):
            raise self._err(f"key '{key}' is a multi-line block, expected a single line")
        return value  # type: ignore[return-value]

    def str_(self, key: str, default: str | None = None) -> str:
        toks = self.tokens(key, None if default is None else [default])
        if len(toks) != 1:
            raise self._err(f"key '{key}' expects a single value, got {len(toks)}")
        return toks[0]

    def float_(self, key: str, default: float | None = None) -> float:
        if default is not None and not self.has(key):
            return float(default)
        raw = self.str_(key)
        try:
            return float(raw)
        except ValueError:
            raise self._err(f"key '{key}': '{raw}' is not a number") from None

    def int_(self, key: str, default: int | None = None) -> int:
        if default is not None and not self.has(key):
            return int(default)
        raw = self.str_(key)
        try:
            return int(raw)
        except ValueError:
            raise self._err(f"key '{key}': '{raw}' is not an integer") from None

    def floats(self, key: str, default: Sequence[float] | None = None) -> np.ndarray:
        if default is not None and not self.has(key):
            return np.asarray(default, dtype=float)
        toks = self.tokens(key)
        try:
            return np.array([float(t) for t in toks], dtype=float)
        except ValueError:
            raise self._err(f"key '{key}': expected numbers, got {toks!r}") from None

    def matrix(self, key: str) -> np.ndarray:
        values = self.all_values(key)
        if not values:
            raise self._err(f"missing required key '{key}'")
        rows = values[-1]
        if not rows or not isinstance(rows[0], list):
            raise self._err(f"key '{key}' expects a multi-line block")
        try:
            data = [[float(t) for t in row] for row in rows]
        except ValueError:
            raise self._err(f"key '{key}': matrix rows must be numeric") from None
        widths = {len(r) for r in data}
        if len(widths) != 1:
            raise self._err(f"key '{key}': ragged matrix rows (widths {sorted(widths)})")
        return np.array(data, dtype=float)


def parse_config(text: str, expected_kind: str | None = None,
                 source: str = "<config>") -> ConfigDoc:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# nngsd-"):
        raise ConfigError(f"{source}: missing '# nngsd-<kind> v<N>' header line")
    header = lines[0][len("# nngsd-"):].split()
    if len(header) != 2 or not header[1].startswith("v"):
        raise ConfigError(f"{source}: malformed header {lines[0]!r}")
    kind = header[0]
    try:
        version = int(header[1][1:])
    except ValueError:
        raise ConfigError(f"{source}: malformed version in header {lines[0]!r}") from None
    if expected_kind is not None and kind != expected_kind:
        raise ConfigError(f"{source}: expected a '{expected_kind}' file, found '{kind}'")

    entries: list[tuple[str, list[str] | list[list[str]]]] = []
    block_rows: list[list[str]] | None = None
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if "=" in line:
            block_rows = None
            key, _, rhs = line.partition("=")
            key = key.strip()
            if not key or " " in key:
                raise ConfigError(f"{source}:{lineno}: bad key {key!r}")
            toks = rhs.split()
            if toks:
                entries.append((key, toks))
            else:
                block_rows = []
                entries.append((key, block_rows))
        else:
            if block_rows is None:
                raise ConfigError(f"{source}:{lineno}: data row outside a 'key =' block")
            block_rows.append(line.split())
    return ConfigDoc(kind, version, entries, source=source)


def read_config(path: str | Path, expected_kind: str | None = None) -> ConfigDoc:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc}") from exc
    return parse_config(text, expected_kind=expected_kind, source=str(p))


def _format_value(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return " ".join(_format_value(v) for v in value)


def write_config(path: str | Path, kind: str,
                 items: Iterable[tuple[str, object]], version: int = 1) -> None:
    """Write entries in order; 2-D arrays become multi-line blocks."""
    out = [f"# nngsd-{kind} v{version}"]
    for key, value in items:
        arr = np.asarray(value) if not isinstance(value, (str, int, float)) else None
        if arr is not None and arr.ndim == 2:
            out.append(f"{key} =")
            for row in arr:
                out.append("  " + " ".join(format_float(v) for v in row))
        else:
            out.append(f"{key} = {_format_value(value)}")
    Path(path).write_text("\n".join(out) + "\n")

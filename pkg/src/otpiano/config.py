"""Plain-text ``key = value`` config files shared by geometry and hand setup.

One assignment per line, ``#`` starts a comment, values are SI units.
A value is parsed as a bool (``true``/``false``), a float, a tuple of
floats (whitespace or comma separated), or kept as a bare string.
"""

from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    """Raised for unparseable config text or unknown keys."""


def _parse_value(raw: str):
    low = raw.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    tokens = raw.replace(",", " ").split()
    if not tokens:
        raise ConfigError("empty value")
    try:
        floats = [float(tok) for tok in tokens]
    except ValueError:
        return raw
    if len(floats) == 1:
        return floats[0]
    return tuple(floats)


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines into a dict.

    Raises ConfigError on lines that are neither blank, comment, nor
    assignment, and on duplicate keys.
    """
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _parse_value(raw.strip())
    return out


def load_config(path) -> dict:
    """Read and parse a config file."""
    return parse_config(Path(path).read_text(encoding="utf-8"))


def format_config(values: dict) -> str:
    """Render a dict back to canonical ``key = value`` text (sorted keys)."""
    lines = []
    for key in sorted(values):
        val = values[key]
        if isinstance(val, bool):
            rendered = "true" if val else "false"
        elif isinstance(val, tuple):
            rendered = " ".join(repr(float(x)) for x in val)
        elif isinstance(val, float):
            rendered = repr(val)
        else:
            rendered = str(val)
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"

"""Tiny structured key-value text format used for configs and manifests.

Layout: optional top-level `key = value` lines, then bracketed sections with
dotted names for nesting. `#` starts a comment. Values stay strings here;
schema code owns typing and validation.

    key = value
    [section]
    other = 1 2 3
    [section.sub]
    flag = true
"""

from __future__ import annotations

from .errors import ConfigError

Sections = dict[str, dict[str, str]]

TOP = ""


def parse(text: str, source: str = "<string>") -> Sections:
    sections: Sections = {TOP: {}}
    current = TOP
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if not current:
                raise ConfigError(f"{source}:{lineno}: empty section name")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in sections[current]:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        sections[current][key] = value.strip()
    if not sections[TOP]:
        del sections[TOP]
    return sections


def serialize(sections: Sections) -> str:
    """Canonical text: sorted sections and keys, top-level first."""
    lines: list[str] = []
    names = sorted(sections, key=lambda s: (s != TOP, s))
    for name in names:
        if name != TOP:
            if lines:
                lines.append("")
            lines.append(f"[{name}]")
        for key in sorted(sections[name]):
            lines.append(f"{key} = {sections[name][key]}")
    return "\n".join(lines) + "\n"


def fmt_float(x: float) -> str:
    return repr(float(x))


def fmt_list(xs) -> str:
    return " ".join(str(x) for x in xs)


def parse_bool(s: str, where: str) -> bool:
    low = s.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {s!r}")

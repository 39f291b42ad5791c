"""Key-value config files: ``key = value`` lines, ``#`` comments.

Values stay strings at parse time; typed accessors convert on demand so a
bad value is reported with its key name.
"""

from __future__ import annotations

from .errors import InvalidInputError, ParseError


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{source}:{lineno}: expected key = value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ParseError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ParseError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path: str) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=path)


def _convert(cfg: dict[str, str], key: str, kind, default):
    if key not in cfg:
        return default
    try:
        return kind(cfg[key])
    except ValueError as exc:
        raise InvalidInputError(f"config key {key!r}: {exc}") from exc


def get_float(cfg: dict[str, str], key: str, default: float | None = None):
    return _convert(cfg, key, float, default)


def get_int(cfg: dict[str, str], key: str, default: int | None = None):
    return _convert(cfg, key, int, default)


def get_str(cfg: dict[str, str], key: str, default: str | None = None):
    return cfg.get(key, default)


def check_known_keys(cfg: dict[str, str], known: set[str], source: str) -> None:
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise InvalidInputError(
            f"{source}: unknown config key(s) {', '.join(unknown)}; "
            f"known keys: {', '.join(sorted(known))}"
        )

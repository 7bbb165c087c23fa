"""SQL scripts shipped with the package."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .errors import UsageError

PREFIX = "bundled:"


def bundled_scripts() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("corpusdb.sql").iterdir()
                  if p.name.endswith(".sql"))


def resolve_script(name: str) -> Path:
    """A filesystem path for a script file or a ``bundled:<name>`` reference."""
    if not name.startswith(PREFIX):
        return Path(name)
    script = name[len(PREFIX):]
    if script not in bundled_scripts():
        raise UsageError(f"no bundled script {script!r}; available: "
                         + ", ".join(bundled_scripts()))
    return Path(str(resources.files("corpusdb.sql") / f"{script}.sql"))

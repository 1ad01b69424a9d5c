"""Versioned prompt templates shipped under ``templates/``."""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .errors import ConfigurationError

_VERSION = re.compile(r"^##\s*template-version:\s*(\S+)")


@dataclass(frozen=True)
class Template:
    name: str
    version: str
    body: str

    def render(self, **fields) -> str:
        try:
            return self.body.format(**fields)
        except KeyError as exc:
            raise ConfigurationError(f"template {self.name} needs field {exc}") from exc


def parse_template(name: str, text: str) -> Template:
    version, body = "0", []
    for line in text.splitlines():
        m = _VERSION.match(line)
        if m:
            version = m.group(1)
        elif not line.startswith("##"):
            body.append(line)
    return Template(name, version, "\n".join(body).strip())


@lru_cache(maxsize=None)
def _bundled(name: str) -> Template:
    try:
        text = resources.files("visinstruct").joinpath("templates", f"{name}.txt").read_text()
    except FileNotFoundError as exc:
        raise ConfigurationError(f"no bundled template {name!r}") from exc
    return parse_template(name, text)


def load_template(name: str, template_dir: str | Path | None = None) -> Template:
    """Load ``name`` from ``template_dir`` if given and present, else the bundled copy."""
    if template_dir:
        path = Path(template_dir) / f"{name}.txt"
        if path.is_file():
            return parse_template(name, path.read_text())
    return _bundled(name)

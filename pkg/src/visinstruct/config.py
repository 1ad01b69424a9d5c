"""Run configuration: built-in defaults < INI file < command-line overrides.

File layout::

    [run]
    timesteps = 50
    guidance = 5.0
    seed = 0
    out = runs

    [backend.TextGenerator]
    kind = Mock
    script = mock_demo.json          # relative to the config file

    [backend.Locator]
    kind = Http
    endpoint = ${LOCATOR_URL}/v1/locate
    credential_env = LOCATOR_TOKEN   # the token itself stays in the environment

``${NAME}`` is replaced by the environment variable ``NAME``; an unset
variable is a configuration error. Any field can be overridden with
``--set run.guidance=3`` or ``--set backend.Locator.endpoint=...``.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import os
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .backends import BackendDescriptor, BackendKind, Capability
from .errors import ConfigurationError

_ENV_REF = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")
RUNTIME_FIELDS = ("timesteps", "schedule", "guidance", "memory_fraction", "height", "width", "channels", "text_dim", "model_seed")
_BACKEND_KEYS = {"kind", "script", "endpoint", "credential_env", "model", "timeout_ms", "max_retries", "backoff_s", "max_concurrency"}


class EnvInterpolation(configparser.Interpolation):
    def __init__(self, environ=None):
        self.environ = os.environ if environ is None else environ

    def before_get(self, parser, section, option, value, defaults):
        def sub(m):
            name = m.group(1)
            if name not in self.environ:
                raise ConfigurationError(f"[{section}] {option}: environment variable {name} is not set")
            return self.environ[name]

        return _ENV_REF.sub(sub, value)


@dataclass
class RunConfig:
    timesteps: int = 50
    schedule: str = "linear"
    guidance: float = 5.0
    memory_fraction: float = 0.5
    height: int = 8
    width: int = 8
    channels: int = 16
    text_dim: int = 64
    model_seed: int = 0
    seed: int = 0
    parallel: int = 1
    out: str = "runs"
    kernel: str = ""  # empty: compiled if available, else python
    templates: str = ""  # empty: bundled templates
    timeout_ms: int = 30000
    max_retries: int = 2
    backoff_s: float = 0.5
    bindings: dict = field(default_factory=dict)  # Capability -> BackendDescriptor
    source: str | None = None

    def __post_init__(self):
        self.check()

    def check(self):
        problems = []
        if self.timesteps < 1:
            problems.append(f"timesteps must be >= 1, got {self.timesteps}")
        if not 0.0 <= self.memory_fraction <= 1.0:
            problems.append(f"memory_fraction must be in [0, 1], got {self.memory_fraction}")
        if self.parallel < 1:
            problems.append(f"parallel must be >= 1, got {self.parallel}")
        for name in ("height", "width", "channels", "text_dim"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.max_retries < 0 or self.timeout_ms <= 0 or self.backoff_s < 0:
            problems.append("retry settings must be non-negative with a positive timeout")
        if problems:
            raise ConfigurationError("invalid configuration: " + "; ".join(problems))

    def runtime_kwargs(self) -> dict:
        return {k: getattr(self, k) for k in RUNTIME_FIELDS}

    def snapshot(self) -> dict:
        """What a trace needs to re-execute a run; output location and parallelism excluded."""
        return {
            "runtime": self.runtime_kwargs(),
            "seed": self.seed,
            "templates": self.templates or None,
            "bindings": {str(c): self.bindings[c].snapshot() for c in sorted(self.bindings, key=str)},
        }

    @property
    def template_dir(self):
        return self.templates or None


_SCALARS = {f.name: f for f in fields(RunConfig) if f.name not in ("bindings", "source")}


def _coerce(name: str, raw: str, typ):
    try:
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
        return str(raw).strip()
    except ValueError:
        raise ConfigurationError(f"{name}: cannot read {raw!r} as {typ}") from None


def _run_value(key: str, raw: str):
    if key not in _SCALARS:
        raise ConfigurationError(f"unknown run setting {key!r}")
    return _coerce(f"run.{key}", raw, _SCALARS[key].type)


def _descriptor(cap: Capability, values: dict, base: dict, config_dir: Path | None) -> BackendDescriptor:
    unknown = set(values) - _BACKEND_KEYS
    if unknown:
        raise ConfigurationError(f"backend.{cap}: unknown key(s) {', '.join(sorted(unknown))}")
    try:
        kind = BackendKind(values.get("kind", ""))
    except ValueError:
        raise ConfigurationError(f"backend.{cap}: kind must be one of Mock, Http, Toy") from None
    script = values.get("script") or None
    if script and config_dir is not None and not Path(script).is_absolute():
        script = str((config_dir / script).resolve())
    options = {}
    if "max_concurrency" in values:
        options["max_concurrency"] = _coerce("max_concurrency", values["max_concurrency"], int)
    return BackendDescriptor(
        capability=cap,
        kind=kind,
        script=script,
        endpoint=values.get("endpoint") or None,
        credential_env=values.get("credential_env") or None,
        model=values.get("model") or None,
        timeout_ms=_coerce("timeout_ms", values.get("timeout_ms", base["timeout_ms"]), int),
        max_retries=_coerce("max_retries", values.get("max_retries", base["max_retries"]), int),
        backoff_s=_coerce("backoff_s", values.get("backoff_s", base["backoff_s"]), float),
        options=options,
    )


def parse_overrides(pairs) -> dict:
    """``["run.seed=3", "backend.Locator.kind=Mock"]`` -> nested dict of raw strings."""
    out = {"run": {}, "backend": {}}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigurationError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) == 1 or (parts[0] == "run" and len(parts) == 2):
            out["run"][parts[-1]] = value.strip()
        elif parts[0] == "backend" and len(parts) == 3:
            out["backend"].setdefault(parts[1], {})[parts[2]] = value.strip()
        else:
            raise ConfigurationError(f"--set key {key!r} must be run.<field> or backend.<Capability>.<key>")
    return out


def load_config(path=None, overrides=None, flags=None, environ=None) -> RunConfig:
    """Build a RunConfig. ``flags`` are parsed command-line values (None = not given)."""
    raw_run, raw_backends = {}, {}
    config_dir = None
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"config file {path} not found")
        config_dir = path.parent.resolve()
        parser = configparser.ConfigParser(interpolation=EnvInterpolation(environ), inline_comment_prefixes=("#", ";"))
        parser.optionxform = str  # keep capability names and keys as written
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
        for section in parser.sections():
            values = dict(parser.items(section))
            if section == "run":
                raw_run.update(values)
            elif section.startswith("backend."):
                raw_backends[section[len("backend."):]] = values
            else:
                raise ConfigurationError(f"{path}: unknown section [{section}]")
    ov = parse_overrides(overrides)
    raw_run.update(ov["run"])
    for cap, values in ov["backend"].items():
        raw_backends.setdefault(cap, {}).update(values)

    kwargs = {k: _run_value(k, v) for k, v in raw_run.items()}
    for k, v in (flags or {}).items():
        if v is not None:
            if k not in _SCALARS:
                raise ConfigurationError(f"unknown setting {k!r}")
            kwargs[k] = v
    base = {k: kwargs.get(k, _SCALARS[k].default) for k in ("timeout_ms", "max_retries", "backoff_s")}
    bindings = {}
    for name, values in raw_backends.items():
        try:
            cap = Capability(name)
        except ValueError:
            raise ConfigurationError(f"unknown capability [backend.{name}]") from None
        bindings[cap] = _descriptor(cap, values, base, config_dir)
    if kwargs.get("templates") and config_dir is not None and not Path(kwargs["templates"]).is_absolute():
        kwargs["templates"] = str((config_dir / kwargs["templates"]).resolve())
    return RunConfig(**kwargs, bindings=bindings, source=str(path) if path else None)


def derive_task_seed(global_seed: int, task_id: str) -> int:
    h = hashlib.blake2b(f"{int(global_seed)}\x1f{task_id}".encode(), digest_size=8, person=b"task-seed").digest()
    return int.from_bytes(h, "little") & (2**63 - 1)


def task_seeds(global_seed: int, task_ids) -> dict:
    seeds = {t: derive_task_seed(global_seed, t) for t in task_ids}
    if len(set(seeds.values())) != len(seeds):
        raise ConfigurationError("derived task seeds collide; change the global seed")
    return seeds


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    return dataclasses.replace(cfg, **changes)

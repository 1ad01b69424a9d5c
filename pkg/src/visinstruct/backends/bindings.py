from __future__ import annotations

import os
from pathlib import Path

from ..errors import ConfigurationError
from .base import BackendSet
from .cassette import RecordingBackend
from .http import HttpBackend
from .mock import MockBackend, MockScript
from .toy import ToyImageGenerator
from .types import EVAL_CAPABILITIES, RUN_CAPABILITIES, BackendDescriptor, BackendKind, Capability

REQUIRED = {"run": RUN_CAPABILITIES, "eval": EVAL_CAPABILITIES, "replay": ()}


def validate_bindings(bindings: dict, command: str = "run", environ=None) -> dict:
    """Check every capability ``command`` needs is bound and resolvable.

    All problems are collected and raised together as one ConfigurationError.
    """
    environ = os.environ if environ is None else environ
    problems = []
    bound = {}
    for key, desc in bindings.items():
        try:
            cap = Capability(key)
        except ValueError:
            problems.append(f"unknown capability {key!r}")
            continue
        bound[cap] = desc
    for cap in REQUIRED[command]:
        if cap not in bound:
            problems.append(f"capability {cap} is not bound (required by '{command}')")
    for cap, d in bound.items():
        if d.kind is BackendKind.MOCK:
            if not d.script:
                problems.append(f"{cap}: Mock binding needs a script file")
            elif not Path(d.script).is_file():
                problems.append(f"{cap}: mock script {d.script} not found")
        elif d.kind is BackendKind.HTTP:
            if not d.endpoint:
                problems.append(f"{cap}: Http binding needs an endpoint")
            if not d.credential_env:
                problems.append(f"{cap}: Http binding needs credential_env (name of the variable)")
            elif not environ.get(d.credential_env):
                problems.append(f"{cap}: credential variable {d.credential_env} is not set")
        elif d.kind is BackendKind.TOY and cap is not Capability.IMAGE_GENERATOR:
            problems.append(f"{cap}: Toy kind only implements ImageGenerator")
    if problems:
        raise ConfigurationError(
            "backend bindings invalid:\n" + "\n".join(f"  - {p}" for p in problems)
        )
    return bound


class BackendFactory:
    """Builds a fresh BackendSet per task; scripts are parsed once and copied."""

    def __init__(self, bindings: dict, runtime=None, cassette_dir=None, environ=None):
        self.bindings = {Capability(k): v for k, v in bindings.items()}
        self.runtime = runtime
        self.cassette_dir = Path(cassette_dir) if cassette_dir else None
        self.environ = environ
        self._scripts = {}

    def _script(self, path) -> MockScript:
        if path not in self._scripts:
            self._scripts[path] = MockScript.load(path)
        return self._scripts[path].copy()

    def build(self, task_id: str | None = None, capabilities=None) -> BackendSet:
        backends, scripts = {}, {}
        for cap, d in self.bindings.items():
            if capabilities is not None and cap not in capabilities:
                continue
            if d.kind is BackendKind.MOCK:
                # capabilities sharing a script file share its consumption state
                if d.script not in scripts:
                    scripts[d.script] = self._script(d.script)
                b = MockBackend(cap, scripts[d.script])
            elif d.kind is BackendKind.HTTP:
                b = HttpBackend(d, environ=self.environ)
                if self.cassette_dir is not None:
                    self.cassette_dir.mkdir(parents=True, exist_ok=True)
                    b = RecordingBackend(b, self.cassette_dir / f"{task_id or 'session'}.{cap.value}.jsonl")
            elif d.kind is BackendKind.TOY:
                if self.runtime is None:
                    raise ConfigurationError("Toy binding needs a diffusion runtime")
                b = ToyImageGenerator(self.runtime, cap)
            else:
                raise ConfigurationError(f"unsupported backend kind {d.kind}")
            backends[cap] = b
        return BackendSet(backends)


def descriptor(capability, kind, **kw) -> BackendDescriptor:
    return BackendDescriptor(Capability(capability), BackendKind(kind), **kw)

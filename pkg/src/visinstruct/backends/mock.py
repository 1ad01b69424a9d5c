"""Scripted, deterministic backends for tests and offline runs.

A script is JSON::

    {"strict": false,
     "entries": [
        {"capability": "TextGenerator",
         "match": {"purpose": "detect", "step": 3, "category": "Identity"},
         "response": "Modify(the dough, the dough ball)"},
        {"capability": "Locator", "match": {"expression": "bread"}, "response": {"mask": "empty"}}
     ]}

Each entry answers at most one request: the first unconsumed entry whose
capability and matcher fit wins. Unmatched requests fail in strict mode and
fall back to :mod:`.stubs` otherwise. A response of ``{"error": "..."}``
simulates a backend failure; the message is raised verbatim.
"""
from __future__ import annotations

import copy
import json
import logging
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import BackendUnavailableError, ConfigurationError, MockScriptMismatch
from .base import Backend
from .stubs import stub_response
from .types import BackendKind, Capability, MaskResult
from .wire import from_wire, request_hash

log = logging.getLogger(__name__)

_TEXT_CAPS = (Capability.TEXT_GENERATOR, Capability.CAPTIONER)
_EQUALITY_KEYS = ("purpose", "step", "category", "task", "expression", "text", "granularity")


@dataclass
class ScriptEntry:
    capability: Capability
    match: dict
    response: object
    consumed: bool = False
    attempts: int = 1  # reported attempt count (replays reproduce recorded retries)

    def matches(self, capability: Capability, request: dict) -> bool:
        if self.consumed or capability is not self.capability:
            return False
        for key, want in self.match.items():
            if key in _EQUALITY_KEYS:
                if request.get(key) != want:
                    return False
            elif key == "contains":
                haystack = " ".join(
                    str(request.get(k, "")) for k in ("prompt", "text", "expression")
                )
                if want not in haystack:
                    return False
            elif key == "request_hash":
                if request_hash(capability.value, request) != want:
                    return False
            else:
                raise ConfigurationError(f"unknown matcher key {key!r} in mock script")
        return True


class MockScript:
    def __init__(self, entries=(), strict: bool = False, source: str | None = None):
        self.entries = list(entries)
        self.strict = strict
        self.source = source
        self._lock = threading.Lock()

    @classmethod
    def from_dict(cls, data: dict, source=None) -> "MockScript":
        try:
            entries = [
                ScriptEntry(
                    Capability(e["capability"]), dict(e.get("match", {})), e["response"],
                    attempts=int(e.get("attempts", 1)),
                )
                for e in data.get("entries", [])
            ]
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(f"malformed mock script {source or ''}: {exc}") from exc
        return cls(entries, bool(data.get("strict", False)), source)

    @classmethod
    def load(cls, path) -> "MockScript":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read mock script {path}: {exc}") from exc
        return cls.from_dict(data, source=str(path))

    @classmethod
    def from_cassette(cls, path, strict: bool = True) -> "MockScript":
        """Serve a recorded cassette: each line answers the request with its hash."""
        entries = []
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            row = json.loads(line)
            entries.append(
                ScriptEntry(Capability(row["capability"]), {"request_hash": row["request_hash"]}, row["response"])
            )
        return cls(entries, strict, source=str(path))

    def copy(self) -> "MockScript":
        return MockScript(copy.deepcopy(self.entries), self.strict, self.source)

    def take(self, capability: Capability, request: dict) -> ScriptEntry | None:
        with self._lock:
            for entry in self.entries:
                if entry.matches(capability, request):
                    entry.consumed = True
                    return entry
        return None

    def unconsumed(self) -> list[ScriptEntry]:
        return [e for e in self.entries if not e.consumed]


def _box_mask(image, box) -> MaskResult:
    r0, r1, c0, c1 = box
    mask = np.zeros((image.height, image.width), dtype=bool)
    mask[r0:r1, c0:c1] = True
    return MaskResult(mask, 0.9 if mask.any() else 0.0)


def resolve_response(capability: Capability, request: dict, response) -> dict:
    """Expand script shorthand into a full response object."""
    if response == "stub":
        return stub_response(capability, request)
    if isinstance(response, str):
        if capability in _TEXT_CAPS:
            return {"text": response}
        raise ConfigurationError(f"string response {response!r} not valid for {capability}")
    if not isinstance(response, dict):
        raise ConfigurationError(f"mock response for {capability} must be a string or object")
    if "error" in response:
        attempts = int(response.get("attempts", 1))
        raise BackendUnavailableError(str(response["error"]), attempts)
    if capability is Capability.LOCATOR:
        mask = response.get("mask")
        if mask == "empty":
            return {"mask": _box_mask(request["image"], (0, 0, 0, 0))}
        if isinstance(mask, dict) and "box" in mask:
            return {"mask": _box_mask(request["image"], mask["box"])}
    if response.get("image") == "stub":
        return {**stub_response(capability, request), **{k: v for k, v in response.items() if k != "image"}}
    return from_wire(response)


class MockBackend(Backend):
    kind = BackendKind.MOCK

    def __init__(self, capability, script: MockScript):
        super().__init__(capability)
        self.script = script

    def invoke(self, request: dict):
        entry = self.script.take(self.capability, request)
        if entry is None:
            if self.script.strict:
                raise MockScriptMismatch(
                    f"strict mock: no script entry for {self.capability} request "
                    f"(purpose={request.get('purpose')}, step={request.get('step')}, "
                    f"category={request.get('category')})"
                )
            return stub_response(self.capability, request), 1
        return resolve_response(self.capability, request, entry.response), entry.attempts

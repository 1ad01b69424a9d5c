"""Record live calls as JSON lines of (capability, request hash, response)."""
from __future__ import annotations

import json
import threading
from pathlib import Path

from .base import Backend
from .wire import request_hash, to_wire


class RecordingBackend(Backend):
    def __init__(self, inner: Backend, path):
        super().__init__(inner.capability)
        self.inner = inner
        self.kind = inner.kind
        self.path = Path(path)
        self._lock = threading.Lock()

    def invoke(self, request: dict):
        response, attempts = self.inner.invoke(request)
        row = {
            "capability": self.capability.value,
            "request_hash": request_hash(self.capability.value, request),
            "response": to_wire(response),
        }
        with self._lock, self.path.open("a") as fh:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
        return response, attempts

from __future__ import annotations

import logging
import threading
import time
from dataclasses import asdict, dataclass

from ..errors import BackendError, ContractError
from .types import REQUEST_SCHEMA, RESPONSE_SCHEMA, BackendKind, Capability, check_schema
from .wire import from_wire, request_hash, to_wire

log = logging.getLogger(__name__)


class Backend:
    """Adapter for one capability. ``invoke`` returns ``(response, attempts)``."""

    kind: BackendKind = BackendKind.MOCK

    def __init__(self, capability: Capability):
        self.capability = Capability(capability)

    def invoke(self, request: dict):
        raise NotImplementedError


@dataclass
class CallRecord:
    seq: int
    capability: str
    purpose: str | None
    step: int | None
    category: str | None
    request_hash: str
    response: dict | None  # wire form; None for Toy calls (recomputed on replay)
    response_digest: str | None
    attempts: int
    ok: bool
    error: str | None
    latency_ms: float

    def to_trace(self) -> dict:
        d = asdict(self)
        d.pop("latency_ms")  # wall-clock data lives in the timings sidecar
        return d


class BackendLog:
    def __init__(self):
        self._lock = threading.Lock()
        self.records: list[CallRecord] = []

    def append(self, **fields) -> CallRecord:
        with self._lock:
            rec = CallRecord(seq=len(self.records), **fields)
            self.records.append(rec)
            return rec

    def since(self, seq: int) -> list[CallRecord]:
        with self._lock:
            return self.records[seq:]

    def __len__(self):
        return len(self.records)


def _digest(response) -> str | None:
    img = response.get("image") if isinstance(response, dict) else None
    return img.digest() if img is not None and hasattr(img, "digest") else None


class BackendSet:
    """The bound backends for one task run, plus their shared call log."""

    def __init__(self, backends: dict, log_: BackendLog | None = None):
        self.backends = {Capability(k): v for k, v in backends.items()}
        self.log = log_ or BackendLog()

    def __contains__(self, capability) -> bool:
        return Capability(capability) in self.backends

    def kind(self, capability) -> BackendKind:
        return self.backends[Capability(capability)].kind

    def call(self, capability, request: dict) -> dict:
        cap = Capability(capability)
        if cap not in self.backends:
            raise ContractError(f"capability {cap} is not bound")
        check_schema(cap, request, REQUEST_SCHEMA, "request")
        backend = self.backends[cap]
        rhash = request_hash(cap.value, request)
        meta = dict(purpose=request.get("purpose"), step=request.get("step"), category=request.get("category"))
        t0 = time.perf_counter()
        try:
            response, attempts = backend.invoke(request)
            check_schema(cap, response, RESPONSE_SCHEMA, "response")
        except BackendError as exc:
            self.log.append(
                capability=cap.value, request_hash=rhash, response=None, response_digest=None,
                attempts=getattr(exc, "attempts", 1) or 1, ok=False, error=str(exc),
                latency_ms=(time.perf_counter() - t0) * 1e3, **meta,
            )
            raise
        wire = None
        if backend.kind is not BackendKind.TOY:
            # every non-toy response is consumed in its wire form, so Mock, Http
            # and replayed bindings hand the engine identical values
            wire = to_wire(response)
            response = from_wire(wire)
        self.log.append(
            capability=cap.value, request_hash=rhash, response=wire, response_digest=_digest(response),
            attempts=attempts, ok=True, error=None,
            latency_ms=(time.perf_counter() - t0) * 1e3, **meta,
        )
        return response

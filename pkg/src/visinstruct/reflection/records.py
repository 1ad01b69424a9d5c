"""Step records and the append-only JSON-lines run trace.

A trace file is one header line, one line per completed step, and a footer
line written when the task finishes or aborts. Every line is flushed and
fsynced as it is written, so a crash leaves all completed steps readable.
Wall-clock data goes to a separate ``timings.jsonl`` so the trace itself is
byte-identical across reruns with the same seeds.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .. import __version__
from ..diffusion import LatentGrid, TokenTrace
from ..errors import ContractError, ValidationError
from ..memory import Provenance
from .commands import ErrorType, ToolCommand

TRACE_FORMAT = 1


class Verdict(str, Enum):
    DRAFT = "Draft"
    REVISED = "Revised"
    NOT_APPLICABLE = "NotApplicable"

    def __str__(self):
        return self.value


def trace_digest(trace: TokenTrace | None) -> str | None:
    if trace is None:
        return None
    blob = json.dumps(trace.to_dict(), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class StepRecord:
    step_index: int
    description: str
    historical_prompt: str
    condition_text: str
    seed: int
    draft_image: LatentGrid
    final_image: LatentGrid
    memory_provenance: Provenance
    memory_in: dict | None = None
    detected: tuple[ErrorType, ToolCommand] | None = None
    revised_image: LatentGrid | None = None
    referee_verdict: Verdict = Verdict.NOT_APPLICABLE
    detector_calls: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    calibration: dict = field(default_factory=lambda: {"ran": False})
    memory_digest: str | None = None
    backend_calls: list = field(default_factory=list)
    latencies_ms: list[float] = field(default_factory=list)
    images: dict = field(default_factory=dict)  # kind -> relative file stem

    def check(self) -> None:
        if self.detected is None:
            if self.revised_image is not None or self.referee_verdict is not Verdict.NOT_APPLICABLE:
                raise ContractError(f"step {self.step_index}: no detection but an edit was recorded")
            if self.final_image != self.draft_image:
                raise ContractError(f"step {self.step_index}: final differs from draft without an edit")
        revised = self.referee_verdict is Verdict.REVISED
        calibrated = self.memory_provenance is Provenance.FROM_CALIBRATION
        if revised != calibrated and not (revised and self.calibration.get("fallback")):
            raise ContractError(f"step {self.step_index}: verdict/provenance coupling broken")

    def to_dict(self) -> dict:
        self.check()
        det = None
        if self.detected is not None:
            det = {"category": str(self.detected[0]), "command": self.detected[1].serialize()}
        return {
            "kind": "step",
            "step_index": self.step_index,
            "description": self.description,
            "historical_prompt": self.historical_prompt,
            "condition_text": self.condition_text,
            "seed": self.seed,
            "memory_in": self.memory_in,
            "draft_digest": self.draft_image.digest(),
            "detector_calls": self.detector_calls,
            "detected": det,
            "revised_digest": self.revised_image.digest() if self.revised_image is not None else None,
            "referee_verdict": str(self.referee_verdict),
            "final_digest": self.final_image.digest(),
            "memory_provenance": str(self.memory_provenance),
            "memory_digest": self.memory_digest,
            "calibration": self.calibration,
            "notes": self.notes,
            "images": self.images,
            "backend_calls": [c.to_trace() for c in self.backend_calls],
        }


@dataclass
class RunTrace:
    task_id: str
    header: dict
    steps: list[dict]
    footer: dict | None = None
    records: list[StepRecord] = field(default_factory=list)  # in-memory only
    path: Path | None = None

    @property
    def status(self) -> str:
        return self.footer.get("status", "incomplete") if self.footer else "incomplete"

    @property
    def complete(self) -> bool:
        return self.status == "complete"

    @property
    def config(self) -> dict:
        return self.header["config"]

    @property
    def seeds(self) -> dict:
        return self.header["seeds"]


def config_hash(snapshot: dict) -> str:
    blob = json.dumps(snapshot, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def make_header(task: dict, snapshot: dict, seeds: dict, kernel: str) -> dict:
    return {
        "kind": "header",
        "format_version": TRACE_FORMAT,
        "package_version": __version__,
        "task_id": task["id"],
        "n_steps": len(task["steps"]),
        "task": task,
        "config_hash": config_hash(snapshot),
        "config": snapshot,
        "seeds": seeds,
        "kernel": kernel,
    }


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class TraceWriter:
    """Crash-safe appender for one task's trace and timings sidecar."""

    def __init__(self, path, timings_path=None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8")
        self._timings = open(timings_path, "w", encoding="utf-8") if timings_path else None

    def _write(self, fh, obj):
        fh.write(_dump(obj) + "\n")
        fh.flush()
        os.fsync(fh.fileno())

    def header(self, header: dict):
        self._write(self._fh, header)

    def step(self, record: StepRecord) -> dict:
        d = record.to_dict()
        self._write(self._fh, d)
        if self._timings:
            self._write(self._timings, {"step_index": record.step_index, "latencies_ms": record.latencies_ms})
        return d

    def footer(self, status: str, error: str | None = None, failed_step: int | None = None):
        self._write(self._fh, {"kind": "footer", "status": status, "error": error, "failed_step": failed_step})

    def close(self):
        self._fh.close()
        if self._timings:
            self._timings.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def load_trace(path) -> RunTrace:
    path = Path(path)
    try:
        lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    except OSError as exc:
        raise ValidationError(f"cannot read trace {path}: {exc}") from exc
    try:
        rows = [json.loads(ln) for ln in lines]
    except json.JSONDecodeError as exc:
        raise ValidationError(f"trace {path} is not valid JSON lines: {exc}") from exc
    if not rows or rows[0].get("kind") != "header":
        raise ValidationError(f"trace {path} has no header line")
    header = rows[0]
    steps = [r for r in rows[1:] if r.get("kind") == "step"]
    footers = [r for r in rows[1:] if r.get("kind") == "footer"]
    return RunTrace(header["task_id"], header, steps, footers[-1] if footers else None, path=path)

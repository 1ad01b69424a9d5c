"""Re-execute a recorded run against its own recorded backend responses.

Every non-toy call in the trace becomes a strict mock entry keyed by its
request hash; the toy generator is recomputed with the recorded kernel. The
replayed run must reproduce every step record, final image digests first.
"""
from __future__ import annotations

import json
import tempfile
from dataclasses import dataclass
from pathlib import Path
from types import SimpleNamespace

from . import __version__
from .backends import BackendKind, BackendSet, Capability, MockBackend, MockScript, ToyImageGenerator
from .backends.mock import ScriptEntry
from .diffusion import AVAILABLE_KERNELS
from .errors import ValidationError
from .reflection.records import TRACE_FORMAT, RunTrace, config_hash, load_trace
from .reflection.engine import run_task
from .runtime import DiffusionRuntime


@dataclass
class ReplayResult:
    task_id: str
    ok: bool
    steps_checked: int
    divergent_step: int | None = None
    reason: str | None = None

    def describe(self) -> str:
        if self.ok:
            return f"{self.task_id}: replay identical over {self.steps_checked} step(s)"
        return f"{self.task_id}: diverged at step {self.divergent_step}: {self.reason}"


def check_compatible(trace: RunTrace) -> None:
    h = trace.header
    problems = []
    if h.get("format_version") != TRACE_FORMAT:
        problems.append(f"trace format {h.get('format_version')} but this build reads format {TRACE_FORMAT}")
    if h.get("package_version") != __version__:
        problems.append(f"trace written by version {h.get('package_version')}, this is {__version__}")
    if config_hash(h.get("config", {})) != h.get("config_hash"):
        problems.append("config snapshot does not match its recorded hash")
    if h.get("kernel") not in AVAILABLE_KERNELS:
        problems.append(f"kernel {h.get('kernel')!r} is not available in this build")
    if "task" not in h:
        problems.append("header lacks the task definition")
    if problems:
        raise ValidationError(f"refusing to replay {trace.path}", problems)


def recorded_script(trace: RunTrace) -> MockScript:
    entries = []
    for step in trace.steps:
        for call in step["backend_calls"]:
            if call["ok"] and call["response"] is None:
                continue  # toy call, recomputed
            response = call["response"] if call["ok"] else {"error": call["error"], "attempts": call["attempts"]}
            entries.append(
                ScriptEntry(Capability(call["capability"]), {"request_hash": call["request_hash"]}, response,
                            attempts=call["attempts"])
            )
    return MockScript(entries, strict=True, source=str(trace.path))


def _first_difference(a: dict, b: dict) -> str | None:
    if a.get("final_digest") != b.get("final_digest"):
        return "final image digest differs"
    for key in sorted(set(a) | set(b)):
        if a.get(key) != b.get(key):
            return f"field {key!r} differs"
    return None


def replay(path, work_dir=None) -> ReplayResult:
    trace = load_trace(path)
    check_compatible(trace)
    h = trace.header
    cfg = h["config"]
    runtime = DiffusionRuntime.create(**cfg["runtime"], kernel=h["kernel"])
    script = recorded_script(trace)
    backends = {}
    for name, desc in cfg["bindings"].items():
        cap = Capability(name)
        if BackendKind(desc["kind"]) is BackendKind.TOY:
            backends[cap] = ToyImageGenerator(runtime, cap)
        else:
            backends[cap] = MockBackend(cap, script)
    task = SimpleNamespace(**h["task"])
    seeds = {k: v for k, v in h["seeds"].items() if k != "task"}
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(work_dir) if work_dir else Path(tmp)
        again = run_task(
            task, BackendSet(backends), runtime, out, task_seed=h["seeds"]["task"],
            config_snapshot=cfg, seeds=seeds, template_dir=cfg.get("templates"),
        )
    replayed = [json.loads(json.dumps(d)) for d in again.steps]  # compare in JSON form
    n = len(trace.steps)
    for k in range(max(n, len(again.steps))):
        if k >= n or k >= len(again.steps):
            return ReplayResult(trace.task_id, False, min(k, n), k,
                                f"recorded {n} step(s), replay produced {len(again.steps)}")
        why = _first_difference(trace.steps[k], replayed[k])
        if why:
            return ReplayResult(trace.task_id, False, k, k, why)
    if (trace.footer or {}).get("status") != (again.footer or {}).get("status"):
        return ReplayResult(trace.task_id, False, n, n, f"run status {trace.status} but replay ended {again.status}")
    return ReplayResult(trace.task_id, True, n)

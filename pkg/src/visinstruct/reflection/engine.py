"""The per-step self-reflection loop and the task-level driver.

For each step: generate a draft (conditioned on the previous step's memory),
query the detector category by category until one reports an error, apply at
most one tool edit, let the referee choose between draft and edit, then store
this step's memory. An accepted edit rebuilds memory by inversion.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

from ..backends import BackendSet, Capability
from ..diffusion import LatentGrid, get_kernel, invert
from ..errors import (
    BackendError,
    CalibrationError,
    CommandParseError,
    ContractError,
    TaskAborted,
    ValidationError,
)
from ..memory import (
    MemoryStore,
    StepContext,
    build_historical_prompt,
    calibrate_memory,
    encode_condition,
)
from ..prompts import load_template
from ..raster import save_image
from ..runtime import DiffusionRuntime
from ..text import tokenize
from .commands import (
    EXPECTED_VERB,
    PAIRWISE,
    Add,
    ErrorType,
    Modify,
    NoError,
    Regenerate,
    Remove,
    ToolCommand,
    check_order,
    parse_command,
)
from .records import RunTrace, StepRecord, TraceWriter, Verdict, make_header, trace_digest

log = logging.getLogger(__name__)

_DETECT_TEMPLATE = {
    ErrorType.RELATION: "detect_relation",
    ErrorType.IDENTITY: "detect_identity",
    ErrorType.ATTRIBUTE: "detect_attribute",
    ErrorType.OBJECT: "detect_object",
}
REPROMPT_SUFFIX = (
    "\nYour previous answer could not be read: {raw!r}. "
    "Reply with exactly one command in the format shown above, or NoError."
)


def step_seed(task_seed: int, step: int) -> int:
    h = hashlib.blake2b(f"{task_seed}:{step}".encode(), digest_size=4).digest()
    return int.from_bytes(h, "little")


# -- detection ---------------------------------------------------------------


@dataclass
class Detection:
    command: ToolCommand
    entry: dict


def detect(
    error_type: ErrorType,
    draft: LatentGrid,
    description: str,
    task_title: str,
    prev: tuple[str, LatentGrid] | None,
    backends: BackendSet,
    step: int = 0,
    task_id: str | None = None,
    template_dir=None,
) -> Detection:
    """Ask the detector about one error category.

    Anything other than the category's own verb comes back as NoError; the
    entry's ``status`` says why (ok, mismatch, parse_failure, backend_failure).
    """
    error_type = ErrorType(error_type)
    if (prev is not None) != (error_type in PAIRWISE):
        raise ContractError(f"{error_type} check {'needs' if prev is None else 'takes no'} previous step")
    tpl = load_template(_DETECT_TEMPLATE[error_type], template_dir)
    fields = {"task": task_title, "step": description}
    images = [draft]
    if prev is not None:
        fields["previous_step"] = prev[0]
        images = [prev[1], draft]
    base_prompt = tpl.render(**fields)
    entry = {"category": str(error_type), "replies": [], "status": "ok", "command": "NoError"}

    def ask(prompt, attempt):
        reply = backends.call(
            Capability.TEXT_GENERATOR,
            {
                "purpose": "detect", "task": task_id, "step": step, "category": str(error_type),
                "attempt": attempt, "prompt": prompt, "template_version": tpl.version, "images": images,
            },
        )
        entry["replies"].append(reply["text"])
        return reply["text"]

    try:
        raw = ask(base_prompt, 1)
        try:
            cmd = parse_command(raw)
        except CommandParseError:
            raw2 = ask(base_prompt + REPROMPT_SUFFIX.format(raw=raw), 2)
            try:
                cmd = parse_command(raw2)
            except CommandParseError as exc:
                log.warning("step %d %s: detector reply unparsable twice (%s); treating as NoError", step, error_type, exc)
                entry["status"] = "parse_failure"
                return Detection(NoError(), entry)
    except BackendError as exc:
        log.warning("step %d %s: detector unavailable, skipping category: %s", step, error_type, exc)
        entry["status"] = "backend_failure"
        return Detection(NoError(), entry)
    if not isinstance(cmd, (NoError, EXPECTED_VERB[error_type])):
        log.warning("step %d %s: detector answered %s; treating as NoError", step, error_type, cmd.serialize())
        entry["status"] = "mismatch"
        return Detection(NoError(), entry)
    entry["command"] = cmd.serialize()
    return Detection(cmd, entry)


# -- rectification -----------------------------------------------------------


@dataclass
class Rectification:
    image: LatentGrid | None
    note: str | None = None
    condition_text: str | None = None  # text the revised image depicts


def _locate(backends, image, expression, step, task_id):
    mask = backends.call(
        Capability.LOCATOR,
        {"purpose": "locate", "task": task_id, "step": step, "image": image, "expression": expression},
    )["mask"]
    mask.check_fits(image.height, image.width)
    return mask


def rectify(
    cmd: ToolCommand,
    draft: LatentGrid,
    context: StepContext,
    backends: BackendSet,
    seed: int = 0,
    previous_image: LatentGrid | None = None,
    task_id: str | None = None,
) -> Rectification:
    """Apply one tool edit. Returns ``image=None`` (draft wins) on an empty mask or a tool failure."""
    if isinstance(cmd, NoError):
        raise ContractError("rectify needs an error command")
    step = context.step_index
    meta = {"purpose": "rectify", "task": task_id, "step": step}
    try:
        if isinstance(cmd, Regenerate):
            # fresh sample from the new text, deliberately without memory
            resp = backends.call(
                Capability.IMAGE_GENERATOR,
                {"purpose": "regenerate", "task": task_id, "step": step, "text": cmd.new_text, "seed": seed},
            )
            return Rectification(resp["image"], condition_text=cmd.new_text)
        if isinstance(cmd, Modify):
            if previous_image is None:
                raise ContractError("Modify needs the previous step's image")
            cur = _locate(backends, draft, cmd.object_in_current, step, task_id)
            ref = _locate(backends, previous_image, cmd.object_in_previous, step, task_id)
            if cur.empty or ref.empty:
                which = cmd.object_in_current if cur.empty else cmd.object_in_previous
                return Rectification(None, f"empty mask for {which!r}; edit skipped")
            resp = backends.call(
                Capability.IDENTITY_EDITOR,
                {**meta, "image": draft, "mask": cur, "reference": previous_image, "reference_mask": ref},
            )
        elif isinstance(cmd, Add):
            mask = _locate(backends, draft, cmd.object_in_current, step, task_id)
            if mask.empty:
                return Rectification(None, f"empty mask for {cmd.object_in_current!r}; edit skipped")
            resp = backends.call(
                Capability.ATTRIBUTE_INPAINTER, {**meta, "image": draft, "mask": mask, "prompt": cmd.new_description}
            )
        elif isinstance(cmd, Remove):
            mask = _locate(backends, draft, cmd.object_in_current, step, task_id)
            if mask.empty:
                return Rectification(None, f"empty mask for {cmd.object_in_current!r}; edit skipped")
            resp = backends.call(Capability.OBJECT_REMOVER, {**meta, "image": draft, "mask": mask})
        else:
            raise ContractError(f"unknown command {cmd!r}")
    except BackendError as exc:
        log.warning("step %d: %s failed, keeping draft: %s", step, cmd.verb, exc)
        return Rectification(None, f"{cmd.verb} tool failed: {exc}")
    except ContractError as exc:
        if isinstance(cmd, Modify) and previous_image is None:
            raise
        log.warning("step %d: %s returned an unusable result, keeping draft: %s", step, cmd.verb, exc)
        return Rectification(None, f"{cmd.verb} tool returned an unusable result: {exc}")
    return Rectification(resp["image"], condition_text=context.condition.source_text)


# -- referee -----------------------------------------------------------------


def parse_verdict(reply: str) -> Verdict | None:
    words = set(tokenize(reply))
    draft, revised = "draft" in words, "revised" in words
    if draft != revised:
        return Verdict.DRAFT if draft else Verdict.REVISED
    return None


def referee(
    draft: LatentGrid,
    revised: LatentGrid,
    description: str,
    task_title: str,
    backends: BackendSet,
    step: int = 0,
    task_id: str | None = None,
    template_dir=None,
) -> tuple[Verdict, str | None]:
    """Pick draft or revised. Anything unclear keeps the draft."""
    if draft is None or revised is None:
        raise ContractError("referee needs both images")
    tpl = load_template("referee", template_dir)
    try:
        reply = backends.call(
            Capability.TEXT_GENERATOR,
            {
                "purpose": "referee", "task": task_id, "step": step, "template_version": tpl.version,
                "prompt": tpl.render(task=task_title, step=description), "images": [draft, revised],
            },
        )["text"]
    except BackendError as exc:
        log.warning("step %d: referee unavailable, keeping draft: %s", step, exc)
        return Verdict.DRAFT, None
    verdict = parse_verdict(reply)
    if verdict is None:
        log.warning("step %d: unreadable referee reply %r, keeping draft", step, reply)
        return Verdict.DRAFT, reply
    return verdict, reply


# -- step and task -----------------------------------------------------------


@dataclass
class TaskRun:
    """Mutable state of one task: contexts, memory, chosen images so far."""

    task_id: str
    title: str
    steps: list[str]
    backends: BackendSet
    runtime: DiffusionRuntime
    task_seed: int = 0
    template_dir: object = None
    store: MemoryStore = field(default_factory=MemoryStore)
    contexts: list[StepContext] = field(default_factory=list)
    finals: list[LatentGrid] = field(default_factory=list)
    context_notes: dict = field(default_factory=dict)

    @classmethod
    def for_task(cls, task, backends, runtime, task_seed=0, template_dir=None) -> "TaskRun":
        return cls(task.id, task.title, list(task.steps), backends, runtime, task_seed, template_dir)

    def build_context(self, i: int) -> StepContext:
        if i != len(self.contexts):
            raise ContractError(f"contexts are built in order; expected step {len(self.contexts)}, got {i}")
        hist = ""
        if i >= 1:
            try:
                hist = build_historical_prompt(
                    self.title, self.steps, i, self.backends, task_id=self.task_id, template_dir=self.template_dir
                )
            except BackendError as exc:
                log.warning("step %d: historical prompt unavailable, continuing without: %s", i, exc)
                self.context_notes[i] = f"historical prompt unavailable: {exc}"
        ctx = StepContext(i, self.steps[i], hist, encode_condition(self.steps[i], hist, self.runtime.encoder))
        self.contexts.append(ctx)
        return ctx


def _calibrate(run: TaskRun, image, text, i, seed):
    rt = run.runtime
    return calibrate_memory(
        image, rt.condition(text), rt.sched, rt.predictor, i,
        guidance=rt.guidance, memory_fraction=rt.memory_fraction, sample_seed=seed,
    )


def run_step(i: int, run: TaskRun) -> StepRecord:
    backends, rt = run.backends, run.runtime
    start = len(backends.log)
    if i == len(run.contexts):
        run.build_context(i)
    ctx = run.contexts[i]
    notes = [run.context_notes[i]] if i in run.context_notes else []
    seed = step_seed(run.task_seed, i)
    slot_in = run.store.memory_for(i)

    request = {"purpose": "draft", "task": run.task_id, "step": i, "text": ctx.condition.source_text, "seed": seed}
    if slot_in is not None:
        request["memory"] = slot_in.trace
    try:
        resp = backends.call(Capability.IMAGE_GENERATOR, request)
    except BackendError as exc:
        raise TaskAborted(f"image generation failed at step {i}: {exc}", i) from exc
    draft, draft_trace = resp["image"], resp.get("trace")
    if draft_trace is None:
        # remote generators return no attention tokens; recover them from the draft
        draft_trace = invert(
            draft, ctx.condition, rt.sched, rt.predictor,
            guidance=rt.guidance, memory_fraction=rt.memory_fraction, sample_seed=seed,
        )
        notes.append("draft memory recovered by inversion (generator returned no tokens)")

    detected, calls = None, []
    for category in check_order(i):
        prev = (run.steps[i - 1], run.finals[i - 1]) if category in PAIRWISE else None
        det = detect(category, draft, ctx.description, run.title, prev, backends,
                     step=i, task_id=run.task_id, template_dir=run.template_dir)
        calls.append(det.entry)
        if not isinstance(det.command, NoError):
            detected = (category, det.command)
            break

    revised, verdict, fix = None, Verdict.NOT_APPLICABLE, None
    if detected is not None:
        fix = rectify(detected[1], draft, ctx, backends, seed=seed,
                      previous_image=run.finals[i - 1] if i >= 1 else None, task_id=run.task_id)
        if fix.image is None:
            notes.append(fix.note)
        else:
            revised = fix.image
            verdict, _ = referee(draft, revised, ctx.description, run.title, backends,
                                 step=i, task_id=run.task_id, template_dir=run.template_dir)
    final = revised if verdict is Verdict.REVISED else draft

    slot = run.store.capture(i, draft_trace)
    calibration = {"ran": False, "fallback": None}
    if verdict is Verdict.REVISED:
        # the kept image is not the one the draft tokens describe: rebuild them
        calibration["ran"] = True
        try:
            slot = run.store.install(_calibrate(run, final, fix.condition_text, i, seed))
        except CalibrationError as exc:
            log.warning("step %d: %s; keeping draft memory", i, exc)
            calibration["fallback"] = str(exc)
    run.finals.append(final)

    calls_log = backends.log.since(start)
    record = StepRecord(
        step_index=i,
        description=ctx.description,
        historical_prompt=ctx.historical_prompt,
        condition_text=ctx.condition.source_text,
        seed=seed,
        draft_image=draft,
        final_image=final,
        memory_provenance=slot.provenance,
        memory_in=None if slot_in is None else {"owner_step": slot_in.owner_step, "provenance": str(slot_in.provenance)},
        detected=detected,
        revised_image=revised,
        referee_verdict=verdict,
        detector_calls=calls,
        notes=notes,
        calibration=calibration,
        memory_digest=trace_digest(slot.trace),
        backend_calls=calls_log,
        latencies_ms=[round(c.latency_ms, 3) for c in calls_log],
    )
    return record


def _save_images(record: StepRecord, task_dir: Path) -> dict:
    out = {}
    for kind, img in (("draft", record.draft_image), ("revised", record.revised_image), ("final", record.final_image)):
        if img is not None:
            stem = f"step_{record.step_index}_{kind}"
            save_image(img, task_dir / stem)
            out[kind] = stem
    return out


def run_task(
    task,
    backends: BackendSet,
    runtime: DiffusionRuntime,
    out_dir,
    task_seed: int = 0,
    config_snapshot: dict | None = None,
    seeds: dict | None = None,
    template_dir=None,
) -> RunTrace:
    """Run every step of ``task``, writing images and the trace under ``out_dir/<task id>/``.

    A step whose image generation fails ends the task; the trace then keeps
    the completed steps and a footer with status ``aborted``.
    """
    if not getattr(task, "steps", None):
        raise ValidationError(f"task {getattr(task, 'id', '?')!r} has no steps")
    task_dir = Path(out_dir) / task.id
    kernel = get_kernel(runtime.predictor.kernel).NAME
    seeds = dict(seeds or {}, task=task_seed)
    task_def = {"id": task.id, "title": task.title, "steps": list(task.steps)}
    header = make_header(task_def, config_snapshot or {}, seeds, kernel)
    run = TaskRun.for_task(task, backends, runtime, task_seed, template_dir)
    trace = RunTrace(task.id, header, [], path=task_dir / "trace.jsonl")
    with TraceWriter(trace.path, task_dir / "timings.jsonl") as writer:
        writer.header(header)
        try:
            for i in range(len(task.steps)):
                record = run_step(i, run)
                record.images = _save_images(record, task_dir)
                trace.steps.append(writer.step(record))
                trace.records.append(record)
        except TaskAborted as exc:
            log.error("task %s aborted at step %s: %s", task.id, exc.step_index, exc)
            writer.footer("aborted", str(exc), exc.step_index)
            trace.footer = {"kind": "footer", "status": "aborted", "error": str(exc), "failed_step": exc.step_index}
            return trace
        except Exception as exc:
            writer.footer("aborted", f"{type(exc).__name__}: {exc}", len(trace.steps))
            raise
        writer.footer("complete")
        trace.footer = {"kind": "footer", "status": "complete", "error": None, "failed_step": None}
    return trace

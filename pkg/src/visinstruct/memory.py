"""Per-step text context and the visual-memory lifecycle.

Step ``i`` is generated with the memory slot of step ``i - 1``. A slot starts
out holding the tokens captured while the draft was denoised; when the referee
keeps an edited image instead, the slot is rebuilt by inverting that image.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .diffusion import ConditionEmbedding, LatentGrid, NoiseSchedule, TokenTrace, ToyPredictor, invert
from .errors import CalibrationError, ContractError, ValidationError
from .prompts import load_template
from .text import HashingTextEncoder

log = logging.getLogger(__name__)

_DEFAULT_ENCODER = HashingTextEncoder()


class Provenance(str, Enum):
    FROM_DRAFT = "FromDraftGeneration"
    FROM_CALIBRATION = "FromCalibrationInversion"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class StepContext:
    step_index: int
    description: str
    historical_prompt: str
    condition: ConditionEmbedding

    def __post_init__(self):
        if self.step_index == 0 and self.historical_prompt:
            raise ContractError("step 0 never carries a historical prompt")


@dataclass(frozen=True)
class MemorySlot:
    owner_step: int
    trace: TokenTrace
    provenance: Provenance


def assemble_condition_text(description: str, historical_prompt: str = "") -> str:
    if not historical_prompt:
        return description
    return f"{description}. Context: {historical_prompt}"


def encode_condition(description: str, historical_prompt: str = "", encoder=None) -> ConditionEmbedding:
    if not description or not description.strip():
        raise ValidationError("step description must be non-empty")
    text = assemble_condition_text(description.strip(), historical_prompt.strip())
    encoder = encoder or _DEFAULT_ENCODER
    return ConditionEmbedding(encoder.encode(text), text)


def _history_lines(steps, i):
    return "\n".join(f"{k + 1}. {s}" for k, s in enumerate(steps[:i]))


def build_historical_prompt(
    task_title: str,
    steps: list[str],
    i: int,
    backends,
    task_id: str | None = None,
    template_dir=None,
) -> str:
    """Ask the TextGenerator which earlier objects should appear in step ``i``.

    Callers skip step 0, which has no history.
    """
    if i < 1:
        raise ContractError("historical prompts start at step 1; step 0 has none")
    if i >= len(steps):
        raise ContractError(f"step {i} out of range for {len(steps)} steps")
    tpl = load_template("historical_prompt", template_dir)
    prompt = tpl.render(task=task_title, history_steps=_history_lines(steps, i), current_step=steps[i])
    reply = backends.call(
        "TextGenerator",
        {
            "purpose": "historical_prompt",
            "task": task_id,
            "step": i,
            "prompt": prompt,
            "template_version": tpl.version,
            "previous_step": steps[i - 1],
            "current_step": steps[i],
        },
    )
    return " ".join(reply["text"].split())


class MemoryStore:
    """Single-writer store of one slot per completed step."""

    def __init__(self):
        self._slots: dict[int, MemorySlot] = {}
        self.events: list[dict] = []

    def _put(self, slot: MemorySlot) -> MemorySlot:
        if slot.owner_step in self._slots:
            old = self._slots[slot.owner_step]
            log.info("memory slot for step %d replaced (%s -> %s)", slot.owner_step, old.provenance, slot.provenance)
            self.events.append(
                {"event": "replaced", "step": slot.owner_step, "old": str(old.provenance), "new": str(slot.provenance)}
            )
        else:
            self.events.append({"event": "stored", "step": slot.owner_step, "provenance": str(slot.provenance)})
        self._slots[slot.owner_step] = slot
        return slot

    def capture(self, step: int, trace: TokenTrace) -> MemorySlot:
        if not isinstance(trace, TokenTrace) or not len(trace):
            raise ContractError("capture needs a non-empty token trace")
        return self._put(MemorySlot(step, trace, Provenance.FROM_DRAFT))

    def install(self, slot: MemorySlot) -> MemorySlot:
        return self._put(slot)

    def slot(self, step: int) -> MemorySlot | None:
        return self._slots.get(step)

    def memory_for(self, step: int) -> MemorySlot | None:
        """The slot visible to generation of ``step``: none for step 0, else step - 1's."""
        if step == 0:
            return None
        try:
            return self._slots[step - 1]
        except KeyError:
            raise ContractError(f"no memory slot for step {step - 1}") from None

    def __len__(self):
        return len(self._slots)


def capture_memory(store: MemoryStore, step: int, trace: TokenTrace) -> MemorySlot:
    return store.capture(step, trace)


def calibrate_memory(
    final_image: LatentGrid,
    condition: ConditionEmbedding,
    sched: NoiseSchedule,
    predictor: ToyPredictor,
    owner_step: int,
    guidance: float = 5.0,
    memory_fraction: float = 0.5,
    sample_seed: int = 0,
) -> MemorySlot:
    """Rebuild a step's memory from its final image by DDIM inversion over all T steps."""
    try:
        with np.errstate(over="raise", invalid="raise"):
            trace = invert(
                final_image, condition, sched, predictor,
                guidance=guidance, memory_fraction=memory_fraction, sample_seed=sample_seed,
            )
    except (FloatingPointError, ContractError) as exc:
        raise CalibrationError(f"inversion of step {owner_step} failed: {exc}") from exc
    if not all(np.all(np.isfinite(trace[t])) for t in trace.timesteps):
        raise CalibrationError(f"inversion of step {owner_step} produced non-finite tokens")
    return MemorySlot(owner_step, trace, Provenance.FROM_CALIBRATION)

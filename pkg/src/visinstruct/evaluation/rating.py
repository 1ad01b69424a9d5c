"""1-to-5 ratings from a multimodal text generator."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

import numpy as np

from ..backends import Capability
from ..errors import BackendError
from ..prompts import load_template

log = logging.getLogger(__name__)

_INT = re.compile(r"-?\d+")
RETRY_SUFFIX = "\nYour previous answer {raw!r} is not an integer from 1 to 5. Answer with a single integer from 1 to 5."


def parse_rating(reply: str) -> int | None:
    m = _INT.search(reply or "")
    if m is None:
        return None
    value = int(m.group())
    return value if 1 <= value <= 5 else None


@dataclass
class Ratings:
    semantic: list = field(default_factory=list)  # per image, None where discarded
    logic: int | None = None
    illustrative: int | None = None
    note: str | None = None

    @property
    def semantic_mean(self) -> float | None:
        vals = [v for v in self.semantic if v is not None]
        return float(np.mean(vals)) if vals else None

    def to_dict(self) -> dict:
        vals = [v for v in self.semantic if v is not None]
        return {
            "semantic": {"mean": self.semantic_mean, "n": len(vals), "items": self.semantic},
            "logic": self.logic,
            "illustrative": self.illustrative,
            "note": self.note,
        }


def _ask(backends, prompt, images, meta) -> int | None:
    reply = backends.call(Capability.TEXT_GENERATOR, {**meta, "prompt": prompt, "images": images})["text"]
    value = parse_rating(reply)
    if value is not None:
        return value
    reply2 = backends.call(
        Capability.TEXT_GENERATOR, {**meta, "attempt": 2, "prompt": prompt + RETRY_SUFFIX.format(raw=reply), "images": images}
    )["text"]
    value = parse_rating(reply2)
    if value is None:
        log.warning("rating replies %r and %r unusable; discarded", reply, reply2)
    return value


def mllm_rate(images, descriptions, task_title, backends, task_id=None, series=True, template_dir=None) -> Ratings:
    """Per-image semantic ratings, plus logic and illustrative ratings of the whole series."""
    out = Ratings()
    meta = {"purpose": "rate", "task": task_id}
    try:
        sem = load_template("rate_semantic", template_dir)
        for k, (img, desc) in enumerate(zip(images, descriptions)):
            if img is None:
                out.semantic.append(None)
                continue
            out.semantic.append(
                _ask(backends, sem.render(description=desc), [img],
                     {**meta, "step": k, "category": "semantic", "template_version": sem.version})
            )
        if series and all(img is not None for img in images):
            steps = "\n".join(f"{k + 1}. {d}" for k, d in enumerate(descriptions))
            for name in ("logic", "illustrative"):
                tpl = load_template(f"rate_{name}", template_dir)
                value = _ask(backends, tpl.render(task=task_title, steps=steps), list(images),
                             {**meta, "category": name, "template_version": tpl.version})
                setattr(out, name, value)
    except BackendError as exc:
        log.warning("rating backend failed; ratings omitted: %s", exc)
        return Ratings(note=f"ratings omitted: {exc}")
    return out

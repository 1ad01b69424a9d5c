"""Scoring finished runs against their task annotations."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ValidationError
from ..raster import load_image
from ..reflection.records import RunTrace, load_trace
from .metrics import CLIP_SCALE, DinoRatio, MetricResult, backend_tools, pooled, bert_score, clip_score, dino_mean, dino_score
from .rating import Ratings, mllm_rate

log = logging.getLogger(__name__)


@dataclass
class TaskScores:
    task_id: str
    clip: MetricResult
    bert: MetricResult
    dino: DinoRatio
    ratings: Ratings | None = None

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "clip_score": self.clip.to_dict(),
            "bert_score": self.bert.to_dict(),
            "dino_score": {
                "value": self.dino.value,
                "coherent_distance": self.dino.coherent_distance,
                "independent_distance": self.dino.independent_distance,
            },
            "ratings": self.ratings.to_dict() if self.ratings else None,
        }


@dataclass
class ScoreReport:
    clip: MetricResult
    dino: MetricResult
    bert: MetricResult
    per_task: list[TaskScores] = field(default_factory=list)
    ratings: dict | None = None
    skipped_tasks: dict = field(default_factory=dict)  # task id -> reason
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        def summary(m):
            return {"mean": m.mean, "n": m.n, "skipped": m.skipped}

        return {
            "clip_score": {**summary(self.clip), "scale": CLIP_SCALE, "averaging": "pooled over steps"},
            "dino_score": {**summary(self.dino), "averaging": "mean over tasks with a defined ratio"},
            "bert_score": {**summary(self.bert), "averaging": "pooled over steps", "idf": False},
            "ratings": self.ratings,
            "skipped_tasks": self.skipped_tasks,
            "notes": self.notes,
            "per_task": [t.to_dict() for t in self.per_task],
        }


def final_images(trace: RunTrace) -> list:
    """Load each step's final latent; raises FileNotFoundError if any is missing."""
    cfg = trace.config.get("runtime", {})
    h, w = cfg.get("height"), cfg.get("width")
    base = trace.path.parent
    out = []
    for step in trace.steps:
        stem = step.get("images", {}).get("final")
        if stem is None:
            raise FileNotFoundError(f"step {step['step_index']} lists no final image")
        out.append(load_image(base / stem, h, w))
    return out


def find_traces(run_dir) -> list[Path]:
    run_dir = Path(run_dir)
    if run_dir.is_file():
        return [run_dir]
    return sorted(run_dir.glob("*/trace.jsonl"))


def match_traces(traces: list[RunTrace], tasks) -> list[tuple[RunTrace, object]]:
    by_id = {t.id: t for t in tasks}
    problems, pairs = [], []
    for tr in traces:
        task = by_id.get(tr.task_id)
        if task is None:
            problems.append(f"{tr.path}: task id {tr.task_id!r} not in corpus")
        elif tr.header.get("n_steps") != len(task.steps):
            problems.append(
                f"{tr.path}: trace has {tr.header.get('n_steps')} steps, corpus task {task.id!r} has {len(task.steps)}"
            )
        else:
            pairs.append((tr, task))
    if problems:
        raise ValidationError(f"{len(problems)} trace/corpus mismatch(es)", problems)
    return pairs


def _ratings_summary(per_task) -> dict | None:
    rated = [t.ratings for t in per_task if t.ratings is not None and t.ratings.note is None]
    if not rated:
        return None
    sem = [v for r in rated for v in r.semantic if v is not None]
    logic = [r.logic for r in rated if r.logic is not None]
    ill = [r.illustrative for r in rated if r.illustrative is not None]

    def m(xs):
        return {"mean": sum(xs) / len(xs) if xs else None, "n": len(xs)}

    return {"semantic": m(sem), "logic": m(logic), "illustrative": m(ill)}


def evaluate(run_dir, tasks, factory, use_mllm: bool = True, template_dir=None) -> ScoreReport:
    """Score every trace under ``run_dir``. ``factory`` builds a BackendSet per task."""
    paths = find_traces(run_dir)
    if not paths:
        raise ValidationError(f"no traces under {run_dir}", [f"{run_dir}: no */trace.jsonl files"])
    pairs = match_traces([load_trace(p) for p in paths], tasks)
    per_task, skipped, notes = [], {}, []
    clip_items, bert_items, dinos = [], [], []
    mllm_note_added = False
    for trace, task in pairs:
        if not trace.complete:
            skipped[task.id] = f"trace status {trace.status}"
            continue
        try:
            images = final_images(trace)
        except (FileNotFoundError, OSError, ValueError) as exc:
            skipped[task.id] = f"missing images: {exc}"
            continue
        backends = factory.build(task.id)
        tools = backend_tools(backends, task.id)
        clip = clip_score(images, task.gt_expressions, tools.embed_image, tools.embed_texts)
        bert = bert_score(images, task.gt_expressions, tools.caption, tools.embed_tokens)
        dino = dino_score(images, task.coherent_pair, task.independent_pair, tools.embed_image)
        ratings = None
        if use_mllm and "TextGenerator" in backends:
            ratings = mllm_rate(images, task.steps, task.title, backends, task.id, template_dir=template_dir)
            if ratings.note and not mllm_note_added:
                notes.append(ratings.note)
                mllm_note_added = True
        clip_items += clip.items
        bert_items += bert.items
        dinos.append(dino)
        per_task.append(TaskScores(task.id, clip, bert, dino, ratings))
    if not use_mllm:
        notes.append("MLLM ratings omitted (disabled)")
    elif per_task and all(t.ratings is None for t in per_task):
        notes.append("MLLM ratings omitted (no TextGenerator bound)")
    if skipped:
        notes.append(f"{len(skipped)} task(s) skipped")
    undefined = sum(1 for d in dinos if not d.defined)
    if undefined:
        notes.append(f"{undefined} task(s) with undefined dino_score excluded")

    return ScoreReport(
        clip=pooled("clip_score", clip_items),
        dino=dino_mean(dinos),
        bert=pooled("bert_score", bert_items),
        per_task=per_task,
        ratings=_ratings_summary(per_task),
        skipped_tasks=skipped,
        notes=notes,
    )

"""Task files: schema, loading with itemized validation, and corpus statistics.

A task file holds one task object, a list of them, or ``{"tasks": [...]}``::

    {"id": "bake-wings", "title": "How to bake chicken wings",
     "steps": ["...", "..."],
     "coherent_pair": [2, 3], "independent_pair": [4, 5],
     "gt_expressions": ["...", "..."]}

See ``docs/task_schema.md`` for field semantics.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ValidationError

log = logging.getLogger(__name__)

MIN_STEPS = 6
FIELDS = ("id", "title", "steps", "coherent_pair", "independent_pair", "gt_expressions")


@dataclass(frozen=True)
class TaskSpec:
    id: str
    title: str
    steps: tuple[str, ...]
    coherent_pair: tuple[int, int]
    independent_pair: tuple[int, int]
    gt_expressions: tuple[str, ...]

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def to_dict(self) -> dict:
        return {
            "id": self.id, "title": self.title, "steps": list(self.steps),
            "coherent_pair": list(self.coherent_pair), "independent_pair": list(self.independent_pair),
            "gt_expressions": list(self.gt_expressions),
        }


def _nonempty_texts(value, name, problems, where):
    if not isinstance(value, list) or not value:
        problems.append(f"{where}: {name} must be a non-empty list of strings")
        return None
    bad = [k for k, s in enumerate(value) if not isinstance(s, str) or not s.strip()]
    if bad:
        problems.append(f"{where}: {name} has empty or non-text entries at {bad}")
        return None
    return tuple(s.strip() for s in value)


def _pair(value, name, n, problems, where):
    if (
        not isinstance(value, (list, tuple)) or len(value) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    ):
        problems.append(f"{where}: {name} must be a pair of integers")
        return None
    a, b = value
    ok = True
    if b != a + 1:
        problems.append(f"{where}: {name} {list(value)} is not consecutive")
        ok = False
    if n is not None and not (0 <= a and b < n):
        problems.append(f"{where}: {name} {list(value)} out of range for {n} steps")
        ok = False
    return (a, b) if ok else None


def validate_task(obj, where: str = "task") -> tuple[TaskSpec | None, list[str], list[str]]:
    """Returns (parsed or None, problems, warnings)."""
    problems, warnings = [], []
    if not isinstance(obj, dict):
        return None, [f"{where}: expected an object, got {type(obj).__name__}"], []
    missing = [f for f in FIELDS if f not in obj]
    if missing:
        problems.append(f"{where}: missing field(s) {', '.join(missing)}")
    tid = obj.get("id")
    if "id" in obj and (not isinstance(tid, str) or not tid.strip()):
        problems.append(f"{where}: id must be a non-empty string")
    elif isinstance(tid, str):
        where = f"{where} ({tid})"
    title = obj.get("title")
    if "title" in obj and (not isinstance(title, str) or not title.strip()):
        problems.append(f"{where}: title must be a non-empty string")
    steps = _nonempty_texts(obj["steps"], "steps", problems, where) if "steps" in obj else None
    n = len(steps) if steps is not None else None
    if n is not None and n < MIN_STEPS:
        warnings.append(f"{where}: only {n} steps (corpus tasks have at least {MIN_STEPS})")
    coh = _pair(obj["coherent_pair"], "coherent_pair", n, problems, where) if "coherent_pair" in obj else None
    ind = _pair(obj["independent_pair"], "independent_pair", n, problems, where) if "independent_pair" in obj else None
    if coh is not None and coh == ind:
        problems.append(f"{where}: coherent_pair and independent_pair are the same pair")
    gts = _nonempty_texts(obj["gt_expressions"], "gt_expressions", problems, where) if "gt_expressions" in obj else None
    if gts is not None and n is not None and len(gts) != n:
        problems.append(f"{where}: {len(gts)} gt_expressions for {n} steps")
    extra = sorted(set(obj) - set(FIELDS))
    if extra:
        warnings.append(f"{where}: ignoring unknown field(s) {', '.join(extra)}")
    if problems:
        return None, problems, warnings
    return TaskSpec(tid.strip(), title.strip(), steps, coh, ind, gts), problems, warnings


@dataclass
class FileReport:
    path: str
    tasks: list[TaskSpec] = field(default_factory=list)
    problems: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def summary(self) -> str:
        state = "ok" if self.ok else f"{len(self.problems)} problem(s)"
        return f"{self.path}: {len(self.tasks)} task(s), {state}, {len(self.warnings)} warning(s)"


def _task_objects(data, where):
    if isinstance(data, list):
        return data
    if isinstance(data, dict) and "tasks" in data:
        if not isinstance(data["tasks"], list):
            raise ValidationError(f"{where}: 'tasks' must be a list")
        return data["tasks"]
    if isinstance(data, dict):
        return [data]
    raise ValidationError(f"{where}: expected a task object, a list, or {{'tasks': [...]}}")


def check_file(path) -> FileReport:
    path = Path(path)
    rep = FileReport(str(path))
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        rep.problems.append(f"{path}: cannot read: {exc}")
        return rep
    except json.JSONDecodeError as exc:
        rep.problems.append(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
        return rep
    try:
        objs = _task_objects(data, str(path))
    except ValidationError as exc:
        rep.problems.append(str(exc))
        return rep
    for k, obj in enumerate(objs):
        parsed, problems, warnings = validate_task(obj, f"{path.name}[{k}]")
        rep.problems += problems
        rep.warnings += warnings
        if parsed is not None:
            rep.tasks.append(parsed)
    return rep


def corpus_files(path) -> list[Path]:
    path = Path(path)
    if path.is_dir():
        return sorted(path.glob("*.json"))
    return [path]


def check_corpus(path) -> list[FileReport]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: no such file or directory")
    reports = [check_file(p) for p in corpus_files(path)]
    seen = {}
    for rep in reports:
        for t in rep.tasks:
            if t.id in seen:
                rep.problems.append(f"{rep.path}: duplicate task id {t.id!r} (first in {seen[t.id]})")
            else:
                seen[t.id] = rep.path
    return reports


def load_tasks(path) -> list[TaskSpec]:
    """Load and validate every task under ``path``; raises one itemized ValidationError."""
    reports = check_corpus(path)
    problems = [p for r in reports for p in r.problems]
    for r in reports:
        for w in r.warnings:
            log.warning(w)
    if problems:
        raise ValidationError(f"{len(problems)} problem(s) in {path}", problems)
    tasks = [t for r in reports for t in r.tasks]
    if not tasks:
        raise ValidationError(f"no tasks found in {path}", [f"{path}: no tasks"])
    return tasks


def parse_tasks(objs) -> list[TaskSpec]:
    """Validate in-memory task objects (same rules as files)."""
    out, problems = [], []
    for k, obj in enumerate(objs):
        parsed, p, _ = validate_task(obj, f"task[{k}]")
        problems += p
        if parsed:
            out.append(parsed)
    if problems:
        raise ValidationError(f"{len(problems)} problem(s) in task list", problems)
    return out


# -- statistics ---------------------------------------------------------------


def length_category(n: int) -> str:
    """short: up to 8 steps, medium: 9 to 11, long: 12 or more."""
    if n >= 12:
        return "long"
    if n >= 9:
        return "medium"
    return "short"


@dataclass(frozen=True)
class CorpusStats:
    count: int
    mean_steps: float
    min_steps: int
    max_steps: int
    histogram: dict
    categories: dict

    def to_dict(self) -> dict:
        return {
            "count": self.count, "mean_steps": self.mean_steps, "min_steps": self.min_steps,
            "max_steps": self.max_steps, "histogram": {str(k): v for k, v in self.histogram.items()},
            "categories": dict(self.categories),
        }


def corpus_stats(tasks) -> CorpusStats:
    if not tasks:
        raise ValidationError("corpus statistics need at least one task", ["empty corpus"])
    lengths = [len(t.steps) for t in tasks]
    cats = Counter(length_category(n) for n in lengths)
    return CorpusStats(
        count=len(lengths),
        mean_steps=sum(lengths) / len(lengths),
        min_steps=min(lengths),
        max_steps=max(lengths),
        histogram=dict(sorted(Counter(lengths).items())),
        categories={c: cats.get(c, 0) for c in ("short", "medium", "long")},
    )


def select_tasks(tasks, ids=None) -> list[TaskSpec]:
    if not ids:
        return list(tasks)
    by_id = {t.id: t for t in tasks}
    unknown = [i for i in ids if i not in by_id]
    if unknown:
        raise ValidationError(f"unknown task id(s): {', '.join(unknown)}", [f"unknown task id {i!r}" for i in unknown])
    return [by_id[i] for i in ids]

"""Scripted single-step scenarios for the self-reflection loop.

Each scenario runs a four-step task up to ``step`` against a non-strict mock
(unscripted detector calls answer NoError, the unscripted referee answers
draft) and states what the target step must do: which backend calls in which
order, and the resulting StepRecord fields.
"""
from dataclasses import dataclass, field
from types import SimpleNamespace

from conftest import make_backends, spy_on
from visinstruct.reflection import TaskRun, run_step

STEPS = [
    "Preheat the oven and line a tray with foil.",
    "Heat oil in a pan on the stove.",
    "Coat the chicken wings in oil and spices.",
    "Lay the wings on the tray and bake until golden.",
]
TASK = SimpleNamespace(id="wings", title="How to bake chicken wings", steps=STEPS)

R, I, A, O = "Relation", "Identity", "Attribute", "Object"
HP = ("TextGenerator", "historical_prompt", None)
DRAFT = ("ImageGenerator", "draft", None)
REF = ("TextGenerator", "referee", None)
LOC = ("Locator", "locate", None)


def det(category):
    return ("TextGenerator", "detect", category)


def detect_entry(step, category, reply):
    return {"capability": "TextGenerator", "match": {"purpose": "detect", "step": step, "category": category},
            "response": reply}


def referee_entry(step, reply):
    return {"capability": "TextGenerator", "match": {"purpose": "referee", "step": step}, "response": reply}


@dataclass
class Scenario:
    name: str
    step: int
    entries: list
    calls: list  # (capability, purpose, category) in order, for the target step
    detected: tuple | None = None  # (category, canonical command)
    verdict: str = "NotApplicable"
    final: str = "draft"  # which image the step keeps
    attempts: dict = field(default_factory=dict)  # category -> replies expected
    status: dict = field(default_factory=dict)  # category -> detector entry status
    note: str | None = None


def _pre(step):
    return [HP, DRAFT] if step >= 1 else [DRAFT]


SCENARIOS = [
    Scenario(
        "first step checks attribute and object only", 0,
        [detect_entry(0, R, "Regenerate(An empty kitchen)"), detect_entry(0, I, "Modify(tray, tray)")],
        _pre(0) + [det(A), det(O)],
    ),
    Scenario(
        "no error anywhere keeps the draft", 2, [],
        _pre(2) + [det(R), det(I), det(A), det(O)],
    ),
    Scenario(
        "identity error stops the category scan", 3,
        [detect_entry(3, R, "NoError"), detect_entry(3, I, "Modify(the wings, the chicken wings)"),
         referee_entry(3, "draft")],
        _pre(3) + [det(R), det(I), LOC, LOC, ("IdentityEditor", "rectify", None), REF],
        detected=(I, "Modify(the wings, the chicken wings)"), verdict="Draft",
    ),
    Scenario(
        "regenerate accepted by the referee", 1,
        [detect_entry(1, R, "Regenerate(A pan with heated oil on a stove)"), referee_entry(1, "revised")],
        _pre(1) + [det(R), ("ImageGenerator", "regenerate", None), REF],
        detected=(R, "Regenerate(A pan with heated oil on a stove)"), verdict="Revised", final="revised",
    ),
    Scenario(
        "add splits at the last comma", 2,
        [detect_entry(2, A, "Add(raw, uncooked chicken wings coated in oil, chicken wings)"),
         referee_entry(2, "The revised image is better.")],
        _pre(2) + [det(R), det(I), det(A), LOC, ("AttributeInpainter", "rectify", None), REF],
        detected=(A, "Add(raw, uncooked chicken wings coated in oil, chicken wings)"), verdict="Revised",
        final="revised",
    ),
    Scenario(
        "remove rejected by the referee", 3,
        [detect_entry(3, O, "Remove(bread in the pan)"), referee_entry(3, "draft")],
        _pre(3) + [det(R), det(I), det(A), det(O), LOC, ("ObjectRemover", "rectify", None), REF],
        detected=(O, "Remove(bread in the pan)"), verdict="Draft",
    ),
    Scenario(
        "unreadable detector reply is asked again once", 1,
        [detect_entry(1, R, "hmm, hard to say"), detect_entry(1, R, "NoError")],
        _pre(1) + [det(R), det(R), det(I), det(A), det(O)],
        attempts={R: 2}, status={R: "ok"},
    ),
    Scenario(
        "two unreadable replies count as no error", 1,
        [detect_entry(1, I, "???"), detect_entry(1, I, "still thinking"), detect_entry(1, I, "Modify(a, b)")],
        _pre(1) + [det(R), det(I), det(I), det(A), det(O)],
        attempts={I: 2}, status={I: "parse_failure"},
    ),
    Scenario(
        "empty mask skips the edit", 2,
        [detect_entry(2, O, "Remove(bread in the pan)"),
         {"capability": "Locator", "match": {"step": 2, "expression": "bread in the pan"},
          "response": {"mask": "empty"}}],
        _pre(2) + [det(R), det(I), det(A), det(O), LOC],
        detected=(O, "Remove(bread in the pan)"), note="empty mask",
    ),
    Scenario(
        "vague referee reply keeps the draft", 3,
        [detect_entry(3, A, "Add(crispy skin, chicken wings)"), referee_entry(3, "image two-ish")],
        _pre(3) + [det(R), det(I), det(A), LOC, ("AttributeInpainter", "rectify", None), REF],
        detected=(A, "Add(crispy skin, chicken wings)"), verdict="Draft",
    ),
    Scenario(
        "wrong verb for the category is ignored", 2,
        [detect_entry(2, R, "Remove(onion)")],
        _pre(2) + [det(R), det(I), det(A), det(O)],
        status={R: "mismatch"},
    ),
    Scenario(
        "failing editor keeps the draft", 1,
        [detect_entry(1, O, "Remove(the spoon)"),
         {"capability": "ObjectRemover", "match": {"step": 1}, "response": {"error": "service unavailable", "attempts": 3}}],
        _pre(1) + [det(R), det(I), det(A), det(O), LOC, ("ObjectRemover", "rectify", None)],
        detected=(O, "Remove(the spoon)"), note="tool failed",
    ),
]


def call_sequence(record):
    return [(c.capability, c.purpose, c.category) for c in record.backend_calls]


def run_scenario(sc: Scenario, runtime):
    backends, script = make_backends(runtime, sc.entries)
    gen = spy_on(backends, "ImageGenerator")
    run = TaskRun.for_task(TASK, backends, runtime, task_seed=7)
    record = None
    for i in range(sc.step + 1):
        record = run_step(i, run)
    return record, gen, script


def check_scenario(sc: Scenario, runtime) -> list[str]:
    """Return a list of mismatches (empty when the scenario behaves as stated)."""
    record, gen, _ = run_scenario(sc, runtime)
    bad = []
    got = call_sequence(record)
    if got != sc.calls:
        bad.append(f"calls {got} != {sc.calls}")
    cats = [e["category"] for e in record.detector_calls]
    want_cats = []
    for cap, purpose, cat in sc.calls:
        if purpose == "detect" and (not want_cats or want_cats[-1] != cat):
            want_cats.append(cat)
    if cats != want_cats:
        bad.append(f"categories {cats} != {want_cats}")
    det = None if record.detected is None else (str(record.detected[0]), record.detected[1].serialize())
    if det != sc.detected:
        bad.append(f"detected {det} != {sc.detected}")
    if str(record.referee_verdict) != sc.verdict:
        bad.append(f"verdict {record.referee_verdict} != {sc.verdict}")
    want_final = record.revised_image if sc.final == "revised" else record.draft_image
    if record.final_image is not want_final:
        bad.append(f"final image is not the {sc.final}")
    revised_expected = sc.verdict != "NotApplicable"
    if (record.revised_image is not None) != revised_expected:
        bad.append(f"revised image present={record.revised_image is not None}, expected {revised_expected}")
    want_prov = "FromCalibrationInversion" if sc.verdict == "Revised" else "FromDraftGeneration"
    if str(record.memory_provenance) != want_prov:
        bad.append(f"provenance {record.memory_provenance} != {want_prov}")
    if record.calibration["ran"] != (sc.verdict == "Revised"):
        bad.append("calibration ran without a revised verdict" if record.calibration["ran"] else "calibration skipped")
    for cat, n in sc.attempts.items():
        entry = next(e for e in record.detector_calls if e["category"] == cat)
        if len(entry["replies"]) != n:
            bad.append(f"{cat}: {len(entry['replies'])} replies, expected {n}")
    for cat, st in sc.status.items():
        entry = next(e for e in record.detector_calls if e["category"] == cat)
        if entry["status"] != st:
            bad.append(f"{cat}: status {entry['status']} != {st}")
    if sc.note and not any(sc.note in n for n in record.notes):
        bad.append(f"no note mentioning {sc.note!r}: {record.notes}")
    regen = [r for r in gen.requests if r.get("purpose") == "regenerate"]
    if any("memory" in r for r in regen):
        bad.append("regeneration was given memory tokens")
    draft_req = [r for r in gen.requests if r.get("purpose") == "draft" and r["step"] == sc.step][0]
    if ("memory" in draft_req) != (sc.step >= 1):
        bad.append("draft memory presence wrong")
    try:
        record.to_dict()
    except Exception as exc:  # invariant check inside to_dict
        bad.append(f"record invariants: {exc}")
    return bad

import json
from collections import Counter

import pytest

from conftest import write_json
from visinstruct.errors import ValidationError
from visinstruct.evaluation import check_corpus, corpus_stats, load_tasks, select_tasks
from visinstruct.evaluation.dataset import length_category, parse_tasks, validate_task


def task(n=6, **kw):
    obj = {
        "id": kw.pop("id", f"t{n}"),
        "title": "A task",
        "steps": [f"Step {k}." for k in range(n)],
        "coherent_pair": [0, 1],
        "independent_pair": [n - 2, n - 1],
        "gt_expressions": [f"thing {k}" for k in range(n)],
    }
    obj.update(kw)
    return obj


def brute_force(path):
    """Recount the corpus straight from the JSON, without the loader."""
    data = json.loads(path.read_text())
    objs = data["tasks"] if isinstance(data, dict) else data
    lengths = [len(o["steps"]) for o in objs]
    cats = {"short": 0, "medium": 0, "long": 0}
    for n in lengths:
        if 6 <= n <= 8:
            cats["short"] += 1
        elif 9 <= n <= 11:
            cats["medium"] += 1
        elif n >= 12:
            cats["long"] += 1
    return {
        "count": len(lengths),
        "mean": sum(lengths) / len(lengths),
        "min": min(lengths),
        "max": max(lengths),
        "hist": dict(Counter(lengths)),
        "cats": cats,
    }


def test_sample_corpus_matches_brute_force(sample_corpus_path):
    tasks = load_tasks(sample_corpus_path)
    s, ref = corpus_stats(tasks), brute_force(sample_corpus_path)
    assert s.count == ref["count"]
    assert s.mean_steps == pytest.approx(ref["mean"], abs=1e-12)
    assert (s.min_steps, s.max_steps) == (ref["min"], ref["max"])
    assert s.histogram == ref["hist"]
    assert s.categories == ref["cats"]


def test_sample_corpus_clean_and_covers_categories(sample_corpus_path):
    reports = check_corpus(sample_corpus_path)
    assert all(r.ok for r in reports)
    s = corpus_stats([t for r in reports for t in r.tasks])
    assert all(v >= 1 for v in s.categories.values())
    assert s.max_steps == 17


def test_non_consecutive_pair_rejected():
    parsed, problems, _ = validate_task(task(8, coherent_pair=[3, 5]))
    assert parsed is None and any("not consecutive" in p for p in problems)


@pytest.mark.parametrize(
    "override,fragment",
    [
        ({"independent_pair": [5, 6]}, "out of range"),
        ({"coherent_pair": [1, 2], "independent_pair": [1, 2]}, "same pair"),
        ({"gt_expressions": ["a"]}, "gt_expressions for"),
        ({"steps": ["ok", " "] + ["s"] * 4}, "steps"),
        ({"title": ""}, "title"),
        ({"coherent_pair": [0.0, 1.0]}, "pair of integers"),
        ({"coherent_pair": [True, 2]}, "pair of integers"),
    ],
)
def test_field_problems(override, fragment):
    parsed, problems, _ = validate_task(task(6, **override))
    assert parsed is None and any(fragment in p for p in problems), problems


def test_missing_fields_itemized():
    _, problems, _ = validate_task({"id": "x"})
    assert "missing field(s) title, steps, coherent_pair, independent_pair, gt_expressions" in problems[0]


def test_short_task_warns_but_loads():
    parsed, problems, warnings = validate_task(task(4, independent_pair=[2, 3]))
    assert parsed is not None and not problems and any("only 4 steps" in w for w in warnings)


def test_length_categories():
    assert [length_category(n) for n in (6, 8, 9, 11, 12, 17)] == ["short", "short", "medium", "medium", "long", "long"]
    assert corpus_stats(parse_tasks([task(9)])).categories == {"short": 0, "medium": 1, "long": 0}
    assert corpus_stats(parse_tasks([task(17)])).categories["long"] == 1


def test_two_task_mean():
    s = corpus_stats(parse_tasks([task(6), task(12)]))
    assert s.mean_steps == 9.0 and s.categories == {"short": 1, "medium": 0, "long": 1}


def test_empty_corpus_stats():
    with pytest.raises(ValidationError):
        corpus_stats([])


def test_malformed_json_reported(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"id": "x", ')
    rep = check_corpus(bad)[0]
    assert not rep.ok and "malformed JSON" in rep.problems[0]
    with pytest.raises(ValidationError) as info:
        load_tasks(bad)
    assert info.value.problems and "line 1" in info.value.problems[0]


def test_directory_corpus_and_duplicates(tmp_path):
    write_json(tmp_path / "a.json", [task(6, id="x"), task(7, id="y")])
    write_json(tmp_path / "b.json", {"tasks": [task(9, id="x")]})
    reps = check_corpus(tmp_path)
    assert [len(r.tasks) for r in reps] == [2, 1]
    assert any("duplicate task id 'x'" in p for p in reps[1].problems)
    with pytest.raises(ValidationError):
        load_tasks(tmp_path)


def test_load_collects_all_problems(tmp_path):
    write_json(tmp_path / "c.json", [task(6, coherent_pair=[3, 5]), task(6, id="q", title="")])
    with pytest.raises(ValidationError) as info:
        load_tasks(tmp_path / "c.json")
    assert len(info.value.problems) == 2


def test_select_tasks(sample_corpus_path):
    tasks = load_tasks(sample_corpus_path)
    assert [t.id for t in select_tasks(tasks, ["fried-egg"])] == ["fried-egg"]
    with pytest.raises(ValidationError):
        select_tasks(tasks, ["nope"])

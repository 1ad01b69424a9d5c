import json

import pytest

from visinstruct import cli
from visinstruct.errors import ValidationError
from visinstruct.replay import check_compatible, recorded_script, replay
from visinstruct.reflection import load_trace


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("replay")
    ids = ["--task", "bake-chicken-wings", "--task", "potato-chips"]
    assert cli.main(["run", *ids, "--out", str(out), "--set", "run.timesteps=8"]) == 0
    return out


def rewrite(src, dst, edit):
    """Copy a trace, applying ``edit(obj)`` to every parsed line."""
    lines = [json.loads(x) for x in src.read_text().splitlines()]
    for obj in lines:
        edit(obj)
    dst.write_text("".join(json.dumps(o, sort_keys=True, separators=(",", ":")) + "\n" for o in lines))
    return dst


def test_unmodified_trace_replays(run_dir):
    res = replay(run_dir / "bake-chicken-wings" / "trace.jsonl")
    assert res.ok and res.steps_checked == 8 and "identical" in res.describe()


def test_recorded_script_skips_toy_calls(run_dir):
    trace = load_trace(run_dir / "potato-chips" / "trace.jsonl")
    script = recorded_script(trace)
    assert script.strict and all(str(e.capability) != "ImageGenerator" for e in script.entries)


def test_tampered_response_diverges_at_that_step(run_dir, tmp_path):
    def edit(obj):
        if obj.get("kind") == "step" and obj["step_index"] == 2:
            for call in obj["backend_calls"]:
                if call["purpose"] == "detect" and call["category"] == "Attribute":
                    call["response"] = "NoError"

    path = rewrite(run_dir / "bake-chicken-wings" / "trace.jsonl", tmp_path / "t.jsonl", edit)
    res = replay(path)
    assert not res.ok and res.divergent_step == 2
    assert cli.main(["replay", str(path)]) == 1


def test_tampered_later_step_leaves_earlier_ones_alone(run_dir, tmp_path):
    def edit(obj):
        if obj.get("kind") == "step" and obj["step_index"] == 5:
            for call in obj["backend_calls"]:
                if call["purpose"] == "detect" and call["category"] == "Relation":
                    call["response"] = "Regenerate(A bowl of soup)"

    res = replay(rewrite(run_dir / "potato-chips" / "trace.jsonl", tmp_path / "t.jsonl", edit))
    assert res.divergent_step == 5


@pytest.mark.parametrize(
    "edit,fragment",
    [
        (lambda h: h.update(package_version="0.0.0-old"), "written by version 0.0.0-old"),
        (lambda h: h.update(format_version=-1), "trace format"),
        (lambda h: h["config"]["runtime"].update(guidance=9.0), "does not match its recorded hash"),
        (lambda h: h.update(kernel="gpu"), "kernel 'gpu'"),
    ],
)
def test_incompatible_header_refused(run_dir, tmp_path, edit, fragment, capsys):
    def apply(obj):
        if obj.get("kind") == "header":
            edit(obj)

    path = rewrite(run_dir / "potato-chips" / "trace.jsonl", tmp_path / "t.jsonl", apply)
    with pytest.raises(ValidationError) as info:
        check_compatible(load_trace(path))
    assert any(fragment in p for p in info.value.problems)
    assert cli.main(["replay", str(path)]) == 1
    assert fragment in capsys.readouterr().err

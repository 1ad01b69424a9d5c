"""Command-line entry point: ``visinstruct {validate,run,eval,replay}``.

Exit codes: 0 success, 1 validation or configuration problem (including a
replay divergence), 2 backend failure, 3 internal error.
"""
from __future__ import annotations

import argparse
import logging
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

from . import __version__
from .backends import EVAL_CAPABILITIES, BackendFactory, Capability, validate_bindings
from .config import RunConfig, load_config, task_seeds
from .errors import ReplayDivergence, ValidationError, VisInstructError
from .evaluation import check_corpus, corpus_stats, emit_report, evaluate, load_tasks, select_tasks
from .evaluation.scoring import find_traces
from .reflection import load_trace, run_task
from .replay import replay
from .runtime import DiffusionRuntime

log = logging.getLogger("visinstruct")


def bundled(name: str) -> Path:
    return Path(str(resources.files("visinstruct") / "data" / name))


def _print(lines, stream=None):
    stream = stream or sys.stdout
    for line in lines:
        print(line, file=stream)


# -- validate ---------------------------------------------------------------


def cmd_validate(args) -> int:
    path = Path(args.corpus) if args.corpus else bundled("sample_tasks.json")
    reports = check_corpus(path)
    clean = True
    for rep in reports:
        print(rep.summary())
        _print(f"  error: {p}" for p in rep.problems)
        _print(f"  warning: {w}" for w in rep.warnings)
        clean &= rep.ok
    tasks = [t for r in reports for t in r.tasks]
    if tasks:
        s = corpus_stats(tasks)
        print(
            f"{s.count} task(s); steps mean {s.mean_steps:.2f}, min {s.min_steps}, max {s.max_steps}; "
            + ", ".join(f"{k} {v}" for k, v in s.categories.items())
        )
    return 0 if clean else 1


# -- run --------------------------------------------------------------------


def _config(args, command: str) -> RunConfig:
    path = args.config if args.config else bundled("mock.ini")
    flags = {k: getattr(args, k, None) for k in ("seed", "parallel", "out")}
    cfg = load_config(path, overrides=args.set, flags=flags)
    validate_bindings(cfg.bindings, command)
    return cfg


def _runtime(cfg: RunConfig) -> DiffusionRuntime:
    return DiffusionRuntime.create(**cfg.runtime_kwargs(), kernel=cfg.kernel or None)


def cmd_run(args) -> int:
    cfg = _config(args, "run")  # binding errors stop here, before any generation
    tasks = select_tasks(load_tasks(args.corpus or bundled("sample_tasks.json")), args.task)
    seeds = task_seeds(cfg.seed, [t.id for t in tasks])
    runtime = _runtime(cfg)
    factory = BackendFactory(cfg.bindings, runtime, cassette_dir=args.cassettes)
    out = Path(cfg.out)
    snapshot = cfg.snapshot()
    lock = threading.Lock()

    def one(task):
        trace = run_task(
            task, factory.build(task.id), runtime, out, task_seed=seeds[task.id],
            config_snapshot=snapshot, seeds={"global": cfg.seed}, template_dir=cfg.template_dir,
        )
        edits = sum(1 for s in trace.steps if s["revised_digest"])
        revised = sum(1 for s in trace.steps if s["referee_verdict"] == "Revised")
        with lock:
            print(f"{task.id:<28} {trace.status:<9} steps {len(trace.steps):>2}/{len(task.steps):<2} "
                  f"edits {edits:>2} revised {revised:>2}  {trace.path}", flush=True)
        return trace

    with ThreadPoolExecutor(max_workers=cfg.parallel) as pool:
        traces = list(pool.map(one, tasks))
    aborted = [t.task_id for t in traces if not t.complete]
    print(f"{len(traces)} task(s) run, {len(aborted)} aborted; output in {out}")
    return 2 if aborted else 0


# -- eval -------------------------------------------------------------------


def cmd_eval(args) -> int:
    cfg = _config(args, "eval")
    tasks = load_tasks(args.corpus or bundled("sample_tasks.json"))
    use_mllm = not args.no_mllm
    wanted = set(EVAL_CAPABILITIES) | ({Capability.TEXT_GENERATOR} if use_mllm else set())
    bindings = {c: d for c, d in cfg.bindings.items() if c in wanted}
    factory = BackendFactory(bindings, None)
    scores = evaluate(args.runs, tasks, factory, use_mllm=use_mllm, template_dir=cfg.template_dir)
    traces = [load_trace(p) for p in find_traces(args.runs)]
    report_dir = Path(args.report) if args.report else Path(args.runs) / "report"
    files = emit_report(traces, scores, report_dir)
    d = scores.to_dict()
    for key in ("clip_score", "dino_score", "bert_score"):
        m = d[key]
        mean = "n/a" if m["mean"] is None else f"{m['mean']:.4f}"
        print(f"{key:<12} {mean:>8}  (n={m['n']}, skipped={m['skipped']})")
    if d["ratings"]:
        for k, v in d["ratings"].items():
            print(f"{k:<12} {'n/a' if v['mean'] is None else format(v['mean'], '.4f'):>8}  (n={v['n']})")
    _print(f"note: {n}" for n in d["notes"])
    print(f"report: {files['html']}\nsummary: {files['json']}")
    return 0


# -- replay -----------------------------------------------------------------


def cmd_replay(args) -> int:
    paths = []
    for p in args.traces:
        paths += find_traces(p)
    if not paths:
        raise ValidationError("no traces to replay", [f"{p}: no trace files" for p in args.traces])
    failed = None
    for p in paths:
        res = replay(p)
        print(res.describe())
        if not res.ok and failed is None:
            failed = res
    if failed is not None:
        raise ReplayDivergence(failed.describe(), failed.divergent_step)
    return 0


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="visinstruct", description="Step-by-step visual instruction generation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI config file (default: bundled offline mock config)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. run.guidance=3 or backend.Locator.kind=Mock")

    v = sub.add_parser("validate", help="check a task corpus")
    v.add_argument("corpus", nargs="?", help="task file or directory (default: bundled sample corpus)")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="generate image series for tasks")
    r.add_argument("corpus", nargs="?", help="task file or directory (default: bundled sample corpus)")
    common(r)
    r.add_argument("--task", action="append", help="run only this task id (repeatable)")
    r.add_argument("--seed", type=int, help="global seed")
    r.add_argument("--parallel", type=int, help="tasks to run concurrently")
    r.add_argument("--out", help="output directory")
    r.add_argument("--cassettes", help="record live (Http) backend responses here, one JSONL file per task and capability")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="score finished runs and write a report")
    e.add_argument("runs", help="run output directory (holding <task>/trace.jsonl)")
    e.add_argument("--corpus", help="task file or directory the runs came from")
    common(e)
    e.add_argument("--no-mllm", action="store_true", help="skip 1-5 ratings from the text generator")
    e.add_argument("--report", help="report directory (default: <runs>/report)")
    e.set_defaults(func=cmd_eval)

    rp = sub.add_parser("replay", help="re-execute traces against their recorded responses")
    rp.add_argument("traces", nargs="+", help="trace files or run directories")
    rp.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except VisInstructError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - last-resort mapping
        log.exception("internal error")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

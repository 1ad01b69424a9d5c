"""Static gallery report: one HTML file, a local assets folder, and a JSON summary.

The HTML depends only on the traces and scores, so identical inputs give
identical bytes. The generation time is written to the JSON summary only.
"""
from __future__ import annotations

import datetime as _dt
import html
import json
import shutil
from pathlib import Path

from .. import __version__
from .metrics import CLIP_SCALE

_CSS = """
body{font-family:sans-serif;margin:1.5em;color:#222}
table{border-collapse:collapse;margin:0.5em 0 1.5em}
td,th{border:1px solid #ccc;padding:4px 8px;vertical-align:top;font-size:13px}
th{background:#f3f3f3}
img{width:96px;height:96px;image-rendering:pixelated}
.abort{color:#a00;font-weight:bold}
.muted{color:#888}
"""


def _fmt(v, digits=4):
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.{digits}f}"
    return html.escape(str(v))


def _img_cell(trace, step, kind, assets: Path, out_dir: Path):
    stem = step.get("images", {}).get(kind)
    if stem is None:
        return '<td class="muted">none</td>'
    src = Path(trace.path).parent / f"{stem}.png"
    dest = assets / trace.task_id / f"{stem}.png"
    if not src.is_file():
        return f'<td class="muted">missing {html.escape(stem)}.png</td>'
    dest.parent.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(src, dest)
    rel = dest.relative_to(out_dir).as_posix()
    return f'<td><img src="{html.escape(rel)}" alt="{html.escape(kind)}"></td>'


def _metric_table(scores) -> list[str]:
    d = scores.to_dict()
    rows = ["<table><tr><th>metric</th><th>mean</th><th>n</th><th>skipped</th><th>averaging</th></tr>"]
    for key in ("clip_score", "dino_score", "bert_score"):
        m = d[key]
        rows.append(
            f"<tr><td>{key}</td><td>{_fmt(m['mean'])}</td><td>{m['n']}</td><td>{m['skipped']}</td>"
            f"<td>{html.escape(m['averaging'])}</td></tr>"
        )
    rows.append("</table>")
    if d["ratings"]:
        rows.append("<table><tr><th>rating</th><th>mean</th><th>n</th></tr>")
        for k, v in d["ratings"].items():
            rows.append(f"<tr><td>{k}</td><td>{_fmt(v['mean'])}</td><td>{v['n']}</td></tr>")
        rows.append("</table>")
    for note in d["notes"]:
        rows.append(f'<p class="muted">{html.escape(note)}</p>')
    return rows


def render_html(traces, scores, out_dir) -> str:
    out_dir = Path(out_dir)
    assets = out_dir / "assets"
    parts = [
        "<!DOCTYPE html>",
        '<html><head><meta charset="utf-8"><title>Visual instruction report</title>',
        f"<style>{_CSS}</style></head><body>",
        "<h1>Visual instruction report</h1>",
        f'<p class="muted">package {html.escape(__version__)}; CLIP-style score scaled by {CLIP_SCALE}; '
        "DINO ratio = coherent-pair distance / independent-pair distance (lower is better); "
        "BERT-style score = greedy token F1 without idf.</p>",
    ]
    if scores is not None:
        parts.append("<h2>Scores</h2>")
        parts += _metric_table(scores)
    per_task = {t.task_id: t for t in scores.per_task} if scores is not None else {}
    for trace in sorted(traces, key=lambda t: t.task_id):
        parts.append(f"<h2>{html.escape(trace.task_id)}</h2>")
        if not trace.complete:
            failed = trace.footer.get("failed_step") if trace.footer else None
            parts.append(
                f'<p class="abort">run {html.escape(trace.status)}'
                f"{'' if failed is None else f' at step {failed}'}; showing {len(trace.steps)} completed step(s)</p>"
            )
        edits = sum(1 for s in trace.steps if s.get("revised_digest"))
        if edits == 0:
            parts.append('<p class="muted">no edits in this run; revised column empty</p>')
        ts = per_task.get(trace.task_id)
        parts.append(
            "<table><tr><th>step</th><th>description</th><th>draft</th><th>revised</th><th>final</th>"
            "<th>detected</th><th>verdict</th><th>memory</th><th>clip</th></tr>"
        )
        for k, step in enumerate(trace.steps):
            det = step.get("detected")
            det_txt = "none" if det is None else f"{det['category']}: {det['command']}"
            clip = ts.clip.items[k] if ts is not None and k < len(ts.clip.items) else None
            notes = "".join(f'<br><span class="muted">{html.escape(n)}</span>' for n in step.get("notes", []))
            parts.append(
                f"<tr><td>{step['step_index']}</td><td>{html.escape(step['description'])}{notes}</td>"
                + _img_cell(trace, step, "draft", assets, out_dir)
                + _img_cell(trace, step, "revised", assets, out_dir)
                + _img_cell(trace, step, "final", assets, out_dir)
                + f"<td>{html.escape(det_txt)}</td><td>{html.escape(step['referee_verdict'])}</td>"
                f"<td>{html.escape(step['memory_provenance'])}</td><td>{_fmt(clip)}</td></tr>"
            )
        parts.append("</table>")
    parts.append("</body></html>")
    return "\n".join(parts) + "\n"


def emit_report(traces, scores, out_dir, now=None) -> dict:
    """Write ``report.html``, ``assets/`` and ``scores.json`` under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    page = render_html(traces, scores, out_dir)
    (out_dir / "report.html").write_text(page, encoding="utf-8")
    now = now or _dt.datetime.now(_dt.timezone.utc)
    summary = {
        "generated_at": now.isoformat(timespec="seconds"),
        "package_version": __version__,
        "tasks": sorted(t.task_id for t in traces),
        "incomplete": sorted(t.task_id for t in traces if not t.complete),
        "scores": scores.to_dict() if scores is not None else None,
    }
    (out_dir / "scores.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return {"html": out_dir / "report.html", "json": out_dir / "scores.json"}

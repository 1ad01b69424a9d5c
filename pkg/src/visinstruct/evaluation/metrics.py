"""Automatic metrics over generated image series.

All three take plain callables for the embedders and the captioner, so they
can be tested against hand-built vectors; :func:`backend_tools` adapts a
BackendSet to those callables.

* CLIP-style score: ``2.5 * max(cos(image, expression), 0)`` per step.
* DINO ratio: embedding distance over the coherent pair divided by the
  distance over the independent pair; lower is better.
* BERT-style score: greedy-matching token F1 between caption and expression.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..backends import Capability
from ..errors import BackendError, ContractError

log = logging.getLogger(__name__)

CLIP_SCALE = 2.5
_EPS = 1e-12


@dataclass
class MetricResult:
    """A mean with the number of items behind it and the number skipped."""

    name: str
    mean: float | None
    n: int
    skipped: int = 0
    items: list = field(default_factory=list)  # per-item value, None where skipped

    def to_dict(self) -> dict:
        return {"name": self.name, "mean": self.mean, "n": self.n, "skipped": self.skipped, "items": self.items}


def pooled(name, items) -> MetricResult:
    vals = [v for v in items if v is not None]
    mean = float(np.mean(vals)) if vals else None
    return MetricResult(name, mean, len(vals), len(items) - len(vals), list(items))


def _unit(v) -> np.ndarray | None:
    v = np.asarray(v, dtype=np.float64).ravel()
    norm = np.linalg.norm(v)
    return None if norm < _EPS or not np.isfinite(norm) else v / norm


def clip_similarity(image_vec, text_vec, scale: float = CLIP_SCALE) -> float | None:
    a, b = _unit(image_vec), _unit(text_vec)
    if a is None or b is None:
        return None
    return scale * max(float(a @ b), 0.0)


def clip_score(images, expressions, embed_image, embed_texts, scale: float = CLIP_SCALE) -> MetricResult:
    if len(images) != len(expressions):
        raise ContractError(f"{len(images)} images but {len(expressions)} expressions")
    try:
        text_vecs = embed_texts(list(expressions))
    except BackendError as exc:
        log.warning("text embedder failed; all %d items skipped: %s", len(images), exc)
        return pooled("clip_score", [None] * len(images))
    items = []
    for img, tv in zip(images, text_vecs):
        try:
            items.append(None if img is None else clip_similarity(embed_image(img), tv, scale))
        except BackendError as exc:
            log.warning("image embedder failed, item skipped: %s", exc)
            items.append(None)
    return pooled("clip_score", items)


@dataclass(frozen=True)
class DinoRatio:
    value: float | None  # None when the independent-pair distance is zero
    coherent_distance: float
    independent_distance: float

    @property
    def defined(self) -> bool:
        return self.value is not None


def dino_ratio(embeddings, coherent_pair, independent_pair) -> DinoRatio:
    n = len(embeddings)
    for name, (a, b) in (("coherent", coherent_pair), ("independent", independent_pair)):
        if not (0 <= a < n and 0 <= b < n):
            raise ContractError(f"{name} pair {(a, b)} out of range for {n} images")
    e = [np.asarray(v, dtype=np.float64).ravel() for v in embeddings]
    lp = float(np.linalg.norm(e[coherent_pair[0]] - e[coherent_pair[1]]))
    ln = float(np.linalg.norm(e[independent_pair[0]] - e[independent_pair[1]]))
    if ln < _EPS:
        return DinoRatio(None, lp, ln)
    return DinoRatio(lp / ln, lp, ln)


def dino_score(image_series, coherent_pair, independent_pair, embed_image) -> DinoRatio:
    idx = sorted(set(coherent_pair) | set(independent_pair))
    vecs = {k: embed_image(image_series[k]) for k in idx}
    placeholder = np.zeros(1)
    emb = [vecs.get(k, placeholder) for k in range(len(image_series))]
    return dino_ratio(emb, coherent_pair, independent_pair)


def dino_mean(ratios) -> MetricResult:
    """Mean over tasks; undefined ratios are excluded and counted as skipped."""
    return pooled("dino_score", [r.value for r in ratios])


def greedy_f1(cand_vecs, ref_vecs) -> float:
    """Token-level greedy matching F1 (no idf weighting)."""
    c = np.asarray(cand_vecs, dtype=np.float64)
    r = np.asarray(ref_vecs, dtype=np.float64)
    if c.size == 0 or r.size == 0:
        return 0.0
    c = c / np.maximum(np.linalg.norm(c, axis=1, keepdims=True), _EPS)
    r = r / np.maximum(np.linalg.norm(r, axis=1, keepdims=True), _EPS)
    sim = c @ r.T
    precision = float(sim.max(axis=1).mean())
    recall = float(sim.max(axis=0).mean())
    if precision + recall <= 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def bert_score(images, expressions, caption, embed_tokens) -> MetricResult:
    """``caption(img) -> str``; ``embed_tokens(texts) -> list of (n_tokens, d) arrays``."""
    if len(images) != len(expressions):
        raise ContractError(f"{len(images)} images but {len(expressions)} expressions")
    items = []
    for img, expr in zip(images, expressions):
        if img is None:
            items.append(None)
            continue
        try:
            cap = caption(img)
            if not cap or not cap.strip():
                log.warning("empty caption scored 0")
                items.append(0.0)
                continue
            cand, ref = embed_tokens([cap, expr])
        except BackendError as exc:
            log.warning("captioner/embedder failed, item skipped: %s", exc)
            items.append(None)
            continue
        items.append(greedy_f1(cand, ref))
    return pooled("bert_score", items)


@dataclass
class EvalTools:
    embed_image: object
    embed_texts: object
    embed_tokens: object
    caption: object


def backend_tools(backends, task_id=None) -> EvalTools:
    def embed_image(img):
        r = backends.call(Capability.IMAGE_EMBEDDER, {"purpose": "eval", "task": task_id, "image": img})
        return np.asarray(r["vector"], dtype=np.float64)

    def embed_texts(texts):
        r = backends.call(
            Capability.TEXT_EMBEDDER, {"purpose": "eval", "task": task_id, "texts": list(texts), "granularity": "sentence"}
        )
        return [np.asarray(v, dtype=np.float64) for v in r["vectors"]]

    def embed_tokens(texts):
        r = backends.call(
            Capability.TEXT_EMBEDDER, {"purpose": "eval", "task": task_id, "texts": list(texts), "granularity": "token"}
        )
        return [np.asarray(v, dtype=np.float64).reshape(len(v), -1) if len(v) else np.zeros((0, 1)) for v in r["vectors"]]

    def caption(img):
        return backends.call(Capability.CAPTIONER, {"purpose": "eval", "task": task_id, "image": img})["text"]

    return EvalTools(embed_image, embed_texts, embed_tokens, caption)

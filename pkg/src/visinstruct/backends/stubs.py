"""Deterministic stand-ins for each capability.

Mock backends fall back to these when a request matches no script entry (in
non-strict mode), and scripts may name them explicitly with ``"stub"``. They
are crude but local: edits only touch masked tokens, so tests can see where a
tool acted.
"""
from __future__ import annotations

import hashlib

import numpy as np

from ..diffusion.latent import LatentGrid
from ..text import HashingTextEncoder
from .types import Capability, MaskResult

EMBED_DIM = 64
_ENCODER = HashingTextEncoder(EMBED_DIM, seed=17)


def _seed_of(*parts) -> int:
    h = hashlib.blake2b("\x1f".join(map(str, parts)).encode(), digest_size=8).digest()
    return int.from_bytes(h, "little")


def stub_text(request: dict) -> str:
    purpose = request.get("purpose")
    if purpose == "historical_prompt":
        prev = request.get("previous_step", "").rstrip(".")
        return f"The objects from the previous step ({prev.lower()}) remain in view."
    if purpose == "detect":
        return "NoError"
    if purpose == "referee":
        return "draft"
    if purpose == "rate":
        return "3"
    return "ok"


def stub_generate(request: dict, height=8, width=8, channels=16) -> LatentGrid:
    rng = np.random.default_rng(_seed_of("gen", request["text"], request["seed"]))
    return LatentGrid(np.tanh(rng.standard_normal((height * width, channels))), height, width)


def stub_locate(image: LatentGrid, expression: str) -> MaskResult:
    h, w = image.height, image.width
    size_r, size_c = max(1, h // 2), max(1, w // 2)
    s = _seed_of("loc", expression)
    r0 = s % (h - size_r + 1)
    c0 = (s >> 16) % (w - size_c + 1)
    mask = np.zeros((h, w), dtype=bool)
    mask[r0 : r0 + size_r, c0 : c0 + size_c] = True
    return MaskResult(mask, 0.9, expression)


def _flat(mask: MaskResult) -> np.ndarray:
    return mask.mask.ravel()


def stub_remove(image: LatentGrid, mask: MaskResult) -> LatentGrid:
    m = _flat(mask)
    tokens = image.tokens.copy()
    fill = tokens[~m].mean(axis=0) if (~m).any() else np.zeros(image.channels)
    tokens[m] = fill
    return LatentGrid.like(image, tokens)


def _text_direction(text: str, channels: int) -> np.ndarray:
    proj = np.random.default_rng(_seed_of("proj", channels)).normal(0, 1.0, (EMBED_DIM, channels))
    return np.tanh(_ENCODER.encode(text) @ proj)


def stub_inpaint(image: LatentGrid, mask: MaskResult, prompt: str) -> LatentGrid:
    m = _flat(mask)
    tokens = image.tokens.copy()
    tokens[m] = 0.5 * tokens[m] + 0.5 * _text_direction(prompt, image.channels)
    return LatentGrid.like(image, tokens)


def stub_identity(image, mask, reference, reference_mask) -> LatentGrid:
    m = _flat(mask)
    rm = _flat(reference_mask)
    tokens = image.tokens.copy()
    target = reference.tokens[rm].mean(axis=0) if rm.any() else reference.tokens.mean(axis=0)
    tokens[m] = 0.5 * tokens[m] + 0.5 * target
    return LatentGrid.like(image, tokens)


_NOUNS = ["pan", "bowl", "plate", "cutting board", "tray", "pot"]
_ADJ = ["colorful", "steaming", "fresh", "golden", "raw", "sliced"]


def stub_caption(image: LatentGrid) -> str:
    s = _seed_of("cap", image.digest())
    return f"a photo of {_ADJ[s % len(_ADJ)]} food in a {_NOUNS[(s >> 8) % len(_NOUNS)]}"


def stub_image_embed(image: LatentGrid) -> np.ndarray:
    n = image.tokens.size
    proj = np.random.default_rng(_seed_of("img-embed", n)).normal(0, 1 / np.sqrt(n), (n, EMBED_DIM))
    return image.tokens.ravel() @ proj


def stub_text_embed(texts, granularity="sentence"):
    if granularity == "token":
        toks, vecs = [], []
        for t in texts:
            words, v = _ENCODER.encode_tokens(t)
            toks.append(words)
            vecs.append(v.tolist())
        return {"tokens": toks, "vectors": vecs}
    return {"vectors": [_ENCODER.encode(t).tolist() for t in texts]}


def stub_response(capability: Capability, request: dict) -> dict:
    cap = Capability(capability)
    if cap is Capability.TEXT_GENERATOR:
        return {"text": stub_text(request)}
    if cap is Capability.IMAGE_GENERATOR:
        return {"image": stub_generate(request), "trace": None}
    if cap is Capability.LOCATOR:
        return {"mask": stub_locate(request["image"], request["expression"])}
    if cap is Capability.OBJECT_REMOVER:
        return {"image": stub_remove(request["image"], request["mask"])}
    if cap is Capability.ATTRIBUTE_INPAINTER:
        return {"image": stub_inpaint(request["image"], request["mask"], request["prompt"])}
    if cap is Capability.IDENTITY_EDITOR:
        return {"image": stub_identity(request["image"], request["mask"], request["reference"], request["reference_mask"])}
    if cap is Capability.CAPTIONER:
        return {"text": stub_caption(request["image"])}
    if cap is Capability.IMAGE_EMBEDDER:
        return {"vector": stub_image_embed(request["image"]).tolist()}
    if cap is Capability.TEXT_EMBEDDER:
        return stub_text_embed(request["texts"], request.get("granularity", "sentence"))
    raise AssertionError(cap)


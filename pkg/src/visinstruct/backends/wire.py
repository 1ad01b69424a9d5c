"""JSON wire encoding for requests and responses.

Latents travel as base64 little-endian float64 (lossless, so replayed images
are bit-exact); token traces as base64 little-endian float32 with per-entry
shape headers; masks as run-length-encoded binary grids.
"""
from __future__ import annotations

import base64
import hashlib
import json

import numpy as np

from ..diffusion.latent import LatentGrid
from ..diffusion.trace import TokenTrace
from ..errors import ContractError
from .types import MaskResult

TYPE_KEY = "__type__"


def rle_encode(mask: np.ndarray) -> list[int]:
    """Alternating run lengths over the row-major mask, starting with a 0-run."""
    flat = np.asarray(mask, dtype=bool).ravel()
    runs, current, count = [], False, 0
    for v in flat:
        if v == current:
            count += 1
        else:
            runs.append(count)
            current, count = v, 1
    runs.append(count)
    return runs


def rle_decode(runs, height: int, width: int) -> np.ndarray:
    flat = np.zeros(height * width, dtype=bool)
    pos, value = 0, False
    for r in runs:
        if r < 0 or pos + r > flat.size:
            raise ContractError("run-length mask overflows its grid")
        flat[pos : pos + r] = value
        pos += r
        value = not value
    if pos != flat.size:
        raise ContractError(f"run-length mask covers {pos} of {flat.size} cells")
    return flat.reshape(height, width)


def to_wire(obj):
    if isinstance(obj, LatentGrid):
        data = np.ascontiguousarray(obj.tokens, dtype="<f8").tobytes()
        return {
            TYPE_KEY: "latent",
            "height": obj.height,
            "width": obj.width,
            "channels": obj.channels,
            "dtype": "float64-le",
            "data": base64.b64encode(data).decode(),
        }
    if isinstance(obj, TokenTrace):
        return {TYPE_KEY: "token_trace", **obj.to_dict()}
    if isinstance(obj, MaskResult):
        h, w = obj.mask.shape
        return {
            TYPE_KEY: "mask",
            "height": h,
            "width": w,
            "rle": rle_encode(obj.mask),
            "confidence": obj.confidence,
            "expression": obj.expression,
        }
    if isinstance(obj, dict):
        return {str(k): to_wire(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_wire(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def from_wire(obj):
    if isinstance(obj, dict):
        kind = obj.get(TYPE_KEY)
        if kind == "latent":
            if obj.get("dtype") != "float64-le":
                raise ContractError(f"unsupported latent dtype {obj.get('dtype')!r}")
            raw = np.frombuffer(base64.b64decode(obj["data"]), dtype="<f8")
            tokens = raw.reshape(obj["height"] * obj["width"], obj["channels"]).astype(np.float64)
            return LatentGrid(tokens, obj["height"], obj["width"])
        if kind == "token_trace":
            return TokenTrace.from_dict(obj)
        if kind == "mask":
            mask = rle_decode(obj["rle"], obj["height"], obj["width"])
            return MaskResult(mask, float(obj["confidence"]), obj.get("expression", ""))
        return {k: from_wire(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [from_wire(v) for v in obj]
    return obj


def canonical_json(obj) -> str:
    return json.dumps(to_wire(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def request_hash(capability: str, request: dict) -> str:
    return hashlib.sha256(f"{capability}\n{canonical_json(request)}".encode()).hexdigest()

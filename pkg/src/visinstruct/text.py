"""Deterministic hashed n-gram text encoder (no model weights)."""
from __future__ import annotations

import hashlib
import re

import numpy as np

DEFAULT_DIM = 64
_TOKEN = re.compile(r"[a-z0-9]+(?:'[a-z]+)?")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


class HashingTextEncoder:
    """Signed feature hashing of word unigrams and bigrams, L2-normalized.

    Keyed blake2b keeps buckets stable across processes (``hash()`` is salted).
    """

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0, bigram_weight: float = 0.5):
        self.dim = dim
        self.seed = seed
        self.bigram_weight = bigram_weight
        self._key = seed.to_bytes(8, "little", signed=True)

    def _slot(self, feature: str) -> tuple[int, float]:
        h = int.from_bytes(
            hashlib.blake2b(feature.encode(), digest_size=8, key=self._key).digest(), "little"
        )
        return h % self.dim, 1.0 if (h >> 63) & 1 else -1.0

    def _accumulate(self, vec, features, weight):
        for f in features:
            i, sign = self._slot(f)
            vec[i] += sign * weight

    def encode(self, text: str) -> np.ndarray:
        toks = tokenize(text)
        vec = np.zeros(self.dim)
        self._accumulate(vec, toks, 1.0)
        self._accumulate(vec, (f"{a} {b}" for a, b in zip(toks, toks[1:])), self.bigram_weight)
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec

    def encode_tokens(self, text: str) -> tuple[list[str], np.ndarray]:
        """Per-token unit vectors (unigram hashing plus a small context term)."""
        toks = tokenize(text)
        out = np.zeros((len(toks), self.dim))
        for k, tok in enumerate(toks):
            self._accumulate(out[k], [tok], 1.0)
            self._accumulate(out[k], [f"#{tok[:4]}"], 0.25)
            out[k] /= np.linalg.norm(out[k]) or 1.0
        return toks, out

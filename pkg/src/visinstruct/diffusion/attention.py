from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from .kernels import get_kernel


@dataclass(frozen=True, eq=False)
class AttentionBlock:
    """Seeded C x C query/key/value projections (tokens are rows: ``q = p @ wq``)."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    seed: int

    @classmethod
    def from_seed(cls, channels: int, seed: int, scale: float | None = None) -> "AttentionBlock":
        rng = np.random.default_rng([seed, 0xA77])
        scale = 1.0 / np.sqrt(channels) if scale is None else scale
        mats = [rng.normal(0.0, scale, size=(channels, channels)) for _ in range(3)]
        for m in mats:
            m.setflags(write=False)
        return cls(*mats, seed=seed)

    @classmethod
    def identity(cls, channels: int) -> "AttentionBlock":
        eye = np.eye(channels)
        eye.setflags(write=False)
        return cls(eye, eye, eye, seed=-1)

    @property
    def channels(self) -> int:
        return self.wq.shape[0]


def _check(p, memory, block):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise ContractError(f"tokens must be 2-D, got {p.shape}")
    C = p.shape[1]
    if block.channels != C or block.wq.shape != (C, C):
        raise ContractError(f"attention block is {block.wq.shape}, tokens have {C} channels")
    if memory is not None:
        memory = np.asarray(memory, dtype=np.float64)
        if memory.ndim != 2 or memory.shape[1] != C:
            raise ContractError(f"memory tokens shape {memory.shape} incompatible with C={C}")
    return p, memory


def attention_with_memory(p, memory, block: AttentionBlock, kernel=None, return_weights=False):
    """Attend from ``p`` over ``[p, memory]``.

    With ``memory=None`` (or zero rows) this is plain self-attention over ``p``.
    """
    p, memory = _check(p, memory, block)
    kv = p if memory is None or len(memory) == 0 else np.vstack([p, memory])
    out, weights = get_kernel(kernel).attention(p, kv, block.wq, block.wk, block.wv)
    return (out, weights) if return_weights else out


def self_attention(p, block: AttentionBlock, kernel=None, return_weights=False):
    p, _ = _check(p, None, block)
    out, weights = get_kernel(kernel).attention(p, p, block.wq, block.wk, block.wv)
    return (out, weights) if return_weights else out


def sample_tokens(features, M: int | None, seed) -> np.ndarray:
    """Pick ``M`` distinct rows of ``features`` with a seeded generator.

    ``M=None`` means ``floor(N/2)``. Rows come back in ascending index order,
    so ``M == N`` returns the matrix unchanged.
    """
    features = np.asarray(features, dtype=np.float64)
    N, C = features.shape
    if M is None:
        M = N // 2
    if M < 0 or M > N:
        raise ContractError(f"cannot sample {M} tokens from {N}")
    idx = sample_indices(N, M, seed)
    return features[idx]


def sample_indices(N: int, M: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(N, size=M, replace=False))

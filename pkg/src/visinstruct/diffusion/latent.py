from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError


@dataclass(frozen=True, eq=False)
class LatentGrid:
    """An ``N x C`` token matrix laid out on a ``height x width`` grid."""

    tokens: np.ndarray
    height: int
    width: int

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=np.float64)
        if tokens.ndim != 2:
            raise ContractError(f"latent tokens must be 2-D, got shape {tokens.shape}")
        if tokens.shape[0] != self.height * self.width:
            raise ContractError(
                f"latent has {tokens.shape[0]} tokens but grid is {self.height}x{self.width}"
            )
        if not np.all(np.isfinite(tokens)):
            raise ContractError("latent contains non-finite entries")
        object.__setattr__(self, "tokens", tokens)

    @classmethod
    def like(cls, other: "LatentGrid", tokens: np.ndarray) -> "LatentGrid":
        return cls(tokens, other.height, other.width)

    @property
    def shape(self) -> tuple[int, int]:
        return self.tokens.shape

    @property
    def channels(self) -> int:
        return self.tokens.shape[1]

    def digest(self) -> str:
        """sha256 over the little-endian float64 bytes; used for bitwise comparison."""
        data = np.ascontiguousarray(self.tokens, dtype="<f8").tobytes()
        return hashlib.sha256(data + f"{self.height}x{self.width}".encode()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, LatentGrid):
            return NotImplemented
        return (
            self.height == other.height
            and self.width == other.width
            and np.array_equal(self.tokens, other.tokens)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ConditionEmbedding:
    vector: np.ndarray
    source_text: str = field(default="")

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1:
            raise ContractError("condition embedding must be a vector")
        if not np.all(np.isfinite(vec)):
            raise ContractError("condition embedding contains non-finite entries")
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self) -> int:
        return self.vector.shape[0]

    @classmethod
    def null(cls, dim: int) -> "ConditionEmbedding":
        """The zero-text embedding used for the unconditional guidance branch."""
        return cls(np.zeros(dim), "")

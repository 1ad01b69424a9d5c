from __future__ import annotations

from dataclasses import dataclass

from .diffusion import (
    DEFAULT_GUIDANCE,
    DEFAULT_MEMORY_FRACTION,
    ConditionEmbedding,
    NoiseSchedule,
    ToyPredictor,
    build_schedule,
)
from .text import HashingTextEncoder


@dataclass
class DiffusionRuntime:
    """Everything the toy image path needs: schedule, predictor, text encoder."""

    sched: NoiseSchedule
    predictor: ToyPredictor
    encoder: HashingTextEncoder
    guidance: float = DEFAULT_GUIDANCE
    memory_fraction: float = DEFAULT_MEMORY_FRACTION

    @classmethod
    def create(
        cls,
        timesteps: int = 50,
        schedule: str = "linear",
        guidance: float = DEFAULT_GUIDANCE,
        memory_fraction: float = DEFAULT_MEMORY_FRACTION,
        height: int = 8,
        width: int = 8,
        channels: int = 16,
        text_dim: int = 64,
        model_seed: int = 0,
        kernel: str | None = None,
    ) -> "DiffusionRuntime":
        return cls(
            sched=build_schedule(timesteps, schedule),
            predictor=ToyPredictor.from_seed(model_seed, height, width, channels, text_dim, kernel=kernel),
            encoder=HashingTextEncoder(text_dim, seed=model_seed),
            guidance=guidance,
            memory_fraction=memory_fraction,
        )

    def condition(self, text: str) -> ConditionEmbedding:
        return ConditionEmbedding(self.encoder.encode(text), text)

"""Desk-scale deterministic latent diffusion."""
from .attention import AttentionBlock, attention_with_memory, sample_tokens, self_attention
from .kernels import AVAILABLE as AVAILABLE_KERNELS
from .kernels import default_kernel_name, get_kernel
from .latent import ConditionEmbedding, LatentGrid
from .predictor import ToyPredictor
from .sampler import (
    DEFAULT_GUIDANCE,
    DEFAULT_MEMORY_FRACTION,
    cfg_eps,
    ddim_invert_step,
    ddim_step,
    generate,
    initial_noise,
    invert,
    memory_rows,
    visited_timesteps,
)
from .schedule import DEFAULT_TIMESTEPS, NoiseSchedule, build_schedule
from .trace import TokenTrace

__all__ = [
    "AVAILABLE_KERNELS", "AttentionBlock", "ConditionEmbedding", "DEFAULT_GUIDANCE",
    "DEFAULT_MEMORY_FRACTION", "DEFAULT_TIMESTEPS", "LatentGrid", "NoiseSchedule",
    "TokenTrace", "ToyPredictor", "attention_with_memory", "build_schedule", "cfg_eps",
    "ddim_invert_step", "ddim_step", "default_kernel_name", "generate", "get_kernel",
    "initial_noise", "invert", "memory_rows", "sample_tokens", "self_attention",
    "visited_timesteps",
]

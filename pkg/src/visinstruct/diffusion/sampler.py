"""DDIM stepping, inversion and the generate/invert loops."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CalibrationMismatchError, ContractError
from .attention import sample_tokens
from .kernels import get_kernel
from .latent import ConditionEmbedding, LatentGrid
from .predictor import ToyPredictor
from .schedule import NoiseSchedule
from .trace import TokenTrace

DEFAULT_GUIDANCE = 5.0
DEFAULT_MEMORY_FRACTION = 0.5


def _tokens(x):
    return x.tokens if isinstance(x, LatentGrid) else np.asarray(x, dtype=np.float64)


def _wrap(like, tokens):
    return LatentGrid.like(like, tokens) if isinstance(like, LatentGrid) else tokens


def _check_eps(x, eps):
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x.shape:
        raise ContractError(f"eps shape {eps.shape} != latent shape {x.shape}")
    return eps


def ddim_invert_step(x_t, eps, t: int, sched: NoiseSchedule, kernel=None):
    """Move one step towards noise: x_t -> x_{t+1}.

    x_{t+1} = sqrt(a_{t+1}/a_t) x_t + sqrt(a_{t+1}) (b_{t+1} - b_t) eps
    """
    sched.check_timestep(t, 0, sched.T - 1)
    x = _tokens(x_t)
    eps = _check_eps(x, eps)
    a, a1 = sched.alpha[t], sched.alpha[t + 1]
    out = get_kernel(kernel).axpby(
        np.sqrt(a1 / a), x, np.sqrt(a1) * (sched.beta[t + 1] - sched.beta[t]), eps
    )
    return _wrap(x_t, out)


def ddim_step(x_next, eps, t_next: int, sched: NoiseSchedule, kernel=None):
    """Deterministic denoising step x_{t+1} -> x_t, the exact inverse of
    :func:`ddim_invert_step` for the same ``eps``."""
    sched.check_timestep(t_next, 1, sched.T)
    x = _tokens(x_next)
    eps = _check_eps(x, eps)
    t = t_next - 1
    a, a1 = sched.alpha[t], sched.alpha[t_next]
    out = get_kernel(kernel).axpby(
        np.sqrt(a / a1), x, -np.sqrt(a) * (sched.beta[t_next] - sched.beta[t]), eps
    )
    return _wrap(x_next, out)


def cfg_eps(eps_cond, eps_uncond, g: float = DEFAULT_GUIDANCE):
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    if eps_cond.shape != eps_uncond.shape:
        raise ContractError(f"guidance branches differ in shape: {eps_cond.shape} vs {eps_uncond.shape}")
    # u + 1*(c - u) need not round back to c
    if g == 1:
        return eps_cond.copy()
    if g == 0:
        return eps_uncond.copy()
    return eps_uncond + g * (eps_cond - eps_uncond)


def memory_rows(predictor: ToyPredictor, fraction: float = DEFAULT_MEMORY_FRACTION) -> int:
    if not 0.0 <= fraction <= 1.0:
        raise ContractError(f"memory fraction {fraction} outside [0, 1]")
    return int(np.floor(predictor.n_tokens * fraction))


def visited_timesteps(sched: NoiseSchedule) -> list[int]:
    """Noisy timesteps whose features both loops record: 1..T."""
    return list(range(1, sched.T + 1))


@dataclass
class Trajectory:
    latents: list  # latents[k] is x at timestep k (inversion) or visiting order (generation)
    eps: list
    timesteps: list


class _Evaluator:
    def __init__(self, predictor, sched, condition, guidance, null):
        self.predictor = predictor
        self.sched = sched
        self.condition = condition
        self.guidance = guidance
        self.null = null

    def __call__(self, x, t, memory_t):
        eps_c, h = self.predictor.predict(x, t, self.sched, self.condition, memory_t)
        if self.guidance == 1:
            return eps_c, h
        eps_u, _ = self.predictor.predict(x, t, self.sched, self.null, memory_t)
        return cfg_eps(eps_c, eps_u, self.guidance), h


def _check_memory(memory: TokenTrace | None, sched, predictor):
    if memory is None:
        return
    missing = [t for t in visited_timesteps(sched) if t not in memory.tokens]
    if missing:
        raise CalibrationMismatchError(
            f"memory trace lacks timesteps {missing[:5]}{'...' if len(missing) > 5 else ''} "
            f"(has {len(memory)} entries, loop visits 1..{sched.T})"
        )
    if memory.rows and memory[sched.T].shape[1] != predictor.channels:
        raise ContractError("memory channel count does not match predictor")


def initial_noise(predictor: ToyPredictor, seed) -> LatentGrid:
    rng = np.random.default_rng(seed)
    return LatentGrid(
        rng.standard_normal((predictor.n_tokens, predictor.channels)),
        predictor.height,
        predictor.width,
    )


def generate(
    condition: ConditionEmbedding,
    memory: TokenTrace | None,
    seed,
    sched: NoiseSchedule,
    predictor: ToyPredictor,
    guidance: float = DEFAULT_GUIDANCE,
    memory_fraction: float = DEFAULT_MEMORY_FRACTION,
    x_T: LatentGrid | None = None,
    return_trajectory: bool = False,
):
    """Sample a clean latent from seeded noise, injecting ``memory`` per timestep.

    Returns ``(image, trace)``; the trace holds the conditional branch's
    attention-input tokens sampled at every visited timestep.
    """
    _check_memory(memory, sched, predictor)
    x = initial_noise(predictor, seed) if x_T is None else x_T
    evaluate = _Evaluator(predictor, sched, condition, guidance, ConditionEmbedding.null(predictor.text_dim))
    M = memory_rows(predictor, memory_fraction)
    sample_seed = int(seed) if np.isscalar(seed) else 0
    captured = {}
    traj = Trajectory([x], [], [])
    for t in range(sched.T, 0, -1):
        mem_t = None if memory is None else memory[t]
        eps, h = evaluate(x, t, mem_t)
        captured[t] = sample_tokens(h, M, [sample_seed, t])
        x = ddim_step(x, eps, t, sched, kernel=predictor.kernel)
        if return_trajectory:
            traj.latents.append(x)
            traj.eps.append(eps)
            traj.timesteps.append(t)
    trace = TokenTrace(captured, sample_seed)
    if return_trajectory:
        return x, trace, traj
    return x, trace


def invert(
    image: LatentGrid,
    condition: ConditionEmbedding,
    sched: NoiseSchedule,
    predictor: ToyPredictor,
    guidance: float = DEFAULT_GUIDANCE,
    memory_fraction: float = DEFAULT_MEMORY_FRACTION,
    sample_seed: int = 0,
    return_trajectory: bool = False,
):
    """Run DDIM inversion from ``image`` for the schedule's T steps.

    Features are recorded at timesteps 1..T (the same keys generation
    records), which takes one extra predictor evaluation at x_T.
    """
    evaluate = _Evaluator(predictor, sched, condition, guidance, ConditionEmbedding.null(predictor.text_dim))
    M = memory_rows(predictor, memory_fraction)
    x = image
    captured = {}
    traj = Trajectory([x], [], [])
    for t in range(0, sched.T):
        eps, h = evaluate(x, t, None)
        if t >= 1:
            captured[t] = sample_tokens(h, M, [sample_seed, t])
        x = ddim_invert_step(x, eps, t, sched, kernel=predictor.kernel)
        traj.latents.append(x)
        traj.eps.append(eps)
        traj.timesteps.append(t)
    _, h = predictor.predict(x, sched.T, sched, condition, None)
    captured[sched.T] = sample_tokens(h, M, [sample_seed, sched.T])
    trace = TokenTrace(captured, sample_seed)
    if return_trajectory:
        return trace, traj
    return trace

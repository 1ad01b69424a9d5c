from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from .attention import AttentionBlock
from .kernels import get_kernel
from .latent import ConditionEmbedding, LatentGrid
from .schedule import NoiseSchedule

DEFAULT_HEIGHT = 8
DEFAULT_WIDTH = 8
DEFAULT_CHANNELS = 16
DEFAULT_TEXT_DIM = 64


def _frozen(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ToyPredictor:
    """A tiny seeded noise predictor with one attention block.

    Per call it forms attention-input tokens
    ``h = x @ w_in + pos + temb(t/T)``, attends over ``h`` (plus any memory
    tokens), maps the result to a clean-latent estimate
    ``mu = tanh(a @ w_out + pos_out + cond @ w_cond_out)`` and returns the
    posterior-mean noise for data ~ N(mu, data_var) at timestep ``t``:
    ``sigma (x - sqrt(alpha) mu) / (alpha data_var + sigma^2)``. That stays
    smooth as sigma -> 0, which keeps DDIM inversion well conditioned.
    ``h`` is what memory capture samples from. The text condition stays out of
    ``h`` so captured tokens describe image content only; otherwise keys from
    a different prompt get arbitrary attention mass and memory from an
    unrelated image can disturb the output less than memory from a related one.
    """

    attention: AttentionBlock
    w_in: np.ndarray
    w_out: np.ndarray
    w_cond_out: np.ndarray
    pos_in: np.ndarray
    pos_out: np.ndarray
    freqs: np.ndarray
    seed: int
    height: int
    width: int
    data_var: float = 0.25
    kernel: str | None = field(default=None)

    @classmethod
    def from_seed(
        cls,
        seed: int = 0,
        height: int = DEFAULT_HEIGHT,
        width: int = DEFAULT_WIDTH,
        channels: int = DEFAULT_CHANNELS,
        text_dim: int = DEFAULT_TEXT_DIM,
        kernel: str | None = None,
    ) -> "ToyPredictor":
        rng = np.random.default_rng([seed, 0x70E])
        N, C = height * width, channels
        return cls(
            attention=AttentionBlock.from_seed(C, seed),
            w_in=_frozen(rng.normal(0.0, 0.45 / np.sqrt(C), (C, C))),
            w_out=_frozen(rng.normal(0.0, 1.2 / np.sqrt(C), (C, C))),
            w_cond_out=_frozen(rng.normal(0.0, 0.8, (text_dim, C))),
            pos_in=_frozen(rng.normal(0.0, 0.5, (N, C))),
            pos_out=_frozen(rng.normal(0.0, 0.3, (N, C))),
            freqs=_frozen(np.pi * np.geomspace(0.5, 8.0, C // 2 + C % 2)),
            seed=seed,
            height=height,
            width=width,
            kernel=kernel,
        )

    @property
    def channels(self) -> int:
        return self.w_in.shape[0]

    @property
    def text_dim(self) -> int:
        return self.w_cond_out.shape[0]

    @property
    def n_tokens(self) -> int:
        return self.height * self.width

    def timestep_embedding(self, t: int, T: int) -> np.ndarray:
        u = t / T
        emb = np.concatenate([np.sin(u * self.freqs), np.cos(u * self.freqs)])
        return 0.5 * emb[: self.channels]

    def biases(self, t: int, T: int, cond: ConditionEmbedding):
        if cond.dim != self.text_dim:
            raise ContractError(f"condition has dim {cond.dim}, predictor expects {self.text_dim}")
        in_bias = self.pos_in + self.timestep_embedding(t, T)
        out_bias = self.pos_out + cond.vector @ self.w_cond_out
        return in_bias, out_bias

    def predict(self, x, t: int, sched: NoiseSchedule, cond: ConditionEmbedding, memory=None):
        """Return ``(eps, h)`` for latent ``x`` at timestep ``t``."""
        tokens = x.tokens if isinstance(x, LatentGrid) else np.asarray(x, dtype=np.float64)
        if tokens.shape != (self.n_tokens, self.channels):
            raise ContractError(
                f"latent shape {tokens.shape} != predictor shape {(self.n_tokens, self.channels)}"
            )
        sched.check_timestep(t)
        alpha = float(sched.alpha[t])
        sigma2 = 1.0 - alpha
        coef = np.sqrt(sigma2) / (alpha * self.data_var + sigma2)
        in_bias, out_bias = self.biases(t, sched.T, cond)
        k = get_kernel(self.kernel)
        return k.branch_eps(
            tokens, in_bias, out_bias,
            self.w_in, self.attention.wq, self.attention.wk, self.attention.wv, self.w_out,
            memory, float(np.sqrt(alpha)), float(coef),
        )

    def with_kernel(self, kernel: str | None) -> "ToyPredictor":
        from dataclasses import replace

        return replace(self, kernel=kernel)

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, OutOfRangeError

DEFAULT_TIMESTEPS = 50
ALPHA_START = 0.9999
ALPHA_END = 0.01
SCHEDULE_KINDS = ("linear", "cosine")


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Cumulative signal coefficients for timesteps 0..T.

    ``alpha[0]`` is the (almost) clean end, ``alpha[T]`` the noisiest.
    ``beta`` holds sqrt(1/alpha - 1), the coefficient DDIM steps difference.
    """

    T: int
    alpha: np.ndarray
    beta: np.ndarray
    kind: str = "linear"

    def check_timestep(self, t: int, lo: int = 0, hi: int | None = None) -> None:
        hi = self.T if hi is None else hi
        if not lo <= t <= hi:
            raise OutOfRangeError(f"timestep {t} outside [{lo}, {hi}] for T={self.T}")

    def describe(self) -> dict:
        return {"T": self.T, "kind": self.kind}


def _cosine_profile(T: int, s: float = 0.008) -> np.ndarray:
    u = np.arange(T + 1, dtype=np.float64) / T
    return np.cos((u + s) / (1 + s) * np.pi / 2) ** 2


def build_schedule(T: int = DEFAULT_TIMESTEPS, kind: str = "linear") -> NoiseSchedule:
    if not isinstance(T, (int, np.integer)) or isinstance(T, bool) or T < 1:
        raise ConfigurationError(f"schedule needs T >= 1, got {T!r}")
    if kind == "linear":
        alpha = np.linspace(ALPHA_START, ALPHA_END, T + 1, dtype=np.float64)
    elif kind == "cosine":
        f = _cosine_profile(int(T))
        # rescale so both ends land exactly on the linear schedule's endpoints
        alpha = ALPHA_END + (ALPHA_START - ALPHA_END) * (f - f[-1]) / (f[0] - f[-1])
    else:
        raise ConfigurationError(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}")
    alpha.setflags(write=False)
    beta = np.sqrt(1.0 / alpha - 1.0)
    beta.setflags(write=False)
    return NoiseSchedule(T=int(T), alpha=alpha, beta=beta, kind=kind)

from __future__ import annotations

import base64
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError

WIRE_DTYPE = "<f4"


@dataclass(frozen=True, eq=False)
class TokenTrace:
    """Attention-input tokens sampled at each visited timestep of one loop."""

    tokens: dict  # timestep -> (M, C) array
    sample_seed: int

    def __post_init__(self):
        rows = {np.shape(v)[0] for v in self.tokens.values()}
        if len(rows) > 1:
            raise ContractError(f"trace matrices disagree on row count: {sorted(rows)}")

    @property
    def timesteps(self) -> list[int]:
        return sorted(self.tokens)

    @property
    def rows(self) -> int:
        return next(iter(self.tokens.values())).shape[0] if self.tokens else 0

    def __getitem__(self, t: int) -> np.ndarray:
        return self.tokens[t]

    def __len__(self):
        return len(self.tokens)

    def to_dict(self) -> dict:
        entries = []
        for t in self.timesteps:
            arr = np.ascontiguousarray(self.tokens[t], dtype=WIRE_DTYPE)
            entries.append(
                {"t": int(t), "shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode()}
            )
        return {"sample_seed": int(self.sample_seed), "dtype": "float32-le", "entries": entries}

    @classmethod
    def from_dict(cls, d: dict) -> "TokenTrace":
        if d.get("dtype", "float32-le") != "float32-le":
            raise ContractError(f"unsupported trace dtype {d.get('dtype')!r}")
        tokens = {}
        for e in d["entries"]:
            shape = tuple(e["shape"])
            raw = np.frombuffer(base64.b64decode(e["data"]), dtype=WIRE_DTYPE)
            if raw.size != int(np.prod(shape)):
                raise ContractError(f"trace entry t={e['t']} has {raw.size} values for shape {shape}")
            tokens[int(e["t"])] = raw.reshape(shape).astype(np.float64)
        return cls(tokens=tokens, sample_seed=int(d["sample_seed"]))

    def equals(self, other: "TokenTrace") -> bool:
        return (
            self.sample_seed == other.sample_seed
            and self.timesteps == other.timesteps
            and all(np.array_equal(self.tokens[t], other.tokens[t]) for t in self.timesteps)
        )

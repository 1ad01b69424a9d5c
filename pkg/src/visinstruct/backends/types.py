from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..errors import ContractError


class Capability(str, Enum):
    TEXT_GENERATOR = "TextGenerator"
    IMAGE_GENERATOR = "ImageGenerator"
    LOCATOR = "Locator"
    IDENTITY_EDITOR = "IdentityEditor"
    ATTRIBUTE_INPAINTER = "AttributeInpainter"
    OBJECT_REMOVER = "ObjectRemover"
    CAPTIONER = "Captioner"
    IMAGE_EMBEDDER = "ImageEmbedder"
    TEXT_EMBEDDER = "TextEmbedder"

    def __str__(self):
        return self.value


class BackendKind(str, Enum):
    MOCK = "Mock"
    HTTP = "Http"
    TOY = "Toy"

    def __str__(self):
        return self.value


RUN_CAPABILITIES = tuple(Capability)
EVAL_CAPABILITIES = (Capability.IMAGE_EMBEDDER, Capability.TEXT_EMBEDDER, Capability.CAPTIONER)

# required request keys per capability
REQUEST_SCHEMA = {
    Capability.TEXT_GENERATOR: ("prompt",),
    Capability.IMAGE_GENERATOR: ("text", "seed"),
    Capability.LOCATOR: ("image", "expression"),
    Capability.IDENTITY_EDITOR: ("image", "mask", "reference", "reference_mask"),
    Capability.ATTRIBUTE_INPAINTER: ("image", "mask", "prompt"),
    Capability.OBJECT_REMOVER: ("image", "mask"),
    Capability.CAPTIONER: ("image",),
    Capability.IMAGE_EMBEDDER: ("image",),
    Capability.TEXT_EMBEDDER: ("texts",),
}

RESPONSE_SCHEMA = {
    Capability.TEXT_GENERATOR: ("text",),
    Capability.IMAGE_GENERATOR: ("image",),
    Capability.LOCATOR: ("mask",),
    Capability.IDENTITY_EDITOR: ("image",),
    Capability.ATTRIBUTE_INPAINTER: ("image",),
    Capability.OBJECT_REMOVER: ("image",),
    Capability.CAPTIONER: ("text",),
    Capability.IMAGE_EMBEDDER: ("vector",),
    Capability.TEXT_EMBEDDER: ("vectors",),
}


def check_schema(capability: Capability, payload: dict, schema: dict, what: str) -> None:
    if not isinstance(payload, dict):
        raise ContractError(f"{capability} {what} must be an object, got {type(payload).__name__}")
    missing = [k for k in schema[capability] if k not in payload]
    if missing:
        raise ContractError(f"{capability} {what} missing field(s): {', '.join(missing)}")


@dataclass(frozen=True, eq=False)
class MaskResult:
    mask: np.ndarray
    confidence: float
    expression: str = ""

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise ContractError("mask must be a 2-D grid")
        conf = 0.0 if not mask.any() else float(self.confidence)
        if not 0.0 <= conf <= 1.0:
            raise ContractError(f"mask confidence {conf} outside [0, 1]")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "confidence", conf)

    @property
    def empty(self) -> bool:
        return not self.mask.any()

    def check_fits(self, height: int, width: int) -> None:
        if self.mask.shape != (height, width):
            raise ContractError(f"mask {self.mask.shape} does not match image {height}x{width}")


@dataclass
class BackendDescriptor:
    capability: Capability
    kind: BackendKind
    script: str | None = None
    endpoint: str | None = None
    credential_env: str | None = None
    model: str | None = None
    timeout_ms: int = 30000
    max_retries: int = 2
    backoff_s: float = 0.5
    options: dict = field(default_factory=dict)

    def snapshot(self) -> dict:
        # credentials are referenced by variable name only
        return {
            "capability": str(self.capability),
            "kind": str(self.kind),
            "script": self.script,
            "endpoint": self.endpoint,
            "credential_env": self.credential_env,
            "model": self.model,
            "timeout_ms": self.timeout_ms,
            "max_retries": self.max_retries,
        }

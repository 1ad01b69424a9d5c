from __future__ import annotations

from ..diffusion import generate
from ..errors import ConfigurationError
from ..runtime import DiffusionRuntime
from .base import Backend
from .types import BackendKind, Capability


class ToyImageGenerator(Backend):
    """ImageGenerator bound to the in-process toy diffusion model.

    Returns the image together with the token trace captured while sampling,
    so the draft's memory comes straight from its own denoising loop.
    """

    kind = BackendKind.TOY

    def __init__(self, runtime: DiffusionRuntime, capability=Capability.IMAGE_GENERATOR):
        if Capability(capability) is not Capability.IMAGE_GENERATOR:
            raise ConfigurationError("Toy kind only implements ImageGenerator")
        super().__init__(capability)
        self.runtime = runtime

    def invoke(self, request: dict):
        rt = self.runtime
        image, trace = generate(
            rt.condition(request["text"]),
            request.get("memory"),
            request["seed"],
            rt.sched,
            rt.predictor,
            guidance=rt.guidance,
            memory_fraction=rt.memory_fraction,
        )
        return {"image": image, "trace": trace}, 1

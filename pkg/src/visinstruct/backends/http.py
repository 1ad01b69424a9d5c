"""HTTP adapters: one POST endpoint per capability.

Text-like capabilities (TextGenerator, Captioner) speak a chat-completions
style body; everything else posts the wire-encoded request and expects a
wire-encoded response. See ``docs/protocol.md``.
"""
from __future__ import annotations

import logging
import os
import threading
import time

import httpx

from ..errors import BackendError, BackendUnavailableError, ConfigurationError
from .base import Backend
from .types import BackendDescriptor, BackendKind, Capability
from .wire import from_wire, to_wire

log = logging.getLogger(__name__)

CHAT_CAPABILITIES = (Capability.TEXT_GENERATOR, Capability.CAPTIONER)
CAPTION_PROMPT = "Describe this image in one sentence."
_META_KEYS = ("purpose", "step", "category", "task")
_RETRY_STATUS = {408, 425, 429, 500, 502, 503, 504}


def chat_body(capability: Capability, request: dict, model: str | None) -> dict:
    if capability is Capability.CAPTIONER:
        prompt, images = CAPTION_PROMPT, [request["image"]]
    else:
        prompt, images = request["prompt"], request.get("images") or []
    content = [{"type": "text", "text": prompt}]
    content += [{"type": "image", "image": to_wire(img)} for img in images]
    body = {"messages": [{"role": "user", "content": content}]}
    if model:
        body["model"] = model
    meta = {k: request[k] for k in _META_KEYS if k in request}
    if meta:
        body["metadata"] = meta
    return body


def parse_chat_reply(payload: dict) -> dict:
    try:
        content = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise BackendError(f"malformed chat reply: {exc}") from exc
    if isinstance(content, list):  # content-parts form
        content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
    return {"text": str(content)}


class HttpBackend(Backend):
    kind = BackendKind.HTTP

    def __init__(self, descriptor: BackendDescriptor, transport=None, sleep=time.sleep, environ=None):
        super().__init__(descriptor.capability)
        if not descriptor.endpoint:
            raise ConfigurationError(f"{descriptor.capability}: Http binding needs an endpoint")
        self.descriptor = descriptor
        self._transport = transport
        self._sleep = sleep
        self._environ = os.environ if environ is None else environ
        self._slots = threading.BoundedSemaphore(int(descriptor.options.get("max_concurrency", 4)))

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        var = self.descriptor.credential_env
        if var:
            token = self._environ.get(var)
            if not token:
                raise ConfigurationError(f"credential variable {var} is not set")
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def encode(self, request: dict) -> dict:
        if self.capability in CHAT_CAPABILITIES:
            return chat_body(self.capability, request, self.descriptor.model)
        return to_wire(request)

    def decode(self, payload: dict) -> dict:
        if self.capability in CHAT_CAPABILITIES:
            return parse_chat_reply(payload)
        return from_wire(payload)

    def invoke(self, request: dict):
        d = self.descriptor
        body = self.encode(request)
        headers = self._headers()
        timeout = d.timeout_ms / 1000.0
        attempts, last = 0, None
        with self._slots, httpx.Client(transport=self._transport, timeout=timeout) as client:
            for attempt in range(d.max_retries + 1):
                attempts += 1
                try:
                    resp = client.post(d.endpoint, json=body, headers=headers)
                except httpx.TransportError as exc:  # includes timeouts, refused connections
                    last = f"{type(exc).__name__}: {exc}"
                else:
                    if resp.status_code < 400:
                        try:
                            return self.decode(resp.json()), attempts
                        except ValueError as exc:
                            raise BackendError(f"{self.capability}: undecodable reply: {exc}") from exc
                    if resp.status_code not in _RETRY_STATUS:
                        err = BackendError(f"{self.capability}: HTTP {resp.status_code} from {d.endpoint}")
                        err.attempts = attempts
                        raise err
                    last = f"HTTP {resp.status_code}"
                log.warning("%s attempt %d/%d failed: %s", self.capability, attempts, d.max_retries + 1, last)
                if attempt < d.max_retries and d.backoff_s > 0:
                    self._sleep(d.backoff_s * 2**attempt)
        raise BackendUnavailableError(
            f"{self.capability} unavailable at {d.endpoint} after {attempts} attempts ({last})", attempts
        )

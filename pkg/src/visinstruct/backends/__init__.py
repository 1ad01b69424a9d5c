"""Adapters over external model capabilities: scripted mocks, HTTP clients, the toy generator."""
from .base import Backend, BackendLog, BackendSet, CallRecord
from .bindings import BackendFactory, descriptor, validate_bindings
from .cassette import RecordingBackend
from .http import HttpBackend
from .mock import MockBackend, MockScript
from .toy import ToyImageGenerator
from .types import (
    EVAL_CAPABILITIES,
    RUN_CAPABILITIES,
    BackendDescriptor,
    BackendKind,
    Capability,
    MaskResult,
)
from .wire import from_wire, request_hash, rle_decode, rle_encode, to_wire

__all__ = [
    "Backend", "BackendDescriptor", "BackendFactory", "BackendKind", "BackendLog", "BackendSet",
    "CallRecord", "Capability", "EVAL_CAPABILITIES", "HttpBackend", "MaskResult", "MockBackend",
    "MockScript", "RUN_CAPABILITIES", "RecordingBackend", "ToyImageGenerator", "descriptor",
    "from_wire", "request_hash", "rle_decode", "rle_encode", "to_wire", "validate_bindings",
]

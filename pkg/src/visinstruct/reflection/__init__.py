"""Error detection, tool-based rectification, referee arbitration and the task loop."""
from .commands import (
    EXPECTED_VERB,
    Add,
    ErrorType,
    Modify,
    NoError,
    Regenerate,
    Remove,
    ToolCommand,
    check_order,
    parse_command,
    serialize_command,
)
from .engine import Detection, Rectification, TaskRun, detect, parse_verdict, rectify, referee, run_step, run_task, step_seed
from .records import RunTrace, StepRecord, TraceWriter, Verdict, config_hash, load_trace, make_header

__all__ = [
    "Add", "Detection", "EXPECTED_VERB", "ErrorType", "Modify", "NoError", "Rectification", "Regenerate",
    "Remove", "RunTrace", "StepRecord", "TaskRun", "ToolCommand", "TraceWriter", "Verdict", "check_order",
    "config_hash", "detect", "load_trace", "make_header", "parse_command", "parse_verdict", "rectify",
    "referee", "run_step", "run_task", "serialize_command", "step_seed",
]

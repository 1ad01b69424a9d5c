"""Tool commands emitted by the error detector, and their text grammar.

Canonical forms::

    Regenerate(<new text>)
    Modify(<object in current image>, <object in previous image>)
    Add(<new description>, <object in current image>)
    Remove(<object in current image>)
    NoError

Two-argument commands split at the last top-level comma, so the first
argument may itself contain commas.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Union

from ..errors import CommandParseError, ContractError


class ErrorType(str, Enum):
    RELATION = "Relation"
    IDENTITY = "Identity"
    ATTRIBUTE = "Attribute"
    OBJECT = "Object"

    def __str__(self):
        return self.value


PAIRWISE = (ErrorType.RELATION, ErrorType.IDENTITY)


def check_order(step_index: int) -> list[ErrorType]:
    """Categories consulted for a step, in order."""
    if step_index == 0:
        return [ErrorType.ATTRIBUTE, ErrorType.OBJECT]
    return [ErrorType.RELATION, ErrorType.IDENTITY, ErrorType.ATTRIBUTE, ErrorType.OBJECT]


def _top_level_commas(s: str) -> list[int]:
    depth, out = 0, []
    for k, ch in enumerate(s):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            out.append(k)
    return out


def _balanced(s: str) -> bool:
    depth = 0
    for ch in s:
        depth += ch == "("
        depth -= ch == ")"
        if depth < 0:
            return False
    return depth == 0


def _arg(value: str, name: str, last: bool = False) -> str:
    value = value.strip()
    if not value:
        raise ContractError(f"{name} must be non-empty")
    if not _balanced(value):
        raise ContractError(f"{name} has unbalanced parentheses: {value!r}")
    if last and _top_level_commas(value):
        raise ContractError(f"{name} may not contain a top-level comma: {value!r}")
    return value


@dataclass(frozen=True)
class Regenerate:
    new_text: str
    verb = "Regenerate"

    def __post_init__(self):
        object.__setattr__(self, "new_text", _arg(self.new_text, "new_text"))

    def serialize(self) -> str:
        return f"Regenerate({self.new_text})"


@dataclass(frozen=True)
class Modify:
    object_in_current: str
    object_in_previous: str
    verb = "Modify"

    def __post_init__(self):
        object.__setattr__(self, "object_in_current", _arg(self.object_in_current, "object_in_current"))
        object.__setattr__(self, "object_in_previous", _arg(self.object_in_previous, "object_in_previous", last=True))

    def serialize(self) -> str:
        return f"Modify({self.object_in_current}, {self.object_in_previous})"


@dataclass(frozen=True)
class Add:
    new_description: str
    object_in_current: str
    verb = "Add"

    def __post_init__(self):
        object.__setattr__(self, "new_description", _arg(self.new_description, "new_description"))
        object.__setattr__(self, "object_in_current", _arg(self.object_in_current, "object_in_current", last=True))

    def serialize(self) -> str:
        return f"Add({self.new_description}, {self.object_in_current})"


@dataclass(frozen=True)
class Remove:
    object_in_current: str
    verb = "Remove"

    def __post_init__(self):
        object.__setattr__(self, "object_in_current", _arg(self.object_in_current, "object_in_current"))

    def serialize(self) -> str:
        return f"Remove({self.object_in_current})"


@dataclass(frozen=True)
class NoError:
    verb = "NoError"

    def serialize(self) -> str:
        return "NoError"


ToolCommand = Union[Regenerate, Modify, Add, Remove, NoError]

EXPECTED_VERB = {
    ErrorType.RELATION: Regenerate,
    ErrorType.IDENTITY: Modify,
    ErrorType.ATTRIBUTE: Add,
    ErrorType.OBJECT: Remove,
}

_VERB = re.compile(r"\b(regenerate|modify|add|remove)\s*\(", re.IGNORECASE)
_ANY_CALL = re.compile(r"\b([A-Za-z_]\w*)\s*\(")
_NO_ERROR = re.compile(r"\bno[\s_-]*errors?\b|\bcorrect\b", re.IGNORECASE)


def parse_command(text: str) -> ToolCommand:
    raw = text
    if not isinstance(text, str):
        raise CommandParseError("command must be text", raw)
    m = _VERB.search(text)
    if m is None:
        if _NO_ERROR.search(text):
            return NoError()
        other = _ANY_CALL.search(text)
        if other:
            raise CommandParseError(f"unrecognized verb {other.group(1)!r}", raw)
        raise CommandParseError("no command found", raw)
    verb = m.group(1).lower()
    start = m.end()
    depth, close = 1, None
    for k in range(start, len(text)):
        ch = text[k]
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                close = k
                break
    if close is None:
        raise CommandParseError("unbalanced parentheses", raw)
    args = text[start:close]
    try:
        if verb == "regenerate":
            return Regenerate(args)
        if verb == "remove":
            return Remove(args)
        commas = _top_level_commas(args)
        if not commas:
            raise CommandParseError(f"{verb.capitalize()} needs two arguments", raw)
        first, second = args[: commas[-1]], args[commas[-1] + 1 :]
        if verb == "modify":
            return Modify(first, second)
        return Add(first, second)
    except ContractError as exc:
        raise CommandParseError(str(exc), raw) from None


def serialize_command(cmd: ToolCommand) -> str:
    return cmd.serialize()

"""Exception hierarchy shared across the package.

CLI exit codes map onto these: validation problems exit 1, backend problems
exit 2, anything else exits 3.
"""


class VisInstructError(Exception):
    exit_code = 3


class ConfigurationError(VisInstructError):
    exit_code = 1


class ContractError(VisInstructError, ValueError):
    """A caller violated an operation's precondition (shapes, ranges)."""

    exit_code = 3


class OutOfRangeError(ContractError):
    pass


class ValidationError(VisInstructError):
    exit_code = 1

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems or [])

    def __str__(self):
        base = super().__str__()
        if not self.problems:
            return base
        return base + "\n" + "\n".join(f"  - {p}" for p in self.problems)


class CalibrationMismatchError(VisInstructError):
    """A memory trace does not cover the timesteps a sampling loop visits."""


class CalibrationError(VisInstructError):
    pass


class CommandParseError(VisInstructError):
    def __init__(self, message, raw):
        super().__init__(f"{message}: {raw!r}")
        self.raw = raw


class BackendError(VisInstructError):
    exit_code = 2


class BackendUnavailableError(BackendError):
    def __init__(self, message, attempts=0):
        super().__init__(message)
        self.attempts = attempts


class MockScriptMismatch(BackendError):
    """Strict mock received a request no script entry matches."""


class TaskAborted(VisInstructError):
    exit_code = 2

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class ReplayDivergence(VisInstructError):
    exit_code = 1

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index

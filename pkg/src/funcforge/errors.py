"""Exception taxonomy shared across the package."""

from __future__ import annotations


class FuncforgeError(Exception):
    """Base class for all package errors."""


# --- function registry ---------------------------------------------------


class RegistryError(FuncforgeError):
    """A function-set mutation or validation failed.

    The message is human-readable and safe to feed back to the optimizer
    LLM as a tool result.
    """


class DuplicateName(RegistryError):
    pass


class UnknownName(RegistryError):
    pass


class InvalidSpec(RegistryError):
    pass


class FunctionSetParseError(FuncforgeError):
    """A function-set file could not be parsed."""


# --- action protocol ------------------------------------------------------


class ActionParseError(FuncforgeError):
    """A tool call could not be turned into a valid optimizer action."""


class UnknownAction(ActionParseError):
    pass


class MissingField(ActionParseError):
    pass


class UnparseableReply(FuncforgeError):
    """The optimizer reply was neither a tool call nor TERMINATE."""


class ProtocolError(FuncforgeError):
    """The optimizer produced unparseable output even after a reprompt."""


# --- backend --------------------------------------------------------------


class BackendError(FuncforgeError):
    """Transport-level failure talking to the model service."""

    def __init__(self, message: str, status_code: int | None = None):
        super().__init__(message)
        self.status_code = status_code


class CassetteExhausted(FuncforgeError):
    pass


class CassetteMiss(FuncforgeError):
    pass


# --- agent harness --------------------------------------------------------


class ReactParseError(FuncforgeError):
    """A ReAct reply did not follow the transcript template."""


class MalformedTranscript(ReactParseError):
    pass


class MissingInput(ReactParseError):
    pass


class AgentError(FuncforgeError):
    """Irrecoverable harness failure during evaluation."""


# --- prompts --------------------------------------------------------------


class MissingPlaceholder(FuncforgeError):
    pass


# --- datasets -------------------------------------------------------------


class DatasetParseError(FuncforgeError):
    pass


class DuplicateId(DatasetParseError):
    pass


class SizeError(FuncforgeError):
    pass


# --- theory ---------------------------------------------------------------


class DomainError(FuncforgeError):
    pass


# --- executor -------------------------------------------------------------


class ExecutorError(FuncforgeError):
    """The executor process could not be started or is unusable."""
